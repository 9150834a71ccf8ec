#pragma once

#include "redemption/ablation.hpp"
#include "redemption/calibration.hpp"
#include "redemption/channels.hpp"
#include "redemption/data_model.hpp"
#include "redemption/error.hpp"
#include "redemption/fraction.hpp"
#include "redemption/fusion.hpp"
#include "redemption/gaussian.hpp"
#include "redemption/rank_stats.hpp"
#include "redemption/report.hpp"
