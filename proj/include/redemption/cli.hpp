#pragma once

// Command-line front end: validate, score, calibrate, bootstrap, ablate, report.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "redemption/ablation.hpp"
#include "redemption/calibration.hpp"
#include "redemption/channels.hpp"
#include "redemption/data_model.hpp"
#include "redemption/fusion.hpp"
#include "redemption/gaussian.hpp"
#include "redemption/parallel.hpp"
#include "redemption/rank_stats.hpp"
#include "redemption/report.hpp"

namespace redemption::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kInputError = 2, kNotSignificant = 3 };

struct RunConfig {
  std::string manifest;
  std::string channels = "mid,dino,gte";
  std::string weights;
  bool calibrate_first = false;
  std::string min_weight = "0.15";
  std::string weight_step = "0.05";
  std::string lambda_step = "0.1";
  std::string aggregation = "first";
  std::string join = "strict";
  bool keep_identity_pairs = false;
  std::optional<double> shrinkage;
  std::string load_stats;
  std::string save_stats;
  std::string output_dir = ".";
  std::size_t runs = 1000;
  std::uint64_t seed = 0;
  std::string variant = "tau_c";
  std::string pvalue = "normal";
  std::size_t perm_iters = 999;
  bool strict_significance = false;
  bool trace = false;
  std::string metrics = "rs";
  std::string pool = "mid,gte,dino,bert,lpips,clip";
  bool bootstrap = false;
  unsigned workers = 0;
  std::string input;

  [[nodiscard]] ojson to_json() const {
    ojson j;
    j["manifest"] = manifest;
    j["channels"] = channels;
    j["weights"] = weights;
    j["calibrate"] = calibrate_first;
    j["min_weight"] = min_weight;
    j["weight_step"] = weight_step;
    j["lambda_step"] = lambda_step;
    j["aggregation"] = aggregation;
    j["join"] = join;
    j["keep_identity_pairs"] = keep_identity_pairs;
    j["shrinkage"] = shrinkage ? ojson(*shrinkage) : ojson(nullptr);
    j["load_stats"] = load_stats;
    j["runs"] = runs;
    j["seed"] = seed;
    j["variant"] = variant;
    j["pvalue"] = pvalue;
    j["perm_iters"] = perm_iters;
    j["metrics"] = metrics;
    j["pool"] = pool;
    j["bootstrap"] = bootstrap;
    return j;
  }
};

namespace detail {

struct Prepared {
  Dataset dataset;
  std::size_t excluded_identity = 0;
  JoinReport join;
  ChannelSet channels;
  std::map<std::string, double> ratings;
};

inline GridSpec grid_spec(const RunConfig& c) {
  GridSpec s;
  s.min_weight = parse_fraction(c.min_weight);
  s.weight_step = parse_fraction(c.weight_step);
  s.lambda_step = parse_fraction(c.lambda_step);
  grid_units(s);
  return s;
}

inline PValueMethod p_method(const RunConfig& c) {
  if (c.pvalue == "normal") return NormalApprox{};
  if (c.pvalue == "permutation") return Permutation{c.perm_iters, c.seed};
  throw InputError("--pvalue must be normal or permutation");
}

inline CalibrationOptions calibration_options(const RunConfig& c) {
  CalibrationOptions o;
  o.p_method = p_method(c);
  o.workers = c.workers;
  return o;
}

inline Prepared prepare(const RunConfig& c, const std::vector<Channel>& wanted, std::ostream& log) {
  if (c.manifest.empty()) throw InputError("--manifest is required");
  Prepared p;
  Dataset ds = load_dataset(c.manifest);
  if (!c.keep_identity_pairs) {
    auto [filtered, removed] = filter_identity_pairs(ds);
    ds = std::move(filtered);
    p.excluded_identity = removed;
  }
  const JoinMode mode = c.join == "skip" ? JoinMode::skip : JoinMode::strict;
  if (c.join != "skip" && c.join != "strict") throw InputError("--join must be strict or skip");
  p.join = validate_join(ds, required_inputs(wanted), mode);
  p.dataset = p.join.retained;
  log << "dataset '" << p.dataset.name << "': " << p.dataset.samples.size() << " samples retained, "
      << p.excluded_identity << " identity pairs excluded, " << p.join.dropped << " dropped for missing inputs\n";

  BuildOptions bo;
  bo.aggregation = parse_ref_aggregation(c.aggregation);
  bo.shrinkage = c.shrinkage;
  const bool needs_mid = std::find(wanted.begin(), wanted.end(), Channel::mid) != wanted.end();
  if (needs_mid && !c.load_stats.empty()) bo.mid_stats = load_stats(c.load_stats);
  if (needs_mid && !bo.mid_stats && !p.dataset.samples.empty()) {
    bo.mid_stats = fit_gaussian_stats(p.dataset, c.shrinkage);
    log << "gaussian fit: n=" << bo.mid_stats->n_fit() << " shrinkage=" << bo.mid_stats->shrinkage_used()
        << " I(X;Y)=" << mutual_information(*bo.mid_stats) << " nats\n";
  }
  if (needs_mid && bo.mid_stats && !c.save_stats.empty()) save_stats(c.save_stats, *bo.mid_stats);
  p.channels = build_channels(p.dataset, wanted, bo);
  for (const auto& s : p.dataset.samples)
    if (s.human_rating) p.ratings.emplace(s.sample_id, *s.human_rating);
  return p;
}

inline ojson artifact(std::string_view kind, const RunConfig& c, ojson result) {
  ojson j;
  j["tool"] = std::string(kToolName);
  j["version"] = std::string(kToolVersion);
  j["kind"] = std::string(kind);
  j["config"] = c.to_json();
  j["result"] = std::move(result);
  return j;
}

inline fs::path out_path(const RunConfig& c, const std::string& file) {
  fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir / file;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

inline std::vector<Channel> with(std::vector<Channel> a, const Selection& s) {
  for (auto ch : s)
    if (std::find(a.begin(), a.end(), ch) == a.end()) a.push_back(ch);
  return a;
}

// --- subcommands ----------------------------------------------------------

inline int cmd_validate(const RunConfig& c, std::ostream& out) {
  const auto wanted = parse_channel_list(c.channels);
  Dataset ds = load_dataset(c.manifest);
  std::size_t removed = 0;
  if (!c.keep_identity_pairs) std::tie(ds, removed) = filter_identity_pairs(ds);
  const auto rep = validate_join(ds, required_inputs(wanted), JoinMode::skip);
  out << "dataset '" << ds.name << "': " << ds.samples.size() << " samples, " << ds.tables.size() << " tables, "
      << removed << " identity pairs excluded\n";
  for (const auto& [name, table] : ds.tables)
    out << "  table " << name << ": dim " << table.dim() << ", " << table.size() << " entries\n";
  ojson missing = ojson::array();
  for (const auto& m : rep.missing) {
    out << "  missing: sample '" << m.sample_id << "' channel '" << m.channel << "' key '" << m.key << "'\n";
    missing.push_back({{"sample_id", m.sample_id}, {"channel", m.channel}, {"key", m.key}});
  }
  ojson result;
  result["samples"] = ds.samples.size();
  result["identity_pairs_excluded"] = removed;
  result["missing"] = missing;
  write_text(out_path(c, "validate.json"), artifact("validate", c, result).dump(2) + "\n");
  if (!rep.missing.empty() && c.join == "strict") {
    out << rep.missing.size() << " missing input(s)\n";
    return kInputError;
  }
  out << "ok\n";
  return kOk;
}

inline int cmd_score(const RunConfig& c, std::ostream& out) {
  const Selection sel = parse_selection(c.channels);
  auto p = prepare(c, {sel.begin(), sel.end()}, out);
  FusionWeights w = c.weights.empty() ? FusionWeights::defaults() : parse_weights(c.weights);
  if (c.calibrate_first) {
    const auto cal = calibrate(p.channels, sel, p.ratings, grid_spec(c), calibration_options(c));
    w = cal.best;
    out << "calibrated weights " << format_weights(w) << " tau " << fmt_percent(cal.best_tau) << "\n";
  }
  const ScoreVector sv = score_dataset(p.channels, sel, w);
  std::ostringstream body;
  for (std::size_t i = 0; i < sv.rs.size(); ++i) {
    ojson line;
    line["sample_id"] = sv.sample_ids[i];
    for (std::size_t k = 0; k < 3; ++k) line["z_" + std::string(to_string(sel[k]))] = sv.z[i][k];
    line["rs"] = sv.rs[i];
    body << line.dump() << '\n';
  }
  ojson summary;
  summary["weights"] = to_json(sv.weights);
  summary["channels"] = selection_name(sel);
  summary["mean"] = sv.mean;
  summary["n"] = sv.rs.size();
  summary["identity_pairs_excluded"] = p.excluded_identity;
  if (!p.ratings.empty() && p.ratings.size() >= 2) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < sv.rs.size(); ++i)
      if (auto it = p.ratings.find(sv.sample_ids[i]); it != p.ratings.end()) {
        xs.push_back(sv.rs[i]);
        ys.push_back(it->second);
      }
    try {
      summary["tau_c"] = kendall_tau(xs, ys, TauVariant::tau_c).tau;
    } catch (const DegenerateDataError&) {
      summary["tau_c"] = nullptr;
    }
  }
  body << ojson{{"summary", artifact("score", c, summary)}}.dump() << '\n';
  const auto path = out_path(c, "scores.jsonl");
  write_text(path, body.str());
  out << "scored " << sv.rs.size() << " samples with " << format_weights(w) << ", mean RS " << fmt_score(sv.mean)
      << " -> " << path.string() << "\n";
  return kOk;
}

inline int cmd_calibrate(const RunConfig& c, std::ostream& out) {
  const Selection sel = parse_selection(c.channels);
  const GridSpec spec = grid_spec(c);
  auto p = prepare(c, {sel.begin(), sel.end()}, out);
  const auto res = calibrate(p.channels, sel, p.ratings, spec, calibration_options(c));
  write_text(out_path(c, "calibration.json"), artifact("calibration", c, to_json(res, c.trace)).dump(2) + "\n");
  const std::string table = render_calibration_table(res);
  write_text(out_path(c, "calibration.txt"), table);
  if (c.trace) {
    std::ostringstream tsv;
    tsv << "alpha\tbeta\tgamma\tlambda\ttau\n";
    for (const auto& g : res.grid_trace)
      tsv << fmt_weight(g.weights.alpha()) << '\t' << fmt_weight(g.weights.beta()) << '\t'
          << fmt_weight(g.weights.gamma()) << '\t' << fmt_weight(g.weights.lambda()) << '\t' << fmt("%.10f", g.tau)
          << '\n';
    write_text(out_path(c, "grid_trace.tsv"), tsv.str());
  }
  out << "evaluated " << res.grid_trace.size() << " grid points on " << p.ratings.size() << " rated samples\n"
      << table << "best " << format_weights(res.best) << " tau " << fmt_percent(res.best_tau) << " p "
      << fmt("%.3g", res.p_value) << (res.significant ? "" : " (not significant)") << "\n";
  if (!res.significant && c.strict_significance) return kNotSignificant;
  return kOk;
}

inline int cmd_bootstrap(const RunConfig& c, std::ostream& out) {
  const Selection sel = parse_selection(c.channels);
  std::vector<std::string> metrics;
  {
    std::stringstream ss(c.metrics);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!trim(tok).empty()) metrics.emplace_back(trim(tok));
  }
  if (metrics.empty()) throw InputError("--metrics is empty");
  std::vector<Channel> wanted(sel.begin(), sel.end());
  for (const auto& m : metrics)
    if (m != "rs") wanted = with(wanted, {parse_channel(m), parse_channel(m), parse_channel(m)});
  auto p = prepare(c, wanted, out);
  const TauVariant variant = parse_tau_variant(c.variant);
  const FusionWeights w = c.weights.empty() ? FusionWeights::defaults() : parse_weights(c.weights);

  std::vector<std::pair<std::string, BootstrapSummary>> rows;
  ojson result = ojson::array();
  for (const auto& m : metrics) {
    std::vector<std::string> ids;
    std::vector<double> scores;
    if (m == "rs") {
      const auto sv = score_dataset(p.channels, sel, w);
      ids = sv.sample_ids;
      scores = sv.rs;
    } else {
      const auto& cv = p.channels.at(parse_channel(m));
      ids = cv.sample_ids;
      scores = cv.values;
    }
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (auto it = p.ratings.find(ids[i]); it != p.ratings.end()) {
        xs.push_back(scores[i]);
        ys.push_back(it->second);
      }
    const auto s = bootstrap_tau(xs, ys, c.runs, c.seed, variant, c.workers);
    rows.emplace_back(m, s);
    ojson e = to_json(s);
    e["metric"] = m;
    if (m == "rs") e["weights"] = to_json(w);
    result.push_back(e);
  }
  write_text(out_path(c, "bootstrap.json"), artifact("bootstrap", c, result).dump(2) + "\n");
  const std::string table = render_bootstrap_table(rows);
  write_text(out_path(c, "bootstrap.txt"), table);
  out << table;
  for (const auto& [name, s] : rows) out << name << ": " << render_bootstrap(s) << "\n";
  return kOk;
}

inline int cmd_ablate(const RunConfig& c, const std::string& mode, std::ostream& out) {
  const GridSpec spec = grid_spec(c);
  AblationOptions opts;
  opts.calibration = calibration_options(c);
  opts.seed = c.seed;
  if (c.bootstrap) opts.bootstrap_runs = c.runs;

  std::vector<AblationRow> rows;
  if (mode == "strategy") {
    const Selection sel = parse_selection(c.channels);
    auto p = prepare(c, {sel.begin(), sel.end()}, out);
    const auto r = strategy_ablation(p.channels, sel, p.ratings, spec, opts);
    rows.assign(r.begin(), r.end());
  } else {
    const auto pool = canonical_pool(parse_channel_list(c.pool));
    auto p = prepare(c, pool, out);
    rows = combination_sweep(pool, p.channels, p.ratings, spec, opts);
  }
  ojson result = ojson::array();
  for (const auto& r : rows) result.push_back(to_json(r));
  const std::string stem = "ablation_" + mode;
  write_text(out_path(c, stem + ".json"), artifact("ablation_" + mode, c, result).dump(2) + "\n");
  const std::string table = render_ablation_table(rows);
  write_text(out_path(c, stem + ".txt"), table);
  out << table;
  return kOk;
}

inline int cmd_report(const RunConfig& c, std::ostream& out) {
  std::ifstream in(c.input);
  if (!in) throw InputError("cannot read report input: " + c.input);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("report input " + c.input + ": " + e.what());
  }
  const std::string kind = j.at("kind").get<std::string>();
  const auto& result = j.at("result");
  if (kind == "calibration") {
    out << render_calibration_table(calibration_from_json(result));
  } else if (kind == "bootstrap") {
    std::vector<std::pair<std::string, BootstrapSummary>> rows;
    for (const auto& e : result) rows.emplace_back(e.at("metric").get<std::string>(), bootstrap_from_json(e));
    out << render_bootstrap_table(rows);
  } else if (kind.rfind("ablation_", 0) == 0) {
    std::vector<AblationRow> rows;
    for (const auto& e : result) rows.push_back(ablation_row_from_json(e));
    out << render_ablation_table(rows);
  } else {
    throw InputError("report: unsupported artifact kind '" + kind + "'");
  }
  return kOk;
}

}  // namespace detail

/// Runs one command line (args exclude the program name). Returns the exit code.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  RunConfig c;
  CLI::App app{"Redemption Score: hybrid caption scoring, calibration and ablation", std::string(kToolName)};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolName) + " " + std::string(kToolVersion));

  auto common = [&](CLI::App* sub) {
    sub->add_option("--manifest,-m", c.manifest, "dataset manifest (JSON)")->required();
    sub->add_option("--output-dir,-o", c.output_dir, "artifact directory");
    sub->add_option("--join", c.join, "strict | skip")->check(CLI::IsMember({"strict", "skip"}));
    sub->add_flag("--keep-identity-pairs", c.keep_identity_pairs, "do not exclude candidate == reference samples");
    sub->add_option("--aggregation", c.aggregation, "GTE reference aggregation: first | max | mean")
        ->check(CLI::IsMember({"first", "max", "mean"}));
    sub->add_option("--shrinkage", c.shrinkage, "initial covariance jitter");
    sub->add_option("--load-stats", c.load_stats, "reuse a Gaussian stats cache (RSGS)");
    sub->add_option("--save-stats", c.save_stats, "write the fitted Gaussian stats cache (RSGS)");
    sub->add_option("--workers", c.workers, "worker threads (default: $REDEMPTION_WORKERS or all cores)");
  };
  auto grid = [&](CLI::App* sub) {
    sub->add_option("--min-weight", c.min_weight, "minimum alpha/beta/gamma");
    sub->add_option("--weight-step", c.weight_step, "weight grid step");
    sub->add_option("--lambda-step", c.lambda_step, "lambda grid step");
    sub->add_option("--pvalue", c.pvalue, "normal | permutation")->check(CLI::IsMember({"normal", "permutation"}));
    sub->add_option("--perm-iters", c.perm_iters, "permutation iterations");
    sub->add_option("--seed", c.seed, "PRNG seed");
  };

  auto* validate = app.add_subcommand("validate", "load a dataset and check every channel input joins");
  common(validate);
  validate->add_option("--channels", c.channels, "channels whose inputs must be present");

  auto* score = app.add_subcommand("score", "compute per-sample Redemption Scores");
  common(score);
  grid(score);
  score->add_option("--channels", c.channels, "ordered channel triple");
  auto* wopt = score->add_option("--weights", c.weights, "alpha,beta,gamma,lambda");
  auto* copt = score->add_flag("--calibrate", c.calibrate_first, "calibrate weights on rated samples first");
  wopt->excludes(copt);

  auto* calib = app.add_subcommand("calibrate", "grid-search fusion weights against human ratings");
  common(calib);
  grid(calib);
  calib->add_option("--channels", c.channels, "ordered channel triple");
  calib->add_flag("--strict-significance", c.strict_significance, "exit 3 when the best point has p >= 0.05");
  calib->add_flag("--trace", c.trace, "write the full grid trace");

  auto* boot = app.add_subcommand("bootstrap", "bootstrap Kendall tau of RS and/or single channels");
  common(boot);
  boot->add_option("--channels", c.channels, "ordered channel triple for rs");
  boot->add_option("--weights", c.weights, "alpha,beta,gamma,lambda for rs");
  boot->add_option("--metrics", c.metrics, "comma list of rs and/or channel names");
  boot->add_option("--runs", c.runs, "bootstrap runs")->check(CLI::PositiveNumber);
  boot->add_option("--seed", c.seed, "PRNG seed");
  boot->add_option("--variant", c.variant, "tau_c | tau_b")->check(CLI::IsMember({"tau_c", "tau_b"}));

  auto* ablate = app.add_subcommand("ablate", "aggregation-strategy ablation and combination sweep");
  ablate->require_subcommand(1);
  std::string ablate_mode;
  for (const char* mode : {"strategy", "sweep"}) {
    auto* sub = ablate->add_subcommand(mode, mode == std::string("strategy")
                                                 ? "hybrid vs additive vs multiplicative"
                                                 : "every 3-channel combination of a pool");
    common(sub);
    grid(sub);
    sub->add_flag("--bootstrap", c.bootstrap, "bootstrap tau at each row's best weights");
    sub->add_option("--runs", c.runs, "bootstrap runs")->check(CLI::PositiveNumber);
    if (mode == std::string("strategy"))
      sub->add_option("--channels", c.channels, "ordered channel triple");
    else
      sub->add_option("--pool", c.pool, "channel pool");
    sub->callback([&ablate_mode, mode] { ablate_mode = mode; });
  }

  auto* report = app.add_subcommand("report", "render a JSON artifact as a text table");
  report->add_option("--input,-i", c.input, "artifact produced by another subcommand")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }
  if (c.workers == 0) c.workers = default_workers();

  try {
    if (*validate) return detail::cmd_validate(c, out);
    if (*score) return detail::cmd_score(c, out);
    if (*calib) return detail::cmd_calibrate(c, out);
    if (*boot) return detail::cmd_bootstrap(c, out);
    if (*ablate) return detail::cmd_ablate(c, ablate_mode, out);
    if (*report) return detail::cmd_report(c, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const DegenerateDataError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInputError;
}

}  // namespace redemption::cli
