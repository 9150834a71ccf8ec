#pragma once

// Synthetic datasets with every table the channels read, plus temp dirs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "redemption/data_model.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using redemption::Dataset;
using redemption::EmbeddingTable;
using redemption::KeySpace;
using redemption::Sample;
using redemption::TableRole;
using redemption::TableSpec;

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("redemption_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct SynthOptions {
  std::size_t samples = 40;
  std::size_t samples_per_image = 2;
  std::size_t references = 2;
  std::size_t dim = 6;
  std::uint64_t seed = 7;
  bool scalars = true;
  bool rated = true;
};

inline std::vector<double> unit(std::vector<double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  s = std::sqrt(s);
  for (double& c : v) c /= s;
  return v;
}

inline std::vector<double> mix(const std::vector<double>& a, double wa, std::mt19937_64& rng, double noise) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + noise * g(rng);
  return unit(out);
}

inline std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& c : v) c = g(rng);
  return unit(v);
}

inline void add_table(Dataset& ds, std::string_view name, TableRole role, std::size_t dim) {
  TableSpec spec;
  spec.name = std::string(name);
  spec.role = role;
  spec.key_space = redemption::default_key_space(role);
  spec.dim = dim;
  ds.specs.emplace(spec.name, spec);
  ds.tables.emplace(spec.name, EmbeddingTable(spec.name, dim));
}

/// Samples whose channel values all track a latent quality q in [0, 1];
/// ratings are q mapped to thirds on [1, 4].
inline Dataset synthetic_dataset(const SynthOptions& o = {}) {
  namespace t = redemption::tables;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);

  Dataset ds;
  ds.name = "synthetic";
  ds.provenance = {{"generator", "fixtures::synthetic_dataset"}, {"seed", o.seed}};
  add_table(ds, t::clip_image, TableRole::image, o.dim);
  add_table(ds, t::clip_text, TableRole::candidate, o.dim);
  add_table(ds, t::dino_image, TableRole::image, o.dim);
  add_table(ds, t::dino_gen_candidate, TableRole::generated_candidate, o.dim);
  add_table(ds, t::dino_gen_reference, TableRole::generated_reference, o.dim);
  add_table(ds, t::gte_candidate, TableRole::candidate, o.dim);
  add_table(ds, t::gte_reference, TableRole::reference_text, o.dim);

  std::vector<double> clip_img, dino_img;
  std::vector<std::vector<double>> gte_refs;
  for (std::size_t i = 0; i < o.samples; ++i) {
    const std::size_t image = i / o.samples_per_image;
    const std::string image_id = "img" + std::to_string(image);
    if (i % o.samples_per_image == 0) {
      clip_img = random_unit(o.dim, rng);
      dino_img = random_unit(o.dim, rng);
      ds.tables.at(std::string(t::clip_image)).add(image_id, std::span<const double>(clip_img));
      ds.tables.at(std::string(t::dino_image)).add(image_id, std::span<const double>(dino_img));
      const auto gen_ref = mix(dino_img, 1.0, rng, 0.5);
      ds.tables.at(std::string(t::dino_gen_reference)).add(image_id, std::span<const double>(gen_ref));
      gte_refs.clear();
      for (std::size_t r = 0; r < o.references; ++r) {
        gte_refs.push_back(random_unit(o.dim, rng));
        ds.tables.at(std::string(t::gte_reference))
            .add(image_id + "#" + std::to_string(r), std::span<const double>(gte_refs.back()));
      }
    }
    const double q = u01(rng);
    Sample s;
    s.sample_id = "s" + std::to_string(i);
    s.image_id = image_id;
    s.candidate = "candidate caption " + std::to_string(i);
    for (std::size_t r = 0; r < o.references; ++r)
      s.references.push_back("reference " + std::to_string(image) + "." + std::to_string(r));
    if (o.rated) s.human_rating = 1.0 + std::round(q * 9.0) / 3.0;
    s.model_tag = "model" + std::to_string(i % 3);
    if (o.scalars) {
      s.scalar_channels["bertscore"] = 0.4 + 0.4 * q + 0.1 * g(rng);
      s.scalar_channels["lpips"] = std::abs(0.8 * (1.0 - q) + 0.15 * g(rng));
    }
    ds.samples.push_back(s);

    const auto text = mix(clip_img, 0.2 + 2.0 * q, rng, 1.0);
    const auto gen_cand = mix(dino_img, 0.1 + 1.5 * q, rng, 1.0);
    const auto gte_cand = mix(gte_refs.front(), 0.2 + 2.5 * q, rng, 1.0);
    ds.tables.at(std::string(t::clip_text)).add(s.sample_id, std::span<const double>(text));
    ds.tables.at(std::string(t::dino_gen_candidate)).add(s.sample_id, std::span<const double>(gen_cand));
    ds.tables.at(std::string(t::gte_candidate)).add(s.sample_id, std::span<const double>(gte_cand));
  }
  return ds;
}

}  // namespace fixtures
