#pragma once

// Sample records, embedding bundles and dataset manifests.
//
// Records:   one JSON object per line (UTF-8).
// Bundles:   "RSEB" | u32 version=1 | u32 dim | u64 count |
//            count x { u16 key_len | key bytes | dim x f32 }   (little-endian, no padding)
// Manifest:  JSON naming the record file and one entry per embedding table.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "redemption/error.hpp"

namespace redemption {

namespace fs = std::filesystem;

struct Sample {
  std::string sample_id;
  std::string image_id;
  std::string candidate;
  std::vector<std::string> references;
  std::optional<double> human_rating;
  std::optional<std::string> model_tag;
  std::map<std::string, double> scalar_channels;
};

enum class TableRole { image, candidate, generated_candidate, generated_reference, reference_text, scalar };
enum class KeySpace { sample_id, image_id, reference };

inline std::string_view to_string(TableRole r) {
  switch (r) {
    case TableRole::image: return "image";
    case TableRole::candidate: return "candidate";
    case TableRole::generated_candidate: return "generated-candidate";
    case TableRole::generated_reference: return "generated-reference";
    case TableRole::reference_text: return "reference-text";
    case TableRole::scalar: return "scalar";
  }
  return "?";
}

inline TableRole parse_table_role(std::string_view s) {
  for (auto r : {TableRole::image, TableRole::candidate, TableRole::generated_candidate, TableRole::generated_reference,
                 TableRole::reference_text, TableRole::scalar})
    if (to_string(r) == s) return r;
  throw InputError("unknown table role '" + std::string(s) + "'");
}

inline std::string_view to_string(KeySpace k) {
  switch (k) {
    case KeySpace::sample_id: return "sample_id";
    case KeySpace::image_id: return "image_id";
    case KeySpace::reference: return "reference";
  }
  return "?";
}

inline KeySpace parse_key_space(std::string_view s) {
  for (auto k : {KeySpace::sample_id, KeySpace::image_id, KeySpace::reference})
    if (to_string(k) == s) return k;
  throw InputError("unknown key space '" + std::string(s) + "'");
}

inline KeySpace default_key_space(TableRole r) {
  switch (r) {
    case TableRole::image:
    case TableRole::generated_reference: return KeySpace::image_id;
    case TableRole::reference_text: return KeySpace::reference;
    default: return KeySpace::sample_id;
  }
}

/// Conventional table names the scoring channels look up.
namespace tables {
inline constexpr std::string_view clip_image = "clip_image";
inline constexpr std::string_view clip_text = "clip_text";
inline constexpr std::string_view dino_image = "dino_image";
inline constexpr std::string_view dino_gen_candidate = "dino_gen_candidate";
inline constexpr std::string_view dino_gen_reference = "dino_gen_reference";
inline constexpr std::string_view gte_candidate = "gte_candidate";
inline constexpr std::string_view gte_reference = "gte_reference";
}  // namespace tables

/// Join key of `sample` in the given key space. Reference keys are
/// `image_id + "#" + index`.
inline std::string join_key(const Sample& s, KeySpace space, std::size_t reference_index = 0) {
  switch (space) {
    case KeySpace::sample_id: return s.sample_id;
    case KeySpace::image_id: return s.image_id;
    case KeySpace::reference: return s.image_id + "#" + std::to_string(reference_index);
  }
  return {};
}

/// Fixed-dimension vectors keyed by string, stored as f32 in insertion order.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::string name, std::size_t dim) : name_(std::move(name)), dim_(dim) {
    if (dim_ == 0) throw InputError("table '" + name_ + "': dim must be positive");
  }

  void add(std::string key, std::span<const float> v) {
    if (v.size() != dim_)
      throw InputError("table '" + name_ + "': vector for '" + key + "' has length " + std::to_string(v.size()) +
                       ", expected " + std::to_string(dim_));
    for (float c : v)
      if (!std::isfinite(c)) throw InputError("table '" + name_ + "': non-finite component in '" + key + "'");
    if (key.size() > 0xFFFF) throw InputError("table '" + name_ + "': key longer than 65535 bytes");
    if (!index_.emplace(key, keys_.size()).second)
      throw InputError("table '" + name_ + "': duplicate key '" + key + "'");
    keys_.push_back(std::move(key));
    data_.insert(data_.end(), v.begin(), v.end());
  }

  void add(std::string key, std::span<const double> v) {
    std::vector<float> f(v.begin(), v.end());
    add(std::move(key), std::span<const float>(f));
  }

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return keys_.size(); }
  [[nodiscard]] const std::vector<std::string>& keys() const { return keys_; }
  [[nodiscard]] bool contains(std::string_view key) const { return index_.find(key) != index_.end(); }

  [[nodiscard]] std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  [[nodiscard]] std::optional<std::span<const float>> find(std::string_view key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return row(it->second);
  }

  [[nodiscard]] std::span<const float> at(std::string_view key) const {
    if (auto v = find(key)) return *v;
    throw MissingDataError("table '" + name_ + "': no entry for key '" + std::string(key) + "'");
  }

  /// Throws unless every vector has |norm - 1| <= tol.
  void check_unit_norm(double tol = 1e-3) const {
    for (std::size_t i = 0; i < size(); ++i) {
      double sq = 0.0;
      for (float c : row(i)) sq += static_cast<double>(c) * c;
      const double norm = std::sqrt(sq);
      if (std::abs(norm - 1.0) > tol)
        throw InputError("table '" + name_ + "': vector '" + keys_[i] + "' has norm " + std::to_string(norm) +
                         ", expected unit norm");
    }
  }

 private:
  std::string name_;
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<float> data_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// ---------------------------------------------------------------------------
// Little-endian primitives shared by the bundle and stats containers.

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <class T>
T get_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw InputError(what + ": truncated");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
  return static_cast<T>(u);
}

inline void put_f32(std::ostream& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::istream& in, const std::string& what) {
  return std::bit_cast<float>(get_le<std::uint32_t>(in, what));
}
inline void put_f64(std::ostream& out, double d) { put_le(out, std::bit_cast<std::uint64_t>(d)); }
inline double get_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
  std::array<char, 4> m{};
  if (!in.read(m.data(), 4) || std::string_view(m.data(), 4) != magic)
    throw InputError(what + ": bad magic, expected '" + std::string(magic) + "'");
}

}  // namespace detail

inline constexpr std::string_view kBundleMagic = "RSEB";
inline constexpr std::uint32_t kBundleVersion = 1;

inline void write_bundle(std::ostream& out, const EmbeddingTable& table) {
  out.write(kBundleMagic.data(), 4);
  detail::put_le<std::uint32_t>(out, kBundleVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
  detail::put_le<std::uint64_t>(out, table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& key = table.keys()[i];
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    for (float c : table.row(i)) detail::put_f32(out, c);
  }
}

inline void write_bundle(const fs::path& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open bundle for writing: " + path.string());
  write_bundle(out, table);
  if (!out) throw InputError("failed writing bundle: " + path.string());
}

inline EmbeddingTable read_bundle(std::istream& in, std::string name, const std::string& origin = "bundle") {
  detail::expect_magic(in, kBundleMagic, origin);
  if (const auto v = detail::get_le<std::uint32_t>(in, origin); v != kBundleVersion)
    throw InputError(origin + ": unsupported bundle version " + std::to_string(v));
  const auto dim = detail::get_le<std::uint32_t>(in, origin);
  const auto count = detail::get_le<std::uint64_t>(in, origin);
  EmbeddingTable table(std::move(name), dim);
  std::vector<float> buf(dim);
  std::string key;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto len = detail::get_le<std::uint16_t>(in, origin);
    key.assign(len, '\0');
    if (len > 0 && !in.read(key.data(), len)) throw InputError(origin + ": truncated key");
    for (auto& c : buf) c = detail::get_f32(in, origin);
    try {
      table.add(key, std::span<const float>(buf));
    } catch (const InputError& e2) {
      throw InputError(origin + ": " + e2.what());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw InputError(origin + ": trailing bytes after last entry");
  return table;
}

inline EmbeddingTable read_bundle(const fs::path& path, std::string name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing bundle file: " + path.string());
  return read_bundle(in, std::move(name), "bundle " + path.string());
}

// ---------------------------------------------------------------------------
// Records

inline nlohmann::ordered_json to_json(const Sample& s) {
  nlohmann::ordered_json j;
  j["sample_id"] = s.sample_id;
  j["image_id"] = s.image_id;
  j["candidate"] = s.candidate;
  j["references"] = s.references;
  j["human_rating"] = s.human_rating ? nlohmann::ordered_json(*s.human_rating) : nlohmann::ordered_json(nullptr);
  j["model_tag"] = s.model_tag ? nlohmann::ordered_json(*s.model_tag) : nlohmann::ordered_json(nullptr);
  j["scalar_channels"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.scalar_channels) j["scalar_channels"][k] = v;
  return j;
}

inline void validate_sample(const Sample& s) {
  if (s.sample_id.empty()) throw InputError("record with empty sample_id");
  if (s.references.empty()) throw InputError("sample '" + s.sample_id + "': references must be non-empty");
  if (s.human_rating && (!std::isfinite(*s.human_rating) || *s.human_rating < 1.0 || *s.human_rating > 4.0))
    throw InputError("sample '" + s.sample_id + "': human_rating must be finite and in [1, 4]");
  for (const auto& [k, v] : s.scalar_channels)
    if (!std::isfinite(v)) throw InputError("sample '" + s.sample_id + "': scalar channel '" + k + "' is not finite");
}

inline Sample sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("record is not an object");
  Sample s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.image_id = j.at("image_id").get<std::string>();
  s.candidate = j.at("candidate").get<std::string>();
  s.references = j.at("references").get<std::vector<std::string>>();
  if (auto it = j.find("human_rating"); it != j.end() && !it->is_null()) s.human_rating = it->get<double>();
  if (auto it = j.find("model_tag"); it != j.end() && !it->is_null()) s.model_tag = it->get<std::string>();
  if (auto it = j.find("scalar_channels"); it != j.end() && !it->is_null())
    for (const auto& [k, v] : it->items()) {
      if (!v.is_number()) throw InputError("scalar channel '" + k + "' is not a number");
      s.scalar_channels[k] = v.get<double>();
    }
  validate_sample(s);
  return s;
}

inline std::vector<Sample> read_records(std::istream& in, const std::string& origin = "records") {
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(origin + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    } catch (const InputError& e) {
      throw InputError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Sample> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing record file: " + path.string());
  return read_records(in, path.string());
}

inline void write_records(std::ostream& out, const std::vector<Sample>& samples) {
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Dataset + manifest

struct TableSpec {
  std::string name;
  TableRole role = TableRole::image;
  KeySpace key_space = KeySpace::image_id;
  std::string bundle;  // relative to the manifest directory
  std::size_t dim = 0;
  bool unit_norm = true;
};

struct Dataset {
  std::string name;
  std::vector<Sample> samples;
  std::map<std::string, EmbeddingTable, std::less<>> tables;
  std::map<std::string, TableSpec, std::less<>> specs;
  nlohmann::json provenance = nlohmann::json::object();

  [[nodiscard]] const EmbeddingTable& table(std::string_view name) const {
    auto it = tables.find(name);
    if (it == tables.end()) throw MissingDataError("dataset has no embedding table '" + std::string(name) + "'");
    return it->second;
  }
  [[nodiscard]] const TableSpec& spec(std::string_view name) const {
    auto it = specs.find(name);
    if (it == specs.end()) throw MissingDataError("dataset has no table spec '" + std::string(name) + "'");
    return it->second;
  }
  [[nodiscard]] bool has_table(std::string_view name) const { return tables.find(name) != tables.end(); }

  /// Embedding of `sample` in table `name`, keyed per the table's key space.
  [[nodiscard]] std::optional<std::span<const float>> lookup(std::string_view name, const Sample& s,
                                                             std::size_t reference_index = 0) const {
    auto t = tables.find(name);
    if (t == tables.end()) return std::nullopt;
    return t->second.find(join_key(s, spec(name).key_space, reference_index));
  }
};

inline void check_unique_ids(const std::vector<Sample>& samples) {
  std::map<std::string_view, int> seen;
  for (const auto& s : samples)
    if (!seen.emplace(s.sample_id, 0).second) throw InputError("duplicate sample_id '" + s.sample_id + "'");
}

inline Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw InputError("missing manifest: " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();

  Dataset ds;
  try {
    ds.name = m.value("name", manifest_path.stem().string());
    if (auto it = m.find("provenance"); it != m.end()) ds.provenance = *it;
    ds.samples = read_records(base / m.at("records").get<std::string>());
    check_unique_ids(ds.samples);

    for (const auto& c : m.value("tables", nlohmann::json::array())) {
      TableSpec spec;
      spec.name = c.at("name").get<std::string>();
      spec.role = parse_table_role(c.at("role").get<std::string>());
      spec.key_space = c.contains("key_space") ? parse_key_space(c.at("key_space").get<std::string>())
                                               : default_key_space(spec.role);
      spec.unit_norm = c.value("unit_norm", true);
      if (spec.role == TableRole::scalar) {
        ds.specs.emplace(spec.name, spec);
        continue;
      }
      spec.bundle = c.at("bundle").get<std::string>();
      spec.dim = c.at("dim").get<std::size_t>();
      const fs::path bundle_path = base / spec.bundle;
      EmbeddingTable table = read_bundle(bundle_path, spec.name);
      if (table.dim() != spec.dim)
        throw InputError("bundle " + bundle_path.string() + " (table '" + spec.name + "'): manifest declares dim " +
                         std::to_string(spec.dim) + " but bundle header has dim " + std::to_string(table.dim()));
      if (spec.unit_norm) {
        try {
          table.check_unit_norm();
        } catch (const InputError& e) {
          throw InputError("bundle " + bundle_path.string() + ": " + e.what());
        }
      }
      if (ds.tables.count(spec.name)) throw InputError("manifest lists table '" + spec.name + "' twice");
      ds.specs.emplace(spec.name, spec);
      ds.tables.emplace(spec.name, std::move(table));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("manifest " + manifest_path.string() + ": " + e.what());
  }
  return ds;
}

/// Writes records, bundles and manifest under `dir`; load_dataset(returned path)
/// reproduces the dataset.
inline fs::path save_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "records.jsonl", std::ios::trunc);
    if (!out) throw InputError("cannot write records under " + dir.string());
    write_records(out, ds.samples);
  }
  nlohmann::ordered_json m;
  m["name"] = ds.name;
  m["records"] = "records.jsonl";
  m["tables"] = nlohmann::ordered_json::array();
  for (const auto& [name, spec] : ds.specs) {
    nlohmann::ordered_json c;
    c["name"] = name;
    c["role"] = std::string(to_string(spec.role));
    c["key_space"] = std::string(to_string(spec.key_space));
    if (spec.role != TableRole::scalar) {
      const auto& table = ds.table(name);
      const std::string file = spec.bundle.empty() ? name + ".rseb" : spec.bundle;
      write_bundle(dir / file, table);
      c["bundle"] = file;
      c["dim"] = table.dim();
      c["unit_norm"] = spec.unit_norm;
    }
    m["tables"].push_back(c);
  }
  m["provenance"] = nlohmann::ordered_json::parse(ds.provenance.dump());
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest, std::ios::trunc);
  out << m.dump(2) << '\n';
  return manifest;
}

// ---------------------------------------------------------------------------
// Filters

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\n\r\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

/// Drops samples whose trimmed candidate equals any trimmed reference
/// (case-sensitive). Returns the filtered dataset and the number removed.
inline std::pair<Dataset, std::size_t> filter_identity_pairs(const Dataset& ds) {
  Dataset out = ds;
  out.samples.clear();
  std::size_t removed = 0;
  for (const auto& s : ds.samples) {
    const auto cand = trim(s.candidate);
    bool identical = false;
    for (const auto& r : s.references)
      if (trim(r) == cand) {
        identical = true;
        break;
      }
    if (identical)
      ++removed;
    else
      out.samples.push_back(s);
  }
  return {std::move(out), removed};
}

enum class JoinMode { strict, skip };

struct MissingEntry {
  std::string sample_id;
  std::string channel;
  std::string key;
};

struct JoinReport {
  Dataset retained;
  std::vector<MissingEntry> missing;
  std::size_t dropped = 0;
};

/// Checks that every sample has an entry in each required table (by the
/// table's key space) or, for names that are not tables, a scalar channel
/// of that name. Strict mode throws on the first report with misses; skip
/// mode drops the affected samples.
inline JoinReport validate_join(const Dataset& ds, const std::vector<std::string>& required,
                                JoinMode mode = JoinMode::strict) {
  JoinReport report;
  report.retained = ds;
  report.retained.samples.clear();
  for (const auto& s : ds.samples) {
    bool ok = true;
    for (const auto& name : required) {
      std::string key;
      bool present = false;
      if (auto t = ds.tables.find(name); t != ds.tables.end()) {
        key = join_key(s, ds.spec(name).key_space);
        present = t->second.contains(key);
      } else {
        key = "scalar_channels." + name;
        present = s.scalar_channels.count(name) > 0;
      }
      if (!present) {
        ok = false;
        report.missing.push_back({s.sample_id, name, key});
      }
    }
    if (ok)
      report.retained.samples.push_back(s);
    else
      ++report.dropped;
  }
  if (mode == JoinMode::strict && !report.missing.empty()) {
    std::ostringstream msg;
    msg << report.missing.size() << " missing input(s); first: sample '" << report.missing.front().sample_id
        << "' channel '" << report.missing.front().channel << "' key '" << report.missing.front().key << "'";
    throw MissingDataError(msg.str());
  }
  return report;
}

}  // namespace redemption
