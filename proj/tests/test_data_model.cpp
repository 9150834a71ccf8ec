#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "redemption/data_model.hpp"
#include "support/fixtures.hpp"

using namespace redemption;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Sample make_sample(std::string id, std::string cand, std::vector<std::string> refs) {
  Sample s;
  s.sample_id = std::move(id);
  s.image_id = "img";
  s.candidate = std::move(cand);
  s.references = std::move(refs);
  return s;
}

}  // namespace

TEST(Bundle, HeaderLayoutIsLittleEndianWithoutPadding) {
  EmbeddingTable t("t", 2);
  const std::vector<float> v{1.0f, -2.0f};
  t.add("ab", std::span<const float>(v));
  std::ostringstream out;
  write_bundle(out, t);
  const std::string b = out.str();
  // magic + version + dim + count + (u16 len + "ab" + 2 floats)
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 8 + 2 + 2 + 8);
  EXPECT_EQ(b.substr(0, 4), "RSEB");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 1);
  EXPECT_EQ(static_cast<unsigned char>(b[20]), 2);
  EXPECT_EQ(b.substr(22, 2), "ab");
  // 1.0f = 0x3F800000 little-endian
  EXPECT_EQ(static_cast<unsigned char>(b[24]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(b[27]), 0x3F);
}

TEST(Bundle, ReadWriteIsByteIdentical) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 1 + rng() % 9;
    EmbeddingTable t("t", dim);
    const std::size_t count = rng() % 12;
    std::normal_distribution<float> g;
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<float> v(dim);
      for (auto& c : v) c = g(rng);
      t.add("key-" + std::to_string(i) + std::string(rng() % 4, 'x'), std::span<const float>(v));
    }
    std::ostringstream first;
    write_bundle(first, t);
    std::istringstream in(first.str());
    const auto back = read_bundle(in, "t");
    std::ostringstream second;
    write_bundle(second, back);
    EXPECT_EQ(first.str(), second.str());
  }
}

TEST(Bundle, RejectsCorruptInput) {
  EmbeddingTable t("t", 2);
  const std::vector<float> v{0.6f, 0.8f};
  t.add("a", std::span<const float>(v));
  std::ostringstream out;
  write_bundle(out, t);
  const std::string good = out.str();

  std::istringstream bad_magic("XXXX" + good.substr(4));
  EXPECT_THROW(read_bundle(bad_magic, "t"), InputError);
  std::istringstream truncated(good.substr(0, good.size() - 1));
  EXPECT_THROW(read_bundle(truncated, "t"), InputError);
  std::istringstream trailing(good + "z");
  EXPECT_THROW(read_bundle(trailing, "t"), InputError);

  std::string nan_bundle = good;
  nan_bundle[nan_bundle.size() - 1] = static_cast<char>(0x7F);
  nan_bundle[nan_bundle.size() - 2] = static_cast<char>(0xC0);
  std::istringstream nan_in(nan_bundle);
  EXPECT_THROW(read_bundle(nan_in, "t"), InputError);
}

TEST(EmbeddingTable, RejectsDuplicatesAndWrongLength) {
  EmbeddingTable t("t", 2);
  const std::vector<float> v{0.6f, 0.8f}, w{1.0f};
  t.add("a", std::span<const float>(v));
  EXPECT_THROW(t.add("a", std::span<const float>(v)), InputError);
  EXPECT_THROW(t.add("b", std::span<const float>(w)), InputError);
  EXPECT_NO_THROW(t.check_unit_norm());
  const std::vector<float> big{3.0f, 4.0f};
  t.add("c", std::span<const float>(big));
  EXPECT_THROW(t.check_unit_norm(), InputError);
}

TEST(Records, RejectInvalidFields) {
  auto parse = [](const std::string& line) {
    std::istringstream in(line);
    return read_records(in);
  };
  EXPECT_THROW(parse(R"({"sample_id":"a","image_id":"i","candidate":"c","references":[]})"), InputError);
  EXPECT_THROW(parse(R"({"sample_id":"a","image_id":"i","candidate":"c","references":["r"],"human_rating":5})"),
               InputError);
  EXPECT_THROW(parse(R"({"sample_id":"a","image_id":"i","candidate":"c","references":["r"])"), InputError);
  const auto ok = parse(
      R"({"sample_id":"a","image_id":"i","candidate":"c","references":["r"],"human_rating":2.67,"scalar_channels":{"lpips":0.25}})");
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_DOUBLE_EQ(*ok[0].human_rating, 2.67);
  EXPECT_DOUBLE_EQ(ok[0].scalar_channels.at("lpips"), 0.25);
}

TEST(LoadDataset, EmptyManifest) {
  fixtures::TempDir dir;
  std::ofstream(dir.path() / "records.jsonl").close();
  std::ofstream(dir.path() / "manifest.json") << R"({"name":"empty","records":"records.jsonl","tables":[]})";
  const auto ds = load_dataset(dir.path() / "manifest.json");
  EXPECT_TRUE(ds.samples.empty());
  EXPECT_TRUE(ds.tables.empty());
}

TEST(LoadDataset, DimMismatchNamesBundle) {
  fixtures::TempDir dir;
  auto ds = fixtures::synthetic_dataset({.samples = 4});
  const auto manifest = save_dataset(dir.path(), ds);
  auto m = nlohmann::json::parse(slurp(manifest));
  for (auto& t : m["tables"])
    if (t["name"] == "gte_candidate") t["dim"] = 1024;
  std::ofstream(manifest) << m.dump();
  try {
    load_dataset(manifest);
    FAIL() << "expected dim mismatch";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("gte_candidate.rseb"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("1024"), std::string::npos);
  }
}

TEST(LoadDataset, RoundTripThroughWriterAndLoader) {
  // Three samples, two embedding tables.
  Dataset ds;
  ds.name = "three";
  for (int i = 0; i < 3; ++i) {
    auto s = make_sample("s" + std::to_string(i), "cand " + std::to_string(i), {"ref"});
    s.image_id = "img" + std::to_string(i);
    s.human_rating = 1.0 + i;
    ds.samples.push_back(s);
  }
  fixtures::add_table(ds, tables::clip_image, TableRole::image, 3);
  fixtures::add_table(ds, tables::clip_text, TableRole::candidate, 3);
  std::mt19937_64 rng(11);
  for (const auto& s : ds.samples) {
    const auto a = fixtures::random_unit(3, rng), b = fixtures::random_unit(3, rng);
    ds.tables.at("clip_image").add(s.image_id, std::span<const double>(a));
    ds.tables.at("clip_text").add(s.sample_id, std::span<const double>(b));
  }
  fixtures::TempDir dir;
  const auto manifest = save_dataset(dir.path(), ds);
  const auto before = slurp(dir.path() / "clip_text.rseb");
  const auto loaded = load_dataset(manifest);
  EXPECT_EQ(slurp(dir.path() / "clip_text.rseb"), before);  // loading never mutates inputs
  ASSERT_EQ(loaded.samples.size(), 3u);
  ASSERT_EQ(loaded.tables.size(), 2u);
  for (const auto& s : loaded.samples) {
    ASSERT_TRUE(loaded.lookup("clip_image", s));
    ASSERT_TRUE(loaded.lookup("clip_text", s));
    const auto orig = ds.lookup("clip_text", s);
    const auto got = loaded.lookup("clip_text", s);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ((*orig)[k], (*got)[k]);
  }
}

TEST(LoadDataset, DuplicateSampleIdsRejected) {
  fixtures::TempDir dir;
  std::ofstream(dir.path() / "records.jsonl")
      << R"({"sample_id":"a","image_id":"i","candidate":"c","references":["r"]})" << "\n"
      << R"({"sample_id":"a","image_id":"j","candidate":"d","references":["r"]})" << "\n";
  std::ofstream(dir.path() / "manifest.json") << R"({"records":"records.jsonl"})";
  EXPECT_THROW(load_dataset(dir.path() / "manifest.json"), InputError);
  EXPECT_THROW(load_dataset(dir.path() / "nope.json"), InputError);
}

TEST(IdentityFilter, ExactTrimmedCaseSensitiveMatch) {
  Dataset ds;
  ds.samples.push_back(make_sample("exact", "a dog runs", {"a dog runs", "dog running"}));
  ds.samples.push_back(make_sample("case", "A dog runs", {"a dog runs"}));
  ds.samples.push_back(make_sample("space", "  a cat sits\t", {"x", "a cat sits"}));
  ds.samples.push_back(make_sample("other", "a bird", {"a cat"}));
  const auto [kept, removed] = filter_identity_pairs(ds);
  EXPECT_EQ(removed, 2u);
  ASSERT_EQ(kept.samples.size(), 2u);
  EXPECT_EQ(kept.samples[0].sample_id, "case");
  EXPECT_EQ(kept.samples[1].sample_id, "other");

  const auto [again, removed2] = filter_identity_pairs(kept);
  EXPECT_EQ(removed2, 0u);
  EXPECT_EQ(again.samples.size(), kept.samples.size());
}

TEST(ValidateJoin, ReportsAndSkipsGaps) {
  auto ds = fixtures::synthetic_dataset({.samples = 10, .samples_per_image = 1});
  const std::vector<std::string> req{"clip_image", "clip_text", "dino_gen_candidate"};
  EXPECT_TRUE(validate_join(ds, req).missing.empty());

  // Drop the generated-candidate vectors of s3 and s7 by rebuilding the table.
  EmbeddingTable gaps("dino_gen_candidate", ds.table("dino_gen_candidate").dim());
  const auto& full = ds.table("dino_gen_candidate");
  for (std::size_t i = 0; i < full.size(); ++i)
    if (full.keys()[i] != "s3" && full.keys()[i] != "s7") gaps.add(full.keys()[i], full.row(i));
  ds.tables.at("dino_gen_candidate") = gaps;

  try {
    validate_join(ds, req, JoinMode::strict);
    FAIL() << "strict join should throw";
  } catch (const MissingDataError& e) {
    EXPECT_NE(std::string(e.what()).find("s3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("dino_gen_candidate"), std::string::npos);
  }
  const auto rep = validate_join(ds, req, JoinMode::skip);
  EXPECT_EQ(rep.retained.samples.size(), 8u);
  ASSERT_EQ(rep.missing.size(), 2u);
  EXPECT_EQ(rep.missing[0].sample_id, "s3");
  EXPECT_EQ(rep.missing[1].sample_id, "s7");
  EXPECT_EQ(rep.missing[0].channel, "dino_gen_candidate");

  const auto scalar = validate_join(ds, {"not_a_scalar"}, JoinMode::skip);
  EXPECT_EQ(scalar.missing.size(), 10u);
}
