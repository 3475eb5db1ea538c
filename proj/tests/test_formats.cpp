#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "hdp/analysis.hpp"
#include "hdp/error.hpp"
#include "hdp/imaging.hpp"
#include "hdp/io_util.hpp"
#include "hdp/partition.hpp"
#include "hdp/pipeline.hpp"
#include "hdp/tnsr.hpp"
#include "hdp/training.hpp"
#include "oracles.hpp"

namespace hdp {
namespace {

std::filesystem::path scratch(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::path(HDP_TEST_TMP) / "formats";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(TnsrTest, EncodesKnownBytes) {
  TnsrFile f;
  f.add("ab", {2}, {1.0f, -2.0f});
  const std::vector<std::uint8_t> expected = {
      'T', 'N', 'S', 'R', 1, 0, 0, 0, 1, 0, 0, 0,   // magic, version, count
      2, 0, 'a', 'b',                               // name
      1, 2, 0, 0, 0,                                // ndim, dims
      0,                                            // dtype
      0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  EXPECT_EQ(f.encode(), expected);
  EXPECT_EQ(TnsrFile::decode(expected), f);
}

TEST(TnsrTest, RoundTripsThroughDisk) {
  std::mt19937_64 rng(31);
  TnsrFile f;
  f.add("w", oracle::random_tensor(Shape{2, 3, 3, 3}, rng));
  f.add("b", {4}, {0.5f, -0.25f, 0.0f, 3.0f});
  f.add("scalar", {}, {7.0f});
  const auto path = scratch("roundtrip.tnsr");
  f.save(path);
  const TnsrFile back = TnsrFile::load(path);
  EXPECT_EQ(back, f);
  EXPECT_EQ(back.encode(), f.encode());
  EXPECT_EQ(back.tensor("b").shape(), (Shape{1, 1, 1, 4}));
  EXPECT_EQ(back.tensor("w"), f.tensor("w"));
}

TEST(TnsrTest, RejectsMalformedInput) {
  TnsrFile f;
  f.add("x", {3}, {1.0f, 2.0f, 3.0f});
  std::vector<std::uint8_t> bytes = f.encode();
  for (std::size_t cut : {std::size_t{3}, std::size_t{11}, std::size_t{15}, bytes.size() - 1}) {
    EXPECT_THROW(TnsrFile::decode(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + cut)), FormatError)
        << cut;
  }
  std::vector<std::uint8_t> magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(TnsrFile::decode(magic), FormatError);
  std::vector<std::uint8_t> version = bytes;
  version[4] = 2;
  EXPECT_THROW(TnsrFile::decode(version), FormatError);
  std::vector<std::uint8_t> dtype = bytes;
  dtype[4 + 4 + 4 + 2 + 1 + 1 + 4] = 1;
  EXPECT_THROW(TnsrFile::decode(dtype), FormatError);
  std::vector<std::uint8_t> trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(TnsrFile::decode(trailing), FormatError);
}

TEST(TnsrTest, RejectsDuplicatesAndMissing) {
  TnsrFile f;
  f.add("x", {1}, {1.0f});
  EXPECT_THROW(f.add("x", {1}, {2.0f}), ParamError);
  EXPECT_THROW(f.add("y", {2}, {2.0f}), ShapeError);
  EXPECT_THROW(f.get("z"), FormatError);
  EXPECT_THROW(TnsrFile::load(scratch("absent.tnsr")), IoError);
}

TEST(PpmTest, EncodesKnownBytes) {
  Image img(1, 2);
  img.at(0, 0, 0) = 1.0f;
  img.at(1, 0, 0) = 0.5f;
  img.at(2, 0, 0) = 0.0f;
  img.at(0, 0, 1) = -0.3f;
  img.at(1, 0, 1) = 1.7f;
  img.at(2, 0, 1) = 0.2f;
  const std::string header = "P6\n2 1\n255\n";
  std::vector<std::uint8_t> expected(header.begin(), header.end());
  for (int v : {255, 128, 0, 0, 255, 51}) expected.push_back(static_cast<std::uint8_t>(v));
  EXPECT_EQ(encode_ppm(img), expected);
}

TEST(PpmTest, ByteRoundTrip) {
  std::mt19937_64 rng(32);
  const Image img = oracle::random_image(9, 13, rng);
  const auto bytes = encode_ppm(img);
  const Image back = decode_ppm(bytes);
  EXPECT_EQ(back.height(), 9u);
  EXPECT_EQ(back.width(), 13u);
  EXPECT_EQ(encode_ppm(back), bytes);
  for (std::size_t i = 0; i < img.data().size(); ++i) EXPECT_NEAR(back.data()[i], img.data()[i], 0.5 / 255.0 + 1e-6);
  const auto path = scratch("img.ppm");
  write_ppm(path, back);
  EXPECT_EQ(read_bytes(path), bytes);
}

TEST(PpmTest, AcceptsCommentsInHeader) {
  const std::string text = "P6\n# made by hand\n1 1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.insert(bytes.end(), {0, 255, 0});
  EXPECT_EQ(decode_ppm(bytes).at(1, 0, 0), 1.0f);
}

TEST(PpmTest, RejectsMalformedInput) {
  auto bytes_of = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  EXPECT_THROW(decode_ppm(bytes_of("P3\n1 1\n255\n\x01\x02\x03")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n1 1\n65535\n\x01\x02\x03")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n2 1\n255\n\x01\x02\x03")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n0 1\n255\n")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("")), FormatError);
}

TEST(LabelsTest, RoundTrip) {
  const std::vector<SceneLabel> labels = {{0, 1, 2, 3, 4}, {4, 60, 10, 12, 30}};
  const std::string text = format_labels(labels);
  EXPECT_EQ(text, "0 1 2 3 4\n4 60 10 12 30\n");
  EXPECT_EQ(parse_labels(text), labels);
  EXPECT_EQ(format_labels(parse_labels(text)), text);
  EXPECT_THROW(parse_labels("1 2 3\n"), FormatError);
}

TEST(IndexTest, RoundTrip) {
  Patch a;
  a.image_id = "u0003";
  a.x = 64;
  a.y = 0;
  a.size = 64;
  a.mean_transmission = 0.3125f;
  a.tag = SourceTag::kUnderwater;
  Patch b = a;
  b.image_id = "f0001";
  b.mean_transmission = 0.1f;
  b.tag = SourceTag::kFriendly;
  const std::string text = format_index({a, b});
  const auto back = parse_index(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
  EXPECT_EQ(format_index(back), text);
  EXPECT_THROW(parse_index("u 1 2 3 0.5\n"), FormatError);
  EXPECT_THROW(parse_index("u 1 2 0 0.5 U\n"), FormatError);
}

TEST(ReportTest, RoundTrip) {
  TrainReport r;
  r.stage = "stage1";
  r.seed = 11;
  r.trace = {0.5, 0.25, 0.1 + 0.2};
  r.config = {{"lr", "0.002"}, {"batch", "2"}};
  r.metrics = {{"smoothed_start", "0.4"}};
  const std::string text = format_report(r);
  const TrainReport back = parse_report(text);
  EXPECT_EQ(back.trace, r.trace);
  EXPECT_EQ(back.stage, "stage1");
  EXPECT_EQ(back.seed, 11u);
  EXPECT_EQ(back.config, r.config);
  EXPECT_EQ(back.metric("smoothed_start"), "0.4");
  EXPECT_EQ(format_report(back), text);
  r.seed = 18446744073709551615ULL;
  EXPECT_EQ(parse_report(format_report(r)).seed, r.seed);
  EXPECT_THROW(parse_report("# iter\tloss\n0\t1\n"), FormatError);
  EXPECT_THROW(parse_report("# iter\tloss\n1\t1\n# summary\n"), FormatError);
}

TEST(GapReportFormatTest, RoundTrip) {
  GapReport r;
  r.mmd_hd_u_f = 0.84;
  r.mmd_hd_tu_f = 0.27;
  r.bandwidth = 3.5;
  r.n_hd_f = 10;
  r.n_hd_u = 12;
  r.n_hd_tu = 12;
  r.n_ld_f = 1;
  r.n_ld_u = 40;
  r.verdict = true;
  r.margin = 0.57;
  r.margin_null_p95 = 0.06;
  r.margin_p_value = 0.001;
  r.permutations = 999;
  const std::string text = format_gap_report(r);
  EXPECT_EQ(parse_gap_report(text), r);
  EXPECT_EQ(format_gap_report(parse_gap_report(text)), text);
  r.mmd_ld_u_f = 0.02;
  r.margin.reset();
  r.margin_null_p95.reset();
  r.margin_p_value.reset();
  EXPECT_EQ(parse_gap_report(format_gap_report(r)), r);
}

TEST(EmbeddingFormatTest, RoundTrip) {
  const std::vector<EmbeddingPoint> pts = {{1.5, -2.25, "HD_F"}, {0.1, 1e-9, "HD_TU"}};
  const std::string text = format_embedding(pts);
  EXPECT_EQ(text.rfind("# x\ty\ttag\n", 0), 0u);
  EXPECT_EQ(parse_embedding(text), pts);
  EXPECT_EQ(format_embedding(parse_embedding(text)), text);
  EXPECT_THROW(parse_embedding("1\t2\n"), FormatError);
}

TEST(SweepFormatTest, RoundTripWithSkippedRows) {
  SweepRow skipped;
  skipped.threshold = 0.1;
  skipped.skipped = true;
  skipped.note = "empty_HD";
  skipped.ld_u = 30;
  skipped.ld_f = 20;
  SweepRow done;
  done.threshold = 0.7;
  done.hd_u = 40;
  done.hd_f = 12;
  done.ld_u = 8;
  done.ld_f = 3;
  done.smoothed_kl = 0.04;
  done.verdict = true;
  done.mmd_hd_u_f = 0.9;
  done.mmd_hd_tu_f = 0.3;
  done.accuracy = 0.6;
  done.control_accuracy = 0.55;
  const std::string text = format_sweep({skipped, done});
  const auto back = parse_sweep(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(back[0].skipped);
  EXPECT_EQ(back[0].note, "empty_HD");
  EXPECT_EQ(back[0].threshold, 0.1);
  EXPECT_EQ(back[1], done);
  EXPECT_EQ(format_sweep(back), text);
}

TEST(KeyValuesTest, RoundTrip) {
  const std::vector<std::pair<std::string, std::string>> kv = {{"b", "2"}, {"a", "x y"}};
  const std::string text = format_key_values(kv);
  EXPECT_EQ(parse_key_values(text), kv);
  EXPECT_EQ(format_key_values(parse_key_values(text)), text);
  EXPECT_THROW(parse_key_values("novalue\n"), FormatError);
}

}  // namespace
}  // namespace hdp
