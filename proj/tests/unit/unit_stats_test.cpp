// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rosetta/json_util.hpp"
#include "rosetta/unit_stats.hpp"
#include "test_util.hpp"

namespace rosetta {
namespace {

using testing::TempDir;
using testing::error_kind_of;
using testing::random_values;
using testing::write_dump;

// Two-pass long double reference over resized maps.
std::pair<long double, long double> oracle(const std::vector<float>& values, int n, int channels, int channel,
                                           Resolution native, Resolution target) {
  std::vector<float> samples;
  const auto cells = static_cast<std::size_t>(native.cells());
  for (int i = 0; i < n; ++i) {
    const auto at = (static_cast<std::size_t>(i) * channels + channel) * cells;
    const Map m(native, std::vector<float>(values.begin() + at, values.begin() + at + cells));
    const Map r = bilinear_resize(m, target);
    samples.insert(samples.end(), r.values.begin(), r.values.end());
  }
  long double sum = 0;
  for (float v : samples) sum += v;
  const long double mean = sum / samples.size();
  long double ss = 0;
  for (float v : samples) ss += (v - mean) * (v - mean);
  return {mean, ss / (samples.size() - 1)};
}

TEST(Stats, TwoInstancesOfOneCell) {
  TempDir tmp;
  const DumpManifest m =
      write_dump(tmp.path(), "m", ModelKind::discriminative, {{"x", 1, 1, 1, Dtype::f32}}, {{1.0f, 3.0f}}, 1);
  const auto s = accumulate_stats(m, 0, {1, 1}, 1);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].mean, 2.0);
  EXPECT_EQ(s[0].variance, 2.0);
  EXPECT_EQ(s[0].sample_count, 2);
}

TEST(Stats, AllZeroUnit) {
  TempDir tmp;
  const DumpManifest m = write_dump(tmp.path(), "m", ModelKind::discriminative, {{"x", 1, 2, 2, Dtype::f32}},
                                    {std::vector<float>(12, 0.0f)}, 2);
  const auto s = accumulate_stats(m, 0, {4, 4}, 2);
  EXPECT_EQ(s[0].mean, 0.0);
  EXPECT_EQ(s[0].variance, 0.0);
  EXPECT_EQ(s[0].sample_count, 3 * 16);
}

TEST(Stats, ConstantUnitHasZeroVariance) {
  TempDir tmp;
  const DumpManifest m = write_dump(tmp.path(), "m", ModelKind::discriminative, {{"x", 1, 3, 3, Dtype::f32}},
                                    {std::vector<float>(45, 0.3f)}, 2);
  const auto s = accumulate_stats(m, 0, {3, 3}, 4);
  EXPECT_EQ(s[0].mean, static_cast<double>(0.3f));
  EXPECT_EQ(s[0].variance, 0.0);
}

TEST(Stats, MatchesBruteForceOracle) {
  TempDir tmp;
  const int n = 32, channels = 5;
  const Resolution native{6, 6};
  const auto values = random_values(static_cast<std::size_t>(n) * channels * 36, 99, -1.0f, 4.0f);
  const DumpManifest m = write_dump(tmp.path(), "m", ModelKind::discriminative,
                                    {{"x", channels, native.height, native.width, Dtype::f32}}, {values}, 7);
  for (Resolution target : {native, Resolution{8, 8}, Resolution{3, 5}}) {
    const auto stats = accumulate_stats(m, 0, target, 5);
    for (int c = 0; c < channels; ++c) {
      const auto [mean, var] = oracle(values, n, channels, c, native, target);
      EXPECT_NEAR(stats[static_cast<std::size_t>(c)].mean, static_cast<double>(mean), 1e-9);
      EXPECT_NEAR(stats[static_cast<std::size_t>(c)].variance, static_cast<double>(var), 1e-9);
      EXPECT_EQ(stats[static_cast<std::size_t>(c)].resolution, target);
      EXPECT_EQ(stats[static_cast<std::size_t>(c)].sample_count, n * target.cells());
    }
  }
}

TEST(Stats, BatchSizeAndThreadsDoNotMatter) {
  TempDir tmp;
  const int n = 17;
  const auto values = random_values(static_cast<std::size_t>(n) * 4 * 16, 7);
  const DumpManifest m =
      write_dump(tmp.path(), "m", ModelKind::discriminative, {{"x", 4, 4, 4, Dtype::f32}}, {values}, 5);
  const auto one = accumulate_stats(m, 0, {8, 8}, 1);
  const auto all = accumulate_stats(m, 0, {8, 8}, n, 3);
  for (std::size_t c = 0; c < one.size(); ++c) {
    EXPECT_NEAR(one[c].mean, all[c].mean, 1e-6 * std::abs(all[c].mean));
    EXPECT_NEAR(one[c].variance, all[c].variance, 1e-6 * all[c].variance);
  }
  EXPECT_EQ(accumulate_stats(m, 0, {8, 8}, 4, 1), accumulate_stats(m, 0, {8, 8}, 4, 4));
}

TEST(Stats, AffineCovariance) {
  TempDir a, b;
  const int n = 20;
  const auto values = random_values(static_cast<std::size_t>(n) * 16, 13);
  std::vector<float> moved(values.size());
  std::transform(values.begin(), values.end(), moved.begin(), [](float v) { return 3.0f * v - 1.0f; });
  const LayerSpec spec{"x", 1, 4, 4, Dtype::f32};
  const auto s = accumulate_stats(write_dump(a.path(), "m", ModelKind::discriminative, {spec}, {values}, 8), 0,
                                  {4, 4}, 8)[0];
  const auto t = accumulate_stats(write_dump(b.path(), "m", ModelKind::discriminative, {spec}, {moved}, 8), 0,
                                  {4, 4}, 8)[0];
  EXPECT_NEAR(t.mean, 3.0 * s.mean - 1.0, 1e-6 * std::abs(t.mean));
  EXPECT_NEAR(t.variance, 9.0 * s.variance, 1e-6 * t.variance);
}

TEST(Stats, InstancePermutationInvariance) {
  TempDir a, b;
  const int n = 24;
  const auto values = random_values(static_cast<std::size_t>(n) * 2 * 9, 31);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::rotate(order.begin(), order.begin() + 5, order.end());
  std::vector<float> shuffled;
  for (int i : order) shuffled.insert(shuffled.end(), values.begin() + i * 18, values.begin() + (i + 1) * 18);
  const LayerSpec spec{"x", 2, 3, 3, Dtype::f32};
  const auto s = accumulate_stats(write_dump(a.path(), "m", ModelKind::discriminative, {spec}, {values}, 5), 0,
                                  {5, 5}, 3);
  const auto t = accumulate_stats(write_dump(b.path(), "m", ModelKind::discriminative, {spec}, {shuffled}, 5), 0,
                                  {5, 5}, 3);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_NEAR(s[c].mean, t[c].mean, 1e-9);
    EXPECT_NEAR(s[c].variance, t[c].variance, 1e-9);
  }
}

TEST(Stats, DegenerateSampleCount) {
  TempDir tmp;
  const DumpManifest m =
      write_dump(tmp.path(), "m", ModelKind::discriminative, {{"x", 1, 1, 1, Dtype::f32}}, {{2.0f}}, 1);
  EXPECT_EQ(error_kind_of([&] { accumulate_stats(m, 0, {1, 1}, 1); }), ErrorKind::DegenerateSampleCount);
  EXPECT_EQ(accumulate_stats(m, 0, {2, 1}, 1)[0].variance, 0.0);
}

TEST(Stats, RejectsNonMiningActivationPoint) {
  TempDir tmp;
  DumpManifest m =
      write_dump(tmp.path(), "m", ModelKind::discriminative, {{"x", 1, 1, 1, Dtype::f32}}, {{1.0f, 2.0f}}, 1);
  m.activation_point = "pre_nonlinearity";
  EXPECT_EQ(error_kind_of([&] { accumulate_stats(m, 0, {1, 1}, 1); }), ErrorKind::SchemaViolation);
}

TEST(StatsTable, LookupAndMissing) {
  StatsTable t;
  const UnitStats s{{"m", 0, 3}, {8, 8}, 0.25, 1.5, 640};
  t.insert(s);
  EXPECT_EQ(t.stats_for({"m", 0, 3}, {8, 8}), s);
  EXPECT_EQ(error_kind_of([&] { t.stats_for({"m", 0, 3}, {4, 4}); }), ErrorKind::MissingStats);
  EXPECT_EQ(t.find({"m", 0, 2}, {8, 8}), nullptr);
  EXPECT_EQ(error_kind_of([&] { t.insert(s); }), ErrorKind::SchemaViolation);
}

TEST(StatsTable, JsonRoundTripIsBitExact) {
  TempDir tmp;
  StatsTable t;
  t.insert({{"m", 0, 0}, {8, 8}, 0.1, 1.0 / 3.0, 640});
  t.insert({{"m", 1, 2}, {4, 4}, -1e-300, 5e-324, 160});
  t.insert({{"m", 0, 0}, {16, 16}, 123456789.123456789, 2.0 / 7.0, 2560});
  write_stats_json(t, tmp / "stats.json");
  const StatsTable back = read_stats_json(tmp / "stats.json");
  ASSERT_EQ(back.size(), t.size());
  for (const auto& [key, s] : t.entries()) EXPECT_EQ(back.stats_for(s.unit, s.resolution), s);

  const auto doc = json_util::read_file(tmp / "stats.json");
  ASSERT_TRUE(doc.is_array());
  for (const char* key : {"model_id", "layer", "channel", "height", "width", "mean", "variance", "sample_count"})
    EXPECT_TRUE(doc[0].contains(key)) << key;
}

TEST(StatsTable, RejectsNegativeVariance) {
  TempDir tmp;
  json_util::write_text(tmp / "stats.json",
                        R"([{"model_id":"m","layer":0,"channel":0,"height":1,"width":1,"mean":0,)"
                        R"("variance":-1,"sample_count":4}])");
  EXPECT_EQ(error_kind_of([&] { read_stats_json(tmp / "stats.json"); }), ErrorKind::SchemaViolation);
}

}  // namespace
}  // namespace rosetta
