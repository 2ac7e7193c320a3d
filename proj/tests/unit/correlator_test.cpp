// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "rosetta/correlator.hpp"
#include "test_util.hpp"

namespace rosetta {
namespace {

using testing::TempDir;
using testing::error_kind_of;
using testing::random_values;
using testing::stats_against;
using testing::write_dump;

// Fully materialized maps of one unit at `target`, instance-major.
std::vector<float> materialize(const DumpManifest& m, const UnitId& u, Resolution target) {
  const MapBatch b = read_layer_batch(m, u.layer, {0, m.instance_count});
  std::vector<float> out;
  for (std::int64_t i = 0; i < m.instance_count; ++i) {
    const Map r = bilinear_resize(b.map_copy(i, u.channel), target);
    out.insert(out.end(), r.values.begin(), r.values.end());
  }
  return out;
}

// Textbook two-pass Pearson in long double.
double naive_pearson(const std::vector<float>& x, const std::vector<float>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

struct Pair {
  TempDir dir_a, dir_b;
  DumpManifest a, b;
};

std::unique_ptr<Pair> make_pair(std::int64_t n, const std::vector<LayerSpec>& la, const std::vector<LayerSpec>& lb,
                                std::uint64_t seed) {
  auto p = std::make_unique<Pair>();
  std::vector<std::vector<float>> va, vb;
  for (std::size_t l = 0; l < la.size(); ++l)
    va.push_back(random_values(static_cast<std::size_t>(n) * la[l].channels * la[l].height * la[l].width, seed + l));
  for (std::size_t l = 0; l < lb.size(); ++l)
    vb.push_back(
        random_values(static_cast<std::size_t>(n) * lb[l].channels * lb[l].height * lb[l].width, seed + 100 + l));
  p->a = write_dump(p->dir_a.path(), "a", ModelKind::generative, la, va, 7);
  p->b = write_dump(p->dir_b.path(), "b", ModelKind::discriminative, lb, vb, 5);
  return p;
}

TEST(PearsonPair, FourPointExample) {
  const std::vector<float> x = {1, 2, 3, 4}, y = {1, 3, 2, 4};
  const UnitStats sx{{"a", 0, 0}, {2, 2}, 2.5, 5.0 / 3.0, 4};
  const UnitStats sy{{"b", 0, 0}, {2, 2}, 2.5, 5.0 / 3.0, 4};
  EXPECT_NEAR(pearson_pair(x, y, sx, sy), 0.8, 1e-15);
  EXPECT_NEAR(naive_pearson(x, y), 0.8, 1e-15);
  EXPECT_NEAR(pearson_pair(x, x, sx, sx), 1.0, 1e-15);
  const UnitStats flat{{"b", 0, 1}, {2, 2}, 1.0, 0.0, 4};
  EXPECT_EQ(error_kind_of([&] { pearson_pair(x, y, sx, flat); }), ErrorKind::ZeroVariance);
}

TEST(Policy, TargetsAndNames) {
  const ResolutionPolicy pm;
  EXPECT_EQ(pm.target({4, 8}, {16, 2}), (Resolution{16, 8}));
  const ResolutionPolicy gg = parse_policy("global-grid", 8);
  EXPECT_EQ(gg.target({4, 4}, {32, 32}), (Resolution{8, 8}));
  EXPECT_EQ(to_string(gg), "global-grid:8");
  EXPECT_EQ(parse_policy("global-grid:8"), gg);
  EXPECT_EQ(parse_policy(to_string(pm)), pm);
  EXPECT_EQ(error_kind_of([] { parse_policy("nearest"); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(error_kind_of([] { parse_policy("global-grid"); }), ErrorKind::InvalidArgument);
}

TEST(KnnBuilder, TiesGoToSmallerUnit) {
  KnnBuilder b("a", "b", 2);
  b.offer(0, 0, {1, 5, 0.5, {1, 1}});
  b.offer(0, 0, {0, 9, 0.5, {1, 1}});
  b.offer(0, 0, {1, 2, 0.5, {1, 1}});
  b.offer(0, 0, {2, 0, 0.4, {1, 1}});
  const KnnTable t = std::move(b).finish();
  ASSERT_EQ(t.entries.size(), 1u);
  const auto& nb = t.entries[0].neighbors;
  ASSERT_EQ(nb.size(), 2u);
  EXPECT_EQ(std::pair(nb[0].layer, nb[0].channel), std::pair(0, 9));
  EXPECT_EQ(std::pair(nb[1].layer, nb[1].channel), std::pair(1, 2));
}

TEST(KnnBuilder, DuplicateOfferKeepsBetter) {
  KnnBuilder b("a", "b", 3);
  b.offer(0, 0, {0, 1, 0.2, {2, 2}});
  b.offer(0, 0, {0, 1, 0.7, {4, 4}});
  b.offer(0, 0, {0, 1, 0.1, {8, 8}});
  b.touch(0, 1);
  const KnnTable t = std::move(b).finish();
  ASSERT_EQ(t.entries.size(), 2u);
  ASSERT_EQ(t.entries[0].neighbors.size(), 1u);
  EXPECT_EQ(t.entries[0].neighbors[0].r, 0.7);
  EXPECT_EQ(t.entries[0].neighbors[0].resolution, (Resolution{4, 4}));
  EXPECT_TRUE(t.entries[1].neighbors.empty());
}

TEST(KnnBuilder, AscendingRank) {
  KnnBuilder b("a", "b", 1, RankOrder::ascending);
  b.offer(0, 0, {0, 1, 0.2, {1, 1}});
  b.offer(0, 0, {0, 2, -0.9, {1, 1}});
  EXPECT_EQ(std::move(b).finish().entries[0].neighbors[0].channel, 2);
}

TEST(Correlate, MatchesNaiveOracleOnEveryPair) {
  const auto p = make_pair(12, {{"a0", 7, 4, 4, Dtype::f32}, {"a1", 5, 2, 3, Dtype::f16}},
                           {{"b0", 9, 3, 3, Dtype::f32}, {"b1", 4, 4, 4, Dtype::f32}}, 40);
  const StatsTable sa = stats_against(p->a, p->b), sb = stats_against(p->b, p->a);
  std::vector<CorrelationRecord> records;
  CorrelateOptions opt;
  opt.k = 3;
  opt.record_sink = [&](const CorrelationRecord& r) { records.push_back(r); };
  const CorrelationResult result = correlate_models(p->a, p->b, sa, sb, opt);
  ASSERT_EQ(records.size(), 12u * 13u);
  for (const auto& r : records) {
    const Resolution target = opt.policy.target(p->a.layer(r.unit_a.layer).resolution(),
                                                p->b.layer(r.unit_b.layer).resolution());
    EXPECT_EQ(r.resolution, target);
    const double expected = naive_pearson(materialize(p->a, r.unit_a, target), materialize(p->b, r.unit_b, target));
    EXPECT_NEAR(r.r, expected, 1e-9) << to_string(r.unit_a) << " " << to_string(r.unit_b);
  }
  EXPECT_EQ(result.a_to_b, top_k_filter(records, 3));
  EXPECT_EQ(result.a_to_b.entries.size(), 12u);
  EXPECT_EQ(result.b_to_a.entries.size(), 13u);
  EXPECT_EQ(result.b_to_a.source_model, "b");
}

TEST(Correlate, GlobalGridPolicy) {
  const auto p = make_pair(6, {{"a0", 3, 2, 2, Dtype::f32}}, {{"b0", 3, 8, 8, Dtype::f32}}, 5);
  CorrelateOptions opt;
  opt.policy = parse_policy("global-grid", 4);
  const StatsTable sa = stats_against(p->a, p->b, opt.policy), sb = stats_against(p->b, p->a, opt.policy);
  std::vector<CorrelationRecord> records;
  opt.record_sink = [&](const CorrelationRecord& r) { records.push_back(r); };
  correlate_models(p->a, p->b, sa, sb, opt);
  for (const auto& r : records) {
    EXPECT_EQ(r.resolution, (Resolution{4, 4}));
    EXPECT_NEAR(r.r, naive_pearson(materialize(p->a, r.unit_a, {4, 4}), materialize(p->b, r.unit_b, {4, 4})), 1e-9);
  }
}

TEST(Correlate, TilingAndThreadsDoNotChangeOutput) {
  const auto p = make_pair(10, {{"a0", 40, 4, 4, Dtype::f32}}, {{"b0", 33, 4, 4, Dtype::f32}}, 77);
  const StatsTable sa = stats_against(p->a, p->b), sb = stats_against(p->b, p->a);
  CorrelateOptions base;
  base.batch_size = 3;
  const CorrelationResult ref = correlate_models(p->a, p->b, sa, sb, base);
  EXPECT_EQ(ref.passes, 1);

  CorrelateOptions tight = base;
  tight.mem_cap_bytes = 30000;
  tight.threads = 3;
  const CorrelationResult tiled = correlate_models(p->a, p->b, sa, sb, tight);
  EXPECT_GT(tiled.passes, 1);
  EXPECT_LE(tiled.peak_bytes, tight.mem_cap_bytes);
  EXPECT_EQ(tiled.a_to_b, ref.a_to_b);
  EXPECT_EQ(tiled.b_to_a, ref.b_to_a);

  CorrelateOptions batched = base;
  batched.batch_size = 10;
  const CorrelationResult whole = correlate_models(p->a, p->b, sa, sb, batched);
  for (std::size_t e = 0; e < ref.a_to_b.entries.size(); ++e)
    for (std::size_t j = 0; j < ref.a_to_b.entries[e].neighbors.size(); ++j)
      EXPECT_NEAR(whole.a_to_b.entries[e].neighbors[j].r, ref.a_to_b.entries[e].neighbors[j].r, 1e-12);
}

TEST(Correlate, OutOfBudget) {
  const auto p = make_pair(10, {{"a0", 8, 4, 4, Dtype::f32}}, {{"b0", 8, 4, 4, Dtype::f32}}, 3);
  const StatsTable sa = stats_against(p->a, p->b), sb = stats_against(p->b, p->a);
  CorrelateOptions opt;
  opt.mem_cap_bytes = 1024;
  EXPECT_EQ(error_kind_of([&] { correlate_models(p->a, p->b, sa, sb, opt); }), ErrorKind::OutOfBudget);
}

TEST(Correlate, ZeroVarianceUnitsAreExcluded) {
  TempDir da, db;
  const int n = 8;
  std::vector<float> va = random_values(static_cast<std::size_t>(n) * 3 * 4, 1);
  for (int i = 0; i < n; ++i)
    for (int x = 0; x < 4; ++x) va[static_cast<std::size_t>(i * 12 + 4 + x)] = 0.5f;  // channel 1 constant
  const auto a = write_dump(da.path(), "a", ModelKind::generative, {{"l", 3, 2, 2, Dtype::f32}}, {va}, 4);
  const auto b = write_dump(db.path(), "b", ModelKind::discriminative, {{"l", 2, 2, 2, Dtype::f32}},
                            {random_values(static_cast<std::size_t>(n) * 8, 2)}, 4);
  const CorrelationResult r = correlate_models(a, b, stats_against(a, b), stats_against(b, a), {});
  ASSERT_EQ(r.excluded_a.size(), 1u);
  EXPECT_EQ(r.excluded_a[0], (UnitId{"a", 0, 1}));
  EXPECT_EQ(r.a_to_b.find(0, 1), nullptr);
  for (const auto& e : r.b_to_a.entries) {
    ASSERT_EQ(e.neighbors.size(), 2u);
    for (const auto& nb : e.neighbors) EXPECT_NE(nb.channel, 1);
  }
}

TEST(Correlate, SelfMatchRanksEachUnitFirst) {
  const auto p = make_pair(8, {{"a0", 6, 3, 3, Dtype::f32}}, {{"b0", 1, 1, 2, Dtype::f32}}, 9);
  const StatsTable s = stats_against(p->a, p->a);
  CorrelateOptions opt;
  opt.k = 2;
  const CorrelationResult r = correlate_models(p->a, p->a, s, s, opt);
  for (const auto& e : r.a_to_b.entries) {
    EXPECT_EQ(e.neighbors[0].channel, e.channel);
    EXPECT_NEAR(e.neighbors[0].r, 1.0, 1e-12);
  }
  EXPECT_EQ(r.a_to_b, r.b_to_a);
}

TEST(Correlate, InputChecks) {
  const auto p = make_pair(8, {{"a0", 2, 2, 2, Dtype::f32}}, {{"b0", 2, 2, 2, Dtype::f32}}, 1);
  const auto q = make_pair(9, {{"a0", 2, 2, 2, Dtype::f32}}, {{"b0", 2, 2, 2, Dtype::f32}}, 1);
  const StatsTable sa = stats_against(p->a, p->b), sb = stats_against(p->b, p->a);
  EXPECT_EQ(error_kind_of([&] { correlate_models(p->a, q->b, sa, stats_against(q->b, p->a), {}); }),
            ErrorKind::InstanceCountMismatch);
  DumpManifest other = p->b;
  other.dataset_id = "elsewhere";
  EXPECT_EQ(error_kind_of([&] { correlate_models(p->a, other, sa, sb, {}); }), ErrorKind::InconsistentRun);
  EXPECT_EQ(error_kind_of([&] { correlate_models(p->a, p->b, StatsTable{}, sb, {}); }), ErrorKind::MissingStats);
  StatsTable stale;
  for (const auto& [key, s] : sa.entries()) {
    UnitStats t = s;
    t.sample_count += 1;
    stale.insert(t);
  }
  EXPECT_EQ(error_kind_of([&] { correlate_models(p->a, p->b, stale, sb, {}); }), ErrorKind::InconsistentRun);
}

TEST(Correlate, AscendingRankListsMostNegative) {
  const auto p = make_pair(10, {{"a0", 5, 3, 3, Dtype::f32}}, {{"b0", 6, 3, 3, Dtype::f32}}, 12);
  const StatsTable sa = stats_against(p->a, p->b), sb = stats_against(p->b, p->a);
  std::vector<CorrelationRecord> records;
  CorrelateOptions opt;
  opt.k = 2;
  opt.rank = RankOrder::ascending;
  opt.record_sink = [&](const CorrelationRecord& r) { records.push_back(r); };
  const CorrelationResult r = correlate_models(p->a, p->b, sa, sb, opt);
  EXPECT_EQ(r.a_to_b, top_k_filter(records, 2, RankOrder::ascending));
  for (const auto& e : r.a_to_b.entries) EXPECT_LE(e.neighbors[0].r, e.neighbors[1].r);
}

TEST(RequiredResolutions, PairwiseMax) {
  const auto p = make_pair(2, {{"a0", 1, 4, 4, Dtype::f32}, {"a1", 1, 16, 16, Dtype::f32}},
                           {{"b0", 1, 8, 8, Dtype::f32}}, 1);
  const auto req = required_resolutions(p->a, p->b, {});
  ASSERT_EQ(req.size(), 2u);
  EXPECT_EQ(req[0], (std::pair<int, Resolution>{0, {8, 8}}));
  EXPECT_EQ(req[1], (std::pair<int, Resolution>{1, {16, 16}}));
}

}  // namespace
}  // namespace rosetta
