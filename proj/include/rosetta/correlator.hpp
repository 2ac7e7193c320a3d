// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-model unit correlation.
//
// For every unit u of model A and v of model B, with both maps resampled to
// a common resolution R (n instances, |R| cells each, N = n * |R| samples):
//
//   r(u, v) = sum_{i,x} (u_ix - mean_u)(v_ix - mean_v)
//             / ((N - 1) * sqrt(var_u * var_v))
//
// mean/var come from a StatsTable accumulated at R. Accumulation streams
// instance batches and runs as blocked dense products over the flattened
// (instance, cell) axis, one bucket per pair of native layer shapes.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rosetta/dump_store.hpp"
#include "rosetta/unit_stats.hpp"

namespace rosetta {

enum class PolicyMode { pairwise_max, global_grid };

struct ResolutionPolicy {
  PolicyMode mode = PolicyMode::pairwise_max;
  std::optional<int> grid_side;

  Resolution target(Resolution a, Resolution b) const;
  bool operator==(const ResolutionPolicy&) const = default;
};

std::string to_string(const ResolutionPolicy& policy);  // "pairwise-max" or "global-grid:<side>"
ResolutionPolicy parse_policy(const std::string& name, std::optional<int> grid_side = {});

// Every (layer, resolution) of `self` that a comparison against `partner`
// under `policy` needs stats for.
std::vector<std::pair<int, Resolution>> required_resolutions(const DumpManifest& self,
                                                             const DumpManifest& partner,
                                                             const ResolutionPolicy& policy);

enum class RankOrder { descending, ascending };

std::string to_string(RankOrder order);
RankOrder parse_rank(const std::string& name);

struct CorrelationRecord {
  UnitId unit_a;
  UnitId unit_b;
  double r = 0.0;
  Resolution resolution;
};

struct Neighbor {
  int layer = 0;
  int channel = 0;
  double r = 0.0;
  Resolution resolution;

  bool operator==(const Neighbor&) const = default;
};

struct KnnEntry {
  int layer = 0;
  int channel = 0;
  std::vector<Neighbor> neighbors;

  bool operator==(const KnnEntry&) const = default;
};

// Per source unit, at most k neighbors in the target model, best first.
// Ties on r go to the smaller (layer, channel) of the target.
struct KnnTable {
  std::string source_model;
  std::string target_model;
  int k = 5;
  RankOrder rank = RankOrder::descending;
  std::vector<KnnEntry> entries;  // sorted by (layer, channel)

  const KnnEntry* find(int layer, int channel) const;
  bool operator==(const KnnTable&) const = default;
};

// Streaming exact top-k with the deterministic tie-break above. Offering the
// same target twice for one source keeps the better of the two.
class KnnBuilder {
 public:
  KnnBuilder(std::string source_model, std::string target_model, int k,
             RankOrder rank = RankOrder::descending);

  void offer(int source_layer, int source_channel, const Neighbor& candidate);
  // Registers a source unit so it appears in the table even with no neighbors.
  void touch(int source_layer, int source_channel);
  KnnTable finish() &&;

 private:
  bool better(const Neighbor& a, const Neighbor& b) const;

  KnnTable table_;
  std::map<std::pair<int, int>, std::vector<Neighbor>> lists_;
};

// top-k over a finished record stream, keyed by unit_a.
KnnTable top_k_filter(std::span<const CorrelationRecord> records, int k,
                      RankOrder rank = RankOrder::descending);

// Pearson coefficient of two map stacks already resampled to the resolution
// of their stats entries. Both spans hold the same (instance, cell) samples.
double pearson_pair(std::span<const float> maps_a, std::span<const float> maps_b,
                    const UnitStats& stats_a, const UnitStats& stats_b);

struct CorrelateOptions {
  ResolutionPolicy policy;
  int k = 5;
  std::int64_t batch_size = 64;
  std::uint64_t mem_cap_bytes = std::uint64_t{2} << 30;
  int threads = 1;
  RankOrder rank = RankOrder::descending;
  // Optional observer of every finished r value, in a fixed order.
  std::function<void(const CorrelationRecord&)> record_sink;
};

struct CorrelationResult {
  KnnTable a_to_b;
  KnnTable b_to_a;
  // Units skipped because their variance is zero at a comparison resolution.
  std::vector<UnitId> excluded_a;
  std::vector<UnitId> excluded_b;
  std::uint64_t peak_bytes = 0;  // accumulators plus one batch of packed panels
  int passes = 0;                // streaming passes over the dumps (tiles)
};

CorrelationResult correlate_models(const DumpManifest& a, const DumpManifest& b,
                                   const StatsTable& stats_a, const StatsTable& stats_b,
                                   const CorrelateOptions& options);

}  // namespace rosetta
