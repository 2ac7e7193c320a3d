// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "rosetta/dump_store.hpp"

namespace rosetta {

// Dataset-wide statistics of one unit, taken over every instance and every
// cell of its map after resampling to `resolution`. The variance uses the
// unbiased denominator sample_count - 1.
struct UnitStats {
  UnitId unit;
  Resolution resolution;
  double mean = 0.0;
  double variance = 0.0;
  std::int64_t sample_count = 0;

  bool operator==(const UnitStats&) const = default;
};

// Single streaming pass over `layer`, `batch_size` instances at a time.
// Maps are bilinearly resampled to `resolution` before accumulation.
// Accumulation order is fixed (instance, then cell), so the result does not
// depend on batch_size or thread count.
std::vector<UnitStats> accumulate_stats(const DumpManifest& manifest, int layer,
                                        Resolution resolution, std::int64_t batch_size,
                                        int threads = 1);

class StatsTable {
 public:
  using Key = std::tuple<UnitId, int, int>;

  void insert(const UnitStats& stats);
  void insert_all(const std::vector<UnitStats>& stats);
  void merge(const StatsTable& other);

  // Lookup only; throws MissingStats when the pair was never accumulated.
  const UnitStats& stats_for(const UnitId& unit, Resolution resolution) const;
  const UnitStats* find(const UnitId& unit, Resolution resolution) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<Key, UnitStats>& entries() const { return entries_; }

 private:
  std::map<Key, UnitStats> entries_;
};

// stats.json: array of {model_id, layer, channel, height, width, mean,
// variance, sample_count}; reals printed with 17 significant digits.
std::string stats_json_text(const StatsTable& table);
void write_stats_json(const StatsTable& table, const std::filesystem::path& path);
StatsTable read_stats_json(const std::filesystem::path& path);

}  // namespace rosetta
