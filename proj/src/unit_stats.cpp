// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/unit_stats.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>

#include "rosetta/error.hpp"
#include "rosetta/json_util.hpp"
#include "rosetta/parallel.hpp"

namespace rosetta {

namespace {

void require_mining_input(const DumpManifest& m) {
  if (m.activation_point != kPostNonlinearity)
    throw Error(ErrorKind::SchemaViolation,
                fmt::format("{}: activation_point is '{}', mining needs '{}'", m.model_id,
                            m.activation_point, kPostNonlinearity));
}

// Sums are taken relative to a per-unit shift (the unit's first sample) so
// that large offsets do not cancel catastrophically in sum-of-squares.
struct Accumulator {
  bool seeded = false;
  double shift = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(std::span<const float> values) {
    if (!seeded) {
      shift = values[0];
      seeded = true;
    }
    for (float v : values) {
      const double d = static_cast<double>(v) - shift;
      sum += d;
      sum_sq += d * d;
    }
  }
};

}  // namespace

std::vector<UnitStats> accumulate_stats(const DumpManifest& manifest, int layer_index,
                                        Resolution resolution, std::int64_t batch_size,
                                        int threads) {
  require_mining_input(manifest);
  const LayerDescriptor& layer = manifest.layer(layer_index);
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (resolution.height < 1 || resolution.width < 1)
    throw Error(ErrorKind::InvalidArgument, "resolution must be at least 1x1");
  const std::int64_t samples = manifest.instance_count * resolution.cells();
  if (samples < 2)
    throw Error(ErrorKind::DegenerateSampleCount,
                fmt::format("{} layer {} at {}: {} samples leave no variance denominator",
                            manifest.model_id, layer.name, to_string(resolution), samples));

  std::vector<Accumulator> acc(static_cast<std::size_t>(layer.channels));
  const Resolution native = layer.resolution();
  for (std::int64_t first = 0; first < manifest.instance_count; first += batch_size) {
    const std::int64_t count = std::min(batch_size, manifest.instance_count - first);
    const MapBatch batch = read_layer_batch(manifest, layer_index, {first, count});
    parallel_for(static_cast<std::size_t>(layer.channels), threads, [&](std::size_t c) {
      std::vector<float> resized(static_cast<std::size_t>(resolution.cells()));
      for (std::int64_t i = 0; i < count; ++i) {
        auto map = batch.map(i, static_cast<int>(c));
        if (native == resolution) {
          acc[c].add(map);
        } else {
          bilinear_resize(map, native, resized, resolution);
          acc[c].add(resized);
        }
      }
    });
  }

  std::vector<UnitStats> out;
  out.reserve(acc.size());
  const auto n = static_cast<double>(samples);
  for (int c = 0; c < layer.channels; ++c) {
    const Accumulator& a = acc[static_cast<std::size_t>(c)];
    UnitStats s;
    s.unit = {manifest.model_id, layer_index, c};
    s.resolution = resolution;
    s.sample_count = samples;
    s.mean = a.shift + a.sum / n;
    s.variance = std::max(0.0, (a.sum_sq - a.sum * a.sum / n) / (n - 1.0));
    out.push_back(s);
  }
  return out;
}

void StatsTable::insert(const UnitStats& s) {
  Key key{s.unit, s.resolution.height, s.resolution.width};
  if (!entries_.emplace(key, s).second)
    throw Error(ErrorKind::SchemaViolation,
                fmt::format("duplicate stats entry for {} at {}", to_string(s.unit),
                            to_string(s.resolution)));
}

void StatsTable::insert_all(const std::vector<UnitStats>& stats) {
  for (const auto& s : stats) insert(s);
}

void StatsTable::merge(const StatsTable& other) {
  for (const auto& [key, s] : other.entries_) insert(s);
}

const UnitStats* StatsTable::find(const UnitId& unit, Resolution res) const {
  auto it = entries_.find(Key{unit, res.height, res.width});
  return it == entries_.end() ? nullptr : &it->second;
}

const UnitStats& StatsTable::stats_for(const UnitId& unit, Resolution res) const {
  const UnitStats* s = find(unit, res);
  if (s == nullptr)
    throw Error(ErrorKind::MissingStats,
                fmt::format("no stats for {} at {}", to_string(unit), to_string(res)));
  return *s;
}

std::string stats_json_text(const StatsTable& table) {
  std::ostringstream out;
  out << "[";
  bool first = true;
  for (const auto& [key, s] : table.entries()) {
    out << (first ? "\n" : ",\n");
    first = false;
    out << fmt::format(
        "  {{\"model_id\": {}, \"layer\": {}, \"channel\": {}, \"height\": {}, \"width\": {}, "
        "\"mean\": {}, \"variance\": {}, \"sample_count\": {}}}",
        json_util::json(s.unit.model_id).dump(), s.unit.layer, s.unit.channel, s.resolution.height,
        s.resolution.width, json_util::format_double(s.mean), json_util::format_double(s.variance),
        s.sample_count);
  }
  out << (first ? "]\n" : "\n]\n");
  return out.str();
}

void write_stats_json(const StatsTable& table, const std::filesystem::path& path) {
  json_util::write_text(path, stats_json_text(table));
}

StatsTable read_stats_json(const std::filesystem::path& path) {
  const auto doc = json_util::read_file(path);
  if (!doc.is_array())
    throw Error(ErrorKind::SchemaViolation, path.string() + ": stats file must be an array");
  StatsTable table;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string ctx = fmt::format("{}[{}]", path.string(), i);
    const auto& e = doc[i];
    UnitStats s;
    s.unit.model_id = json_util::require_string(e, "model_id", ctx);
    s.unit.layer = static_cast<int>(json_util::require_int(e, "layer", ctx));
    s.unit.channel = static_cast<int>(json_util::require_int(e, "channel", ctx));
    s.resolution.height = static_cast<int>(json_util::require_int(e, "height", ctx));
    s.resolution.width = static_cast<int>(json_util::require_int(e, "width", ctx));
    s.mean = json_util::require_number(e, "mean", ctx);
    s.variance = json_util::require_number(e, "variance", ctx);
    s.sample_count = json_util::require_int(e, "sample_count", ctx);
    if (s.variance < 0.0)
      throw Error(ErrorKind::SchemaViolation, ctx + ": negative variance");
    table.insert(s);
  }
  return table;
}

}  // namespace rosetta
