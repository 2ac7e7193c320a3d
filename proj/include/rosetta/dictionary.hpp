// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rosetta/dump_store.hpp"
#include "rosetta/matcher.hpp"
#include "rosetta/png_io.hpp"
#include "rosetta/unit_stats.hpp"

namespace rosetta {

struct DictionaryParams {
  double clip_z = 3.0;
  double blend_weight = 0.5;
  std::string colormap = "viridis";

  bool operator==(const DictionaryParams&) const = default;
};

struct Concept {
  int concept_id = 0;
  std::vector<RosettaTuple> members;
  std::size_t representative = 0;

  bool operator==(const Concept&) const = default;
};

struct RunInfo {
  std::string generator_model;
  std::vector<std::string> discriminative_models;
  std::string dataset_id;
  int k = 0;
  std::int64_t instance_count = 0;
};

struct RosettaDictionary {
  int format_version = 1;
  std::string generator_model;
  std::vector<std::string> discriminative_models;
  std::string dataset_id;
  int k = 0;
  std::int64_t instance_count = 0;
  std::vector<Concept> concepts;
  // One entry per (unit, resolution) that any concept references, sorted.
  std::vector<UnitStats> stats;
  DictionaryParams params;
  nlohmann::json provenance = nlohmann::json::object();

  const UnitStats& stats_for(const UnitId& unit, Resolution res) const;
  // Generator units of every concept member, sorted.
  std::vector<UnitId> generator_units() const;
  bool operator==(const RosettaDictionary&) const = default;
};

// Builds the dictionary from matcher output; concepts follow cluster order.
// Throws MissingStats (naming the unit) or InconsistentRun.
RosettaDictionary curate(std::span<const RosettaTuple> tuples, std::span<const ConceptCluster> clusters,
                         std::span<const StatsTable> stats_tables, const RunInfo& run,
                         const DictionaryParams& params, nlohmann::json provenance = nlohmann::json::object());

// Referential integrity and stats completeness; throws SchemaViolation / MissingStats.
void validate(const RosettaDictionary& dict);

nlohmann::json to_json(const RosettaDictionary& dict);
RosettaDictionary dictionary_from_json(const nlohmann::json& doc, const std::string& context);
void write_dictionary(const RosettaDictionary& dict, const std::filesystem::path& path);
RosettaDictionary read_dictionary(const std::filesystem::path& path);

// z-score against dataset stats, clipped to [0, clip_z], scaled to [0, 1].
float normalize_value(float value, const UnitStats& stats, double clip_z);
Map normalize_map(const Map& map, const UnitStats& stats, double clip_z);

using Rgb = std::array<std::uint8_t, 3>;

// Perceptually uniform colormap (viridis), t in [0, 1].
Rgb colormap_color(float t);

// out = round((1 - w) * base + w * colormap(map)); map must match the image size.
RgbImage blend_heatmap(const RgbImage& base, const Map& normalized, double weight);

// The unit (and its stats resolution) drawn for a concept over a dump of `model_id`.
std::pair<UnitId, Resolution> render_unit(const RosettaDictionary& dict, const Concept& concept_entry,
                                          const std::string& model_id);

// Writes out_dir/concept_{k}/sample_{i}.png for the first `samples` instances
// and out_dir/index.html. Base images are images_dir/{instance:06}.png.
std::vector<std::filesystem::path> render_gallery(const RosettaDictionary& dict, const DumpManifest& dump,
                                                  const std::filesystem::path& images_dir,
                                                  const std::filesystem::path& out_dir, int samples,
                                                  int threads = 1);

}  // namespace rosetta
