// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

// Edited target activation maps for latent re-optimization.
//
// edits.json
//   {"init_latent": "source" | "random", "seed": 0,
//    "commands": [{"target": "all" | [{"layer": L, "channel": C}, ...],
//                  "op": "zoom_in" | "shift" | "copy_paste" | "set_min" | "scale",
//                  "dx": 1, "dy": 0, "factor": 2.0}]}
//
// Targets are written as an instance_count 1 dump holding every layer that
// contains a target unit, plus targets_manifest.json naming the units.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rosetta/dictionary.hpp"
#include "rosetta/dump_store.hpp"

namespace rosetta {

enum class EditOp { zoom_in, shift, copy_paste, set_min, scale };

std::string to_string(EditOp op);
EditOp parse_edit_op(const std::string& name);

struct EditCommand {
  bool all_units = false;
  std::vector<UnitId> units;  // generator units; ignored when all_units
  EditOp op = EditOp::set_min;
  int dx = 0;
  int dy = 0;
  double factor = 1.0;

  bool operator==(const EditCommand&) const = default;
};

enum class InitLatent { source, random };

struct EditSpec {
  std::vector<EditCommand> commands;
  InitLatent init_latent = InitLatent::source;
  std::uint64_t seed = 0;

  bool operator==(const EditSpec&) const = default;
};

// Bilinear 2x upsample, then the central crop at offset (H/2, W/2).
Map apply_zoom(const Map& map);

// dx, dy are strides at a 4x4 reference; the applied shift is
// (round(dx * W / 4), round(dy * H / 4)) cells, positive toward larger
// column/row indices. Vacated cells are zero.
Map apply_shift(const Map& map, int dx, int dy = 0);

// Columns [0, W/2) from apply_shift(map, -dx), the rest from apply_shift(map, dx).
Map apply_copy_paste(const Map& map, int dx);

enum class ScaleMode { set_min, scale };

// set_min: every cell becomes the map minimum. scale: min + factor * (v - min).
Map apply_concept_scale(const Map& map, ScaleMode mode, double factor = 1.0);

// Applies one command's op to a map.
Map apply_edit(const Map& map, const EditCommand& command);

nlohmann::json to_json(const EditSpec& spec);
EditSpec edit_spec_from_json(const nlohmann::json& doc, const std::string& generator_model,
                             const std::string& context);
EditSpec read_edit_spec(const std::filesystem::path& path, const std::string& generator_model);

// InvalidSpec for a unit named by two commands or bad parameters;
// UnknownUnit for explicit units outside the dictionary.
void validate_spec(const EditSpec& spec, const RosettaDictionary& dict);

struct TargetMap {
  UnitId unit;
  std::string layer_name;
  Map map;                   // at the unit's native resolution
  std::optional<EditOp> op;  // empty when the map is the raw extraction

  bool operator==(const TargetMap&) const = default;
};

struct TargetMaps {
  std::int64_t source_instance = 0;
  EditSpec spec;
  std::vector<TargetMap> maps;  // sorted by unit

  const TargetMap* find(const UnitId& unit) const;
  bool operator==(const TargetMaps&) const = default;
};

// Reads `instance` of the generator dump and applies the edit commands. Every Rosetta
// generator unit is included unless edited_only, in which case only units
// an op touches are.
TargetMaps build_targets(const RosettaDictionary& dict, const DumpManifest& dump, std::int64_t instance,
                         const EditSpec& spec, bool edited_only = false);

// Writes the mini-dump and targets_manifest.json under `dir`.
void write_targets(const TargetMaps& targets, const DumpManifest& source, const std::filesystem::path& dir,
                   const nlohmann::json& provenance = nlohmann::json::object());
TargetMaps read_targets(const std::filesystem::path& dir);

}  // namespace rosetta
