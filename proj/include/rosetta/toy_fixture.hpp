// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic planted-match dumps.
//
// Every map is a smooth non-negative field: a coarse grid of uniform values
// drawn from a generator seeded by (seed, model, layer, channel, instance),
// bilinearly upsampled to the layer shape. A planted partner unit k of
// generator unit j is
//
//   k = a * resize(j) + b + N(0, (noise * a * std_j)^2)
//
// with std_j the dataset-wide std of resize(j) at k's shape. Units that are
// not planted are independent of everything else.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rosetta/dump_store.hpp"

namespace rosetta {

struct ToyLayer {
  std::string name;
  int channels = 0;
  int height = 0;
  int width = 0;
};

struct ToyConfig {
  std::string dataset_id = "toy";
  std::int64_t instances = 32;
  std::uint64_t seed = 7;
  std::vector<ToyLayer> generator;      // model "gen"
  std::vector<ToyLayer> discriminative;  // layout of "disc1", "disc2", ...
  int discriminative_models = 1;
  int planted = 0;        // planted pairs per discriminative model
  double noise = 0.1;
  int duplicates = 0;     // generator channels that exactly copy another channel of their layer
  std::int64_t chunk_instances = 64;
  Dtype dtype = Dtype::f32;
  int image_size = 0;     // 0 writes no images
};

struct PlantedPair {
  UnitId generator;
  UnitId partner;
  double scale = 1.0;
  double offset = 0.0;
};

struct DuplicatePair {
  UnitId source;
  UnitId copy;
};

struct ToyFixture {
  DumpManifest generator;
  std::vector<DumpManifest> discriminative;
  std::vector<PlantedPair> planted;
  std::vector<DuplicatePair> duplicates;
};

// Writes dir/gen, dir/disc{m}, dir/planted.json and, with image_size > 0,
// dir/images/{instance:06}.png.
ToyFixture make_toy(const ToyConfig& config, const std::filesystem::path& dir);

// "C:HxW,C:HxW,..." -> layers named prefix0, prefix1, ...
std::vector<ToyLayer> parse_toy_layers(const std::string& text, const std::string& prefix);

// Copy of `src` with every value of unit u mapped to a(u) * x + b(u).
DumpManifest transform_dump(const DumpManifest& src, const std::filesystem::path& dir,
                            const std::function<std::pair<double, double>(const UnitId&)>& affine);

}  // namespace rosetta
