// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

// Activation dump format.
//
// A dump is a directory holding manifest.json plus raw chunk files. Each
// layer is stored as a sequence of chunks along the instance axis; a chunk
// holds `count` consecutive instances of the layer tensor as little-endian
// scalars laid out (instance, channel, row, column), column fastest.
// Chunk paths in the manifest are relative to the manifest's directory.
//
//   {
//     "format_version": 1,
//     "model_id": "stylegan2_cat",
//     "model_kind": "generative" | "discriminative",
//     "dataset_id": "cats_1600",
//     "instance_count": 1600,
//     "activation_point": "post_nonlinearity",
//     "layers": [{"name": "b4.conv1", "channels": 512, "height": 4,
//                 "width": 4, "dtype": "f32" | "f16",
//                 "chunks": [{"path": "b4.conv1_00000.bin",
//                             "first": 0, "count": 64}, ...]}, ...],
//     "class_label": 281,           (optional)
//     "latents_file": "latents.bin" (optional, generative only)
//   }

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rosetta {

inline constexpr int kDumpFormatVersion = 1;
inline constexpr const char* kPostNonlinearity = "post_nonlinearity";

enum class Dtype { f32, f16 };
enum class ModelKind { generative, discriminative };

std::size_t dtype_size(Dtype dtype);
const char* to_string(Dtype dtype);
const char* to_string(ModelKind kind);

struct Resolution {
  int height = 0;
  int width = 0;

  std::int64_t cells() const { return std::int64_t{height} * width; }
  auto operator<=>(const Resolution&) const = default;
};

std::string to_string(Resolution res);

struct UnitId {
  std::string model_id;
  int layer = 0;
  int channel = 0;

  auto operator<=>(const UnitId&) const = default;
};

std::string to_string(const UnitId& unit);

struct InstanceRange {
  std::int64_t first = 0;
  std::int64_t count = 0;

  std::int64_t end() const { return first + count; }
};

struct Chunk {
  std::string path;
  std::int64_t first = 0;
  std::int64_t count = 0;

  bool operator==(const Chunk&) const = default;
};

struct LayerDescriptor {
  std::string name;
  int channels = 0;
  int height = 0;
  int width = 0;
  Dtype dtype = Dtype::f32;
  std::vector<Chunk> chunks;

  Resolution resolution() const { return {height, width}; }
  std::int64_t instance_elements() const { return std::int64_t{channels} * height * width; }
  bool operator==(const LayerDescriptor&) const = default;
};

struct DumpManifest {
  int format_version = kDumpFormatVersion;
  std::string model_id;
  ModelKind model_kind = ModelKind::discriminative;
  std::string dataset_id;
  std::int64_t instance_count = 0;
  std::string activation_point = kPostNonlinearity;
  std::vector<LayerDescriptor> layers;
  std::optional<std::int64_t> class_label;
  std::optional<std::string> latents_file;

  // Directory the manifest was read from; chunk paths resolve against it.
  // Not serialized.
  std::filesystem::path root;

  std::int64_t unit_count() const;
  const LayerDescriptor& layer(int index) const;
  bool operator==(const DumpManifest& other) const;
};

// A single 2-D activation map, row-major.
struct Map {
  Resolution res;
  std::vector<float> values;

  Map() = default;
  Map(Resolution r, float fill = 0.0f) : res(r), values(static_cast<std::size_t>(r.cells()), fill) {}
  Map(Resolution r, std::vector<float> v);

  float& at(int row, int col) { return values[static_cast<std::size_t>(row) * res.width + col]; }
  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * res.width + col]; }
  bool operator==(const Map&) const = default;
};

// Decoded activations of one layer over an instance range.
struct MapBatch {
  std::string model_id;
  int layer = 0;
  InstanceRange range;
  int channels = 0;
  Resolution res;
  std::vector<float> values;  // (count, channels, height, width)

  std::span<const float> map(std::int64_t local_instance, int channel) const;
  Map map_copy(std::int64_t local_instance, int channel) const;
};

// Parses and validates `path` (a dump directory or its manifest.json).
DumpManifest read_manifest(const std::filesystem::path& path);

// Validates the manifest against its chunk files; read_manifest calls this.
void validate_manifest(const DumpManifest& manifest);

// Writes manifest.json into `dir`. Chunk files are not touched.
void write_manifest(const DumpManifest& manifest, const std::filesystem::path& dir);

std::string manifest_to_json_text(const DumpManifest& manifest);

MapBatch read_layer_batch(const DumpManifest& manifest, int layer, InstanceRange range);

// Half-pixel-center bilinear resampling with edge clamping:
//   x_s = (x_t + 0.5) * W / W' - 0.5, clamped to [0, W - 1]
// and likewise for rows. Same-size input is returned unchanged.
Map bilinear_resize(const Map& src, Resolution target);

// Span form used on hot paths; dst must hold target.cells() values.
void bilinear_resize(std::span<const float> src, Resolution src_res, std::span<float> dst,
                     Resolution target);

// IEEE binary16 conversion. Widening is exact; narrowing rounds to nearest even.
float half_to_float(std::uint16_t bits);
std::uint16_t float_to_half(float value);

struct LayerSpec {
  std::string name;
  int channels = 0;
  int height = 0;
  int width = 0;
  Dtype dtype = Dtype::f32;
};

// Single-writer incremental dump writer. Each append() writes one chunk
// file per layer; finish() writes the manifest once every layer holds the
// same number of instances.
class DumpWriter {
 public:
  DumpWriter(std::filesystem::path dir, std::string model_id, ModelKind kind,
             std::string dataset_id, std::vector<LayerSpec> layers);

  // values: (count, channels, height, width) for this layer.
  void append(int layer, std::int64_t count, std::span<const float> values);

  void set_class_label(std::int64_t label) { manifest_.class_label = label; }
  void set_latents_file(std::string path) { manifest_.latents_file = std::move(path); }

  DumpManifest finish();

 private:
  std::filesystem::path dir_;
  DumpManifest manifest_;
  std::vector<std::int64_t> written_;
};

}  // namespace rosetta
