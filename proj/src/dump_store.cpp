// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/dump_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "rosetta/error.hpp"
#include "rosetta/json_util.hpp"

namespace rosetta {

namespace fs = std::filesystem;
using json_util::json;

std::size_t dtype_size(Dtype dtype) { return dtype == Dtype::f16 ? 2 : 4; }

const char* to_string(Dtype dtype) { return dtype == Dtype::f16 ? "f16" : "f32"; }

const char* to_string(ModelKind kind) {
  return kind == ModelKind::generative ? "generative" : "discriminative";
}

std::string to_string(Resolution res) { return fmt::format("{}x{}", res.height, res.width); }

std::string to_string(const UnitId& unit) {
  return fmt::format("{}[{}:{}]", unit.model_id, unit.layer, unit.channel);
}

std::int64_t DumpManifest::unit_count() const {
  std::int64_t total = 0;
  for (const auto& l : layers) total += l.channels;
  return total;
}

const LayerDescriptor& DumpManifest::layer(int index) const {
  if (index < 0 || index >= static_cast<int>(layers.size()))
    throw Error(ErrorKind::RangeOutOfBounds,
                fmt::format("layer {} out of range for {} ({} layers)", index, model_id,
                            layers.size()));
  return layers[static_cast<std::size_t>(index)];
}

bool DumpManifest::operator==(const DumpManifest& o) const {
  return format_version == o.format_version && model_id == o.model_id &&
         model_kind == o.model_kind && dataset_id == o.dataset_id &&
         instance_count == o.instance_count && activation_point == o.activation_point &&
         layers == o.layers && class_label == o.class_label && latents_file == o.latents_file;
}

Map::Map(Resolution r, std::vector<float> v) : res(r), values(std::move(v)) {
  if (static_cast<std::int64_t>(values.size()) != r.cells())
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("map of {} holds {} values", to_string(r), values.size()));
}

std::span<const float> MapBatch::map(std::int64_t local_instance, int channel) const {
  const auto cells = static_cast<std::size_t>(res.cells());
  const auto offset =
      (static_cast<std::size_t>(local_instance) * static_cast<std::size_t>(channels) +
       static_cast<std::size_t>(channel)) *
      cells;
  return std::span<const float>(values).subspan(offset, cells);
}

Map MapBatch::map_copy(std::int64_t local_instance, int channel) const {
  auto s = map(local_instance, channel);
  return Map(res, std::vector<float>(s.begin(), s.end()));
}

// ---------------------------------------------------------------------------
// binary16

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exponent = (h >> 10) & 0x1fu;
  std::uint32_t mantissa = h & 0x3ffu;
  std::uint32_t bits;
  if (exponent == 0) {
    if (mantissa == 0) {
      bits = sign;
    } else {
      // subnormal: renormalize
      int e = -1;
      do {
        ++e;
        mantissa <<= 1;
      } while ((mantissa & 0x400u) == 0);
      bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mantissa & 0x3ffu) << 13);
    }
  } else if (exponent == 0x1f) {
    bits = sign | 0x7f800000u | (mantissa << 13);
  } else {
    bits = sign | ((exponent + (127 - 15)) << 23) | (mantissa << 13);
  }
  return std::bit_cast<float>(bits);
}

std::uint16_t float_to_half(float value) {
  const std::uint32_t f = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (f >> 16) & 0x8000u;
  const std::uint32_t abs = f & 0x7fffffffu;
  if (abs >= 0x7f800000u) {  // inf / nan
    return static_cast<std::uint16_t>(sign | 0x7c00u | (abs > 0x7f800000u ? 0x200u : 0u));
  }
  if (abs >= 0x477ff000u) return static_cast<std::uint16_t>(sign | 0x7c00u);  // overflow
  if (abs < 0x38800000u) {
    // result is subnormal or zero
    if (abs < 0x33000000u) return static_cast<std::uint16_t>(sign);
    // value = mant * 2^(e - 150) and a half subnormal step is 2^-24.
    const std::uint32_t shift = 126 - (abs >> 23);
    const std::uint32_t mant = (abs & 0x7fffffu) | 0x800000u;
    std::uint32_t half = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = ((abs >> 13) - ((127 - 15) << 10));
  const std::uint32_t rem = abs & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
  return static_cast<std::uint16_t>(sign | half);
}

// ---------------------------------------------------------------------------
// manifest

namespace {

Dtype parse_dtype(const std::string& s, std::string_view ctx) {
  if (s == "f32") return Dtype::f32;
  if (s == "f16") return Dtype::f16;
  throw Error(ErrorKind::SchemaViolation, fmt::format("{}: unknown dtype '{}'", ctx, s));
}

ModelKind parse_kind(const std::string& s) {
  if (s == "generative") return ModelKind::generative;
  if (s == "discriminative") return ModelKind::discriminative;
  throw Error(ErrorKind::SchemaViolation, fmt::format("manifest: unknown model_kind '{}'", s));
}

int require_dim(const json& obj, std::string_view key, std::string_view ctx) {
  const auto v = json_util::require_int(obj, key, ctx);
  if (v < 1 || v > (1 << 24))
    throw Error(ErrorKind::SchemaViolation, fmt::format("{}: {} must be >= 1, got {}", ctx, key, v));
  return static_cast<int>(v);
}

DumpManifest parse_manifest(const json& doc) {
  constexpr std::string_view ctx = "manifest";
  DumpManifest m;
  m.format_version = static_cast<int>(json_util::require_int(doc, "format_version", ctx));
  if (m.format_version != kDumpFormatVersion)
    throw Error(ErrorKind::SchemaViolation,
                fmt::format("manifest: unsupported format_version {}", m.format_version));
  json_util::reject_unknown(doc,
                            {"format_version", "model_id", "model_kind", "dataset_id",
                             "instance_count", "activation_point", "layers", "class_label",
                             "latents_file"},
                            ctx);
  m.model_id = json_util::require_string(doc, "model_id", ctx);
  m.model_kind = parse_kind(json_util::require_string(doc, "model_kind", ctx));
  m.dataset_id = json_util::require_string(doc, "dataset_id", ctx);
  m.instance_count = json_util::require_int(doc, "instance_count", ctx);
  m.activation_point = json_util::require_string(doc, "activation_point", ctx);
  if (doc.contains("class_label") && !doc["class_label"].is_null())
    m.class_label = json_util::require_int(doc, "class_label", ctx);
  if (doc.contains("latents_file") && !doc["latents_file"].is_null())
    m.latents_file = json_util::require_string(doc, "latents_file", ctx);

  const json& layers = json_util::require_array(doc, "layers", ctx);
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const std::string lctx = fmt::format("manifest.layers[{}]", li);
    const json& lj = layers[li];
    if (!lj.is_object()) throw Error(ErrorKind::SchemaViolation, lctx + ": expected an object");
    json_util::reject_unknown(lj, {"name", "channels", "height", "width", "dtype", "chunks"}, lctx);
    LayerDescriptor layer;
    layer.name = json_util::require_string(lj, "name", lctx);
    layer.channels = require_dim(lj, "channels", lctx);
    layer.height = require_dim(lj, "height", lctx);
    layer.width = require_dim(lj, "width", lctx);
    layer.dtype = parse_dtype(json_util::require_string(lj, "dtype", lctx), lctx);
    const json& chunks = json_util::require_array(lj, "chunks", lctx);
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
      const std::string cctx = fmt::format("{}.chunks[{}]", lctx, ci);
      if (!chunks[ci].is_object())
        throw Error(ErrorKind::SchemaViolation, cctx + ": expected an object");
      json_util::reject_unknown(chunks[ci], {"path", "first", "count"}, cctx);
      Chunk c;
      c.path = json_util::require_string(chunks[ci], "path", cctx);
      c.first = json_util::require_int(chunks[ci], "first", cctx);
      c.count = json_util::require_int(chunks[ci], "count", cctx);
      layer.chunks.push_back(std::move(c));
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

json manifest_json(const DumpManifest& m) {
  json doc = json::object();
  doc["format_version"] = m.format_version;
  doc["model_id"] = m.model_id;
  doc["model_kind"] = to_string(m.model_kind);
  doc["dataset_id"] = m.dataset_id;
  doc["instance_count"] = m.instance_count;
  doc["activation_point"] = m.activation_point;
  json layers = json::array();
  for (const auto& l : m.layers) {
    json lj = json::object();
    lj["name"] = l.name;
    lj["channels"] = l.channels;
    lj["height"] = l.height;
    lj["width"] = l.width;
    lj["dtype"] = to_string(l.dtype);
    json chunks = json::array();
    for (const auto& c : l.chunks) chunks.push_back({{"path", c.path}, {"first", c.first}, {"count", c.count}});
    lj["chunks"] = std::move(chunks);
    layers.push_back(std::move(lj));
  }
  doc["layers"] = std::move(layers);
  if (m.class_label) doc["class_label"] = *m.class_label;
  if (m.latents_file) doc["latents_file"] = *m.latents_file;
  return doc;
}

std::uintmax_t expected_chunk_bytes(const LayerDescriptor& l, const Chunk& c) {
  return static_cast<std::uintmax_t>(c.count) * static_cast<std::uintmax_t>(l.instance_elements()) *
         dtype_size(l.dtype);
}

}  // namespace

void validate_manifest(const DumpManifest& m) {
  if (m.instance_count <= 0)
    throw Error(ErrorKind::SchemaViolation,
                fmt::format("manifest {}: instance_count must be > 0", m.model_id));
  if (m.latents_file && m.model_kind != ModelKind::generative)
    throw Error(ErrorKind::SchemaViolation,
                fmt::format("manifest {}: latents_file on a discriminative dump", m.model_id));
  std::set<std::string> names;
  for (const auto& l : m.layers) {
    if (!names.insert(l.name).second)
      throw Error(ErrorKind::SchemaViolation, fmt::format("duplicate layer name '{}'", l.name));
    if (l.channels < 1 || l.height < 1 || l.width < 1)
      throw Error(ErrorKind::SchemaViolation, fmt::format("layer '{}': non-positive shape", l.name));
    std::int64_t expected = 0;
    for (const auto& c : l.chunks) {
      if (c.count <= 0)
        throw Error(ErrorKind::ChunkCoverageError,
                    fmt::format("layer '{}': chunk {} is empty", l.name, c.path));
      if (c.first != expected)
        throw Error(ErrorKind::ChunkCoverageError,
                    fmt::format("layer '{}': chunk {} starts at {}, expected {} ({})", l.name,
                                c.path, c.first, expected, c.first < expected ? "overlap" : "gap"));
      expected = c.first + c.count;
    }
    if (expected != m.instance_count)
      throw Error(ErrorKind::ChunkCoverageError,
                  fmt::format("layer '{}': chunks cover [0,{}) but instance_count is {}", l.name,
                              expected, m.instance_count));
    for (const auto& c : l.chunks) {
      const fs::path p = m.root / c.path;
      std::error_code ec;
      const auto size = fs::file_size(p, ec);
      if (ec) throw Error(ErrorKind::MissingFile, p.string());
      if (size != expected_chunk_bytes(l, c))
        throw Error(ErrorKind::SizeMismatch,
                    fmt::format("{}: {} bytes, expected {}", p.string(), size,
                                expected_chunk_bytes(l, c)));
    }
  }
}

DumpManifest read_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  if (!fs::exists(file)) throw Error(ErrorKind::MissingFile, file.string());
  DumpManifest m = parse_manifest(json_util::read_file(file));
  m.root = file.parent_path();
  validate_manifest(m);
  return m;
}

std::string manifest_to_json_text(const DumpManifest& m) { return manifest_json(m).dump(2) + "\n"; }

void write_manifest(const DumpManifest& m, const fs::path& dir) {
  json_util::write_text(dir / "manifest.json", manifest_to_json_text(m));
}

// ---------------------------------------------------------------------------
// batch reads

MapBatch read_layer_batch(const DumpManifest& m, int layer_index, InstanceRange range) {
  const LayerDescriptor& layer = m.layer(layer_index);
  if (range.first < 0 || range.count < 1 || range.end() > m.instance_count)
    throw Error(ErrorKind::RangeOutOfBounds,
                fmt::format("instances [{},{}) outside [0,{}) of {}", range.first, range.end(),
                            m.instance_count, m.model_id));
  MapBatch batch;
  batch.model_id = m.model_id;
  batch.layer = layer_index;
  batch.range = range;
  batch.channels = layer.channels;
  batch.res = layer.resolution();
  const auto per_instance = static_cast<std::size_t>(layer.instance_elements());
  batch.values.resize(per_instance * static_cast<std::size_t>(range.count));

  const std::size_t esize = dtype_size(layer.dtype);
  std::vector<char> raw;
  for (const auto& c : layer.chunks) {
    const std::int64_t lo = std::max(range.first, c.first);
    const std::int64_t hi = std::min(range.end(), c.first + c.count);
    if (lo >= hi) continue;
    const fs::path p = m.root / c.path;
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot stat " + p.string());
    if (size != expected_chunk_bytes(layer, c))
      throw Error(ErrorKind::CorruptChunk,
                  fmt::format("{}: {} bytes, expected {}", p.string(), size,
                              expected_chunk_bytes(layer, c)));
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + p.string());
    const std::size_t n_values = per_instance * static_cast<std::size_t>(hi - lo);
    raw.resize(n_values * esize);
    in.seekg(static_cast<std::streamoff>(static_cast<std::size_t>(lo - c.first) * per_instance * esize));
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw Error(ErrorKind::IoError, "short read from " + p.string());

    float* out = batch.values.data() + static_cast<std::size_t>(lo - range.first) * per_instance;
    if (layer.dtype == Dtype::f32) {
      std::memcpy(out, raw.data(), raw.size());
      if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < n_values; ++i)
          out[i] = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(out[i])));
      }
    } else {
      for (std::size_t i = 0; i < n_values; ++i) {
        const auto b0 = static_cast<unsigned char>(raw[2 * i]);
        const auto b1 = static_cast<unsigned char>(raw[2 * i + 1]);
        out[i] = half_to_float(static_cast<std::uint16_t>(b0 | (b1 << 8)));
      }
    }
  }
  for (float v : batch.values) {
    if (!std::isfinite(v))
      throw Error(ErrorKind::CorruptChunk,
                  fmt::format("non-finite activation in {} layer {}", m.model_id, layer.name));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// resampling

namespace {

struct AxisTap {
  int lo;
  int hi;
  double frac;
};

std::vector<AxisTap> axis_taps(int src, int dst) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int t = 0; t < dst; ++t) {
    double s = (t + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[static_cast<std::size_t>(t)] = {lo, hi, s - lo};
  }
  return taps;
}

}  // namespace

void bilinear_resize(std::span<const float> src, Resolution sr, std::span<float> dst,
                     Resolution tr) {
  if (sr.height < 1 || sr.width < 1 || tr.height < 1 || tr.width < 1)
    throw Error(ErrorKind::InvalidArgument, "bilinear_resize: sizes must be >= 1");
  if (static_cast<std::int64_t>(src.size()) != sr.cells() ||
      static_cast<std::int64_t>(dst.size()) != tr.cells())
    throw Error(ErrorKind::InvalidArgument, "bilinear_resize: buffer size mismatch");
  if (sr == tr) {
    std::copy(src.begin(), src.end(), dst.begin());
    return;
  }
  const auto rows = axis_taps(sr.height, tr.height);
  const auto cols = axis_taps(sr.width, tr.width);
  for (int y = 0; y < tr.height; ++y) {
    const AxisTap& ry = rows[static_cast<std::size_t>(y)];
    const float* r0 = src.data() + static_cast<std::size_t>(ry.lo) * sr.width;
    const float* r1 = src.data() + static_cast<std::size_t>(ry.hi) * sr.width;
    float* out = dst.data() + static_cast<std::size_t>(y) * tr.width;
    for (int x = 0; x < tr.width; ++x) {
      const AxisTap& cx = cols[static_cast<std::size_t>(x)];
      const double top = (1.0 - cx.frac) * r0[cx.lo] + cx.frac * r0[cx.hi];
      const double bottom = (1.0 - cx.frac) * r1[cx.lo] + cx.frac * r1[cx.hi];
      out[x] = static_cast<float>((1.0 - ry.frac) * top + ry.frac * bottom);
    }
  }
}

Map bilinear_resize(const Map& src, Resolution target) {
  Map out(target);
  bilinear_resize(src.values, src.res, out.values, target);
  return out;
}

// ---------------------------------------------------------------------------
// writer

DumpWriter::DumpWriter(fs::path dir, std::string model_id, ModelKind kind, std::string dataset_id,
                       std::vector<LayerSpec> layers)
    : dir_(std::move(dir)) {
  manifest_.model_id = std::move(model_id);
  manifest_.model_kind = kind;
  manifest_.dataset_id = std::move(dataset_id);
  for (auto& spec : layers) {
    LayerDescriptor d;
    d.name = std::move(spec.name);
    d.channels = spec.channels;
    d.height = spec.height;
    d.width = spec.width;
    d.dtype = spec.dtype;
    manifest_.layers.push_back(std::move(d));
  }
  written_.assign(manifest_.layers.size(), 0);
  fs::create_directories(dir_);
}

void DumpWriter::append(int layer_index, std::int64_t count, std::span<const float> values) {
  if (layer_index < 0 || layer_index >= static_cast<int>(manifest_.layers.size()))
    throw Error(ErrorKind::RangeOutOfBounds, fmt::format("writer: no layer {}", layer_index));
  LayerDescriptor& layer = manifest_.layers[static_cast<std::size_t>(layer_index)];
  if (count < 1 || static_cast<std::int64_t>(values.size()) != count * layer.instance_elements())
    throw Error(ErrorKind::SizeMismatch,
                fmt::format("writer: layer '{}' got {} values for {} instances", layer.name,
                            values.size(), count));
  Chunk chunk;
  chunk.path = fmt::format("l{:03}_{:05}.bin", layer_index, layer.chunks.size());
  chunk.first = written_[static_cast<std::size_t>(layer_index)];
  chunk.count = count;

  std::vector<unsigned char> bytes(values.size() * dtype_size(layer.dtype));
  if (layer.dtype == Dtype::f32) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = float_to_half(values[i]);
      bytes[2 * i] = static_cast<unsigned char>(bits & 0xff);
      bytes[2 * i + 1] = static_cast<unsigned char>(bits >> 8);
    }
  }
  const fs::path p = dir_ / chunk.path;
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + p.string());

  written_[static_cast<std::size_t>(layer_index)] += count;
  layer.chunks.push_back(std::move(chunk));
}

DumpManifest DumpWriter::finish() {
  if (written_.empty()) throw Error(ErrorKind::SchemaViolation, "writer: dump has no layers");
  const std::int64_t n = written_.front();
  for (std::size_t i = 0; i < written_.size(); ++i) {
    if (written_[i] != n)
      throw Error(ErrorKind::ChunkCoverageError,
                  fmt::format("writer: layer '{}' holds {} instances, layer 0 holds {}",
                              manifest_.layers[i].name, written_[i], n));
  }
  manifest_.instance_count = n;
  manifest_.root = dir_;
  validate_manifest(manifest_);
  write_manifest(manifest_, dir_);
  return manifest_;
}

}  // namespace rosetta
