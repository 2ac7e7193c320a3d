// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/toy_fixture.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "rosetta/error.hpp"
#include "rosetta/json_util.hpp"
#include "rosetta/png_io.hpp"

namespace rosetta {

using json_util::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix(seed);
  for (std::uint64_t p : parts) h = splitmix(h ^ p);
  return h;
}

// Coarse side of the random field behind a map.
int coarse_side(int size) { return std::max(2, size / 4); }

struct Pattern {
  std::uint64_t seed;
  int model;
  int layer;
  int channel;
  Resolution res;
};

void fill_pattern(const Pattern& p, std::int64_t instance, std::span<float> out) {
  std::mt19937_64 rng(mix(p.seed, {static_cast<std::uint64_t>(p.model), static_cast<std::uint64_t>(p.layer),
                                   static_cast<std::uint64_t>(p.channel), static_cast<std::uint64_t>(instance)}));
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  const Resolution coarse{coarse_side(p.res.height), coarse_side(p.res.width)};
  std::vector<float> grid(static_cast<std::size_t>(coarse.cells()));
  for (auto& v : grid) v = uni(rng);
  bilinear_resize(grid, coarse, out, p.res);
}

struct Planted {
  PlantedPair pair;
  Pattern source;
  double noise_std = 0.0;
};

json unit_json(const UnitId& u) { return {{"layer", u.layer}, {"channel", u.channel}}; }

std::vector<LayerSpec> layer_specs(const std::vector<ToyLayer>& layers, Dtype dtype) {
  std::vector<LayerSpec> out;
  for (const auto& l : layers) {
    if (l.channels < 1 || l.height < 1 || l.width < 1)
      throw Error(ErrorKind::InvalidArgument, fmt::format("toy layer '{}' has an empty shape", l.name));
    out.push_back({l.name, l.channels, l.height, l.width, dtype});
  }
  return out;
}

std::vector<UnitId> all_units(const std::string& model, const std::vector<ToyLayer>& layers) {
  std::vector<UnitId> out;
  for (int l = 0; l < static_cast<int>(layers.size()); ++l)
    for (int c = 0; c < layers[static_cast<std::size_t>(l)].channels; ++c) out.push_back({model, l, c});
  return out;
}

// Picks `count` distinct entries, returned in draw order.
std::vector<UnitId> draw(std::vector<UnitId> pool, int count, std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

}  // namespace

std::vector<ToyLayer> parse_toy_layers(const std::string& text, const std::string& prefix) {
  std::vector<ToyLayer> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    ToyLayer l;
    l.name = fmt::format("{}{}", prefix, out.size());
    char colon = 0, x = 0;
    std::istringstream is(item);
    if (!(is >> l.channels >> colon >> l.height >> x >> l.width) || colon != ':' || x != 'x' || !is.eof() ||
        l.channels < 1 || l.height < 1 || l.width < 1)
      throw Error(ErrorKind::InvalidArgument, fmt::format("layer '{}' is not of the form C:HxW", item));
    out.push_back(l);
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "no layers given");
  return out;
}

ToyFixture make_toy(const ToyConfig& cfg, const fs::path& dir) {
  if (cfg.instances < 1) throw Error(ErrorKind::InvalidArgument, "toy fixture needs at least one instance");
  if (cfg.chunk_instances < 1) throw Error(ErrorKind::InvalidArgument, "chunk size must be >= 1");
  if (cfg.generator.empty()) throw Error(ErrorKind::InvalidArgument, "toy generator needs a layer");
  if (cfg.discriminative_models < 0) throw Error(ErrorKind::InvalidArgument, "negative model count");
  if (cfg.discriminative_models > 0 && cfg.discriminative.empty())
    throw Error(ErrorKind::InvalidArgument, "toy discriminative models need a layer");
  if (cfg.noise < 0.0) throw Error(ErrorKind::InvalidArgument, "noise must be >= 0");

  ToyFixture fx;
  std::mt19937_64 rng(mix(cfg.seed, {0xfeedull}));
  const std::vector<UnitId> gen_units = all_units("gen", cfg.generator);

  // Duplicates: copy -> source within one layer; a copy is never a source.
  std::map<std::pair<int, int>, int> copy_of;
  {
    std::vector<UnitId> pool = gen_units;
    std::shuffle(pool.begin(), pool.end(), rng);
    std::set<std::pair<int, int>> used;
    for (const UnitId& c : pool) {
      if (static_cast<int>(fx.duplicates.size()) == cfg.duplicates) break;
      if (used.contains({c.layer, c.channel})) continue;
      const int channels = cfg.generator[static_cast<std::size_t>(c.layer)].channels;
      for (int s = 0; s < channels; ++s) {
        if (s == c.channel || used.contains({c.layer, s})) continue;
        copy_of[{c.layer, c.channel}] = s;
        used.insert({c.layer, c.channel});
        used.insert({c.layer, s});
        fx.duplicates.push_back({{"gen", c.layer, s}, c});
        break;
      }
    }
    if (static_cast<int>(fx.duplicates.size()) != cfg.duplicates)
      throw Error(ErrorKind::InvalidArgument, fmt::format("cannot place {} duplicate channels", cfg.duplicates));
    std::sort(fx.duplicates.begin(), fx.duplicates.end(),
              [](const DuplicatePair& a, const DuplicatePair& b) { return a.copy < b.copy; });
  }
  auto gen_pattern = [&](int layer, int channel) {
    auto it = copy_of.find({layer, channel});
    const int src = it == copy_of.end() ? channel : it->second;
    const ToyLayer& l = cfg.generator[static_cast<std::size_t>(layer)];
    return Pattern{cfg.seed, 0, layer, src, {l.height, l.width}};
  };

  const auto chunked = [&](DumpWriter& writer, const std::vector<ToyLayer>& layers,
                           const std::function<void(int, int, std::int64_t, std::span<float>)>& fill) {
    for (int l = 0; l < static_cast<int>(layers.size()); ++l) {
      const ToyLayer& layer = layers[static_cast<std::size_t>(l)];
      const auto cells = static_cast<std::size_t>(layer.height) * layer.width;
      for (std::int64_t first = 0; first < cfg.instances; first += cfg.chunk_instances) {
        const std::int64_t count = std::min(cfg.chunk_instances, cfg.instances - first);
        std::vector<float> values(static_cast<std::size_t>(count) * layer.channels * cells);
        for (std::int64_t i = 0; i < count; ++i)
          for (int c = 0; c < layer.channels; ++c)
            fill(l, c, first + i,
                 std::span<float>(values).subspan((static_cast<std::size_t>(i) * layer.channels + c) * cells, cells));
        writer.append(l, count, values);
      }
    }
  };

  {
    DumpWriter writer(dir / "gen", "gen", ModelKind::generative, cfg.dataset_id, layer_specs(cfg.generator, cfg.dtype));
    chunked(writer, cfg.generator, [&](int l, int c, std::int64_t i, std::span<float> out) {
      fill_pattern(gen_pattern(l, c), i, out);
    });
    fx.generator = writer.finish();
  }

  const std::vector<UnitId> gen_pool = [&] {
    std::vector<UnitId> out;
    for (const auto& u : gen_units)
      if (!copy_of.contains({u.layer, u.channel})) out.push_back(u);
    return out;
  }();
  for (int m = 1; m <= cfg.discriminative_models; ++m) {
    const std::string model = fmt::format("disc{}", m);
    const std::vector<UnitId> disc_units = all_units(model, cfg.discriminative);
    if (cfg.planted > static_cast<int>(std::min(gen_pool.size(), disc_units.size())))
      throw Error(ErrorKind::InvalidArgument, fmt::format("cannot plant {} pairs", cfg.planted));
    std::mt19937_64 prng(mix(cfg.seed, {0xb0b0ull, static_cast<std::uint64_t>(m)}));
    const std::vector<UnitId> sources = draw(gen_pool, cfg.planted, prng);
    const std::vector<UnitId> partners = draw(disc_units, cfg.planted, prng);
    std::uniform_real_distribution<double> scale(0.5, 3.0), offset(-1.0, 2.0);

    std::map<std::pair<int, int>, Planted> planted;
    for (int p = 0; p < cfg.planted; ++p) {
      const UnitId& s = sources[static_cast<std::size_t>(p)];
      const UnitId& k = partners[static_cast<std::size_t>(p)];
      Planted pl;
      pl.pair = {s, k, scale(prng), offset(prng)};
      pl.source = gen_pattern(s.layer, s.channel);
      const ToyLayer& kl = cfg.discriminative[static_cast<std::size_t>(k.layer)];
      const Resolution kres{kl.height, kl.width};
      std::vector<float> native(static_cast<std::size_t>(pl.source.res.cells())), at_k(static_cast<std::size_t>(kres.cells()));
      double sum = 0.0, sum_sq = 0.0;
      for (std::int64_t i = 0; i < cfg.instances; ++i) {
        fill_pattern(pl.source, i, native);
        bilinear_resize(native, pl.source.res, at_k, kres);
        for (float v : at_k) {
          sum += v;
          sum_sq += static_cast<double>(v) * v;
        }
      }
      const double count = static_cast<double>(cfg.instances * kres.cells());
      const double var = count > 1 ? std::max(0.0, (sum_sq - sum * sum / count) / (count - 1)) : 0.0;
      pl.noise_std = cfg.noise * pl.pair.scale * std::sqrt(var);
      planted.emplace(std::pair{k.layer, k.channel}, pl);
      fx.planted.push_back(pl.pair);
    }

    DumpWriter writer(dir / model, model, ModelKind::discriminative, cfg.dataset_id,
                      layer_specs(cfg.discriminative, cfg.dtype));
    chunked(writer, cfg.discriminative, [&](int l, int c, std::int64_t i, std::span<float> out) {
      const ToyLayer& layer = cfg.discriminative[static_cast<std::size_t>(l)];
      auto it = planted.find({l, c});
      if (it == planted.end()) {
        fill_pattern({cfg.seed, m, l, c, {layer.height, layer.width}}, i, out);
        return;
      }
      const Planted& pl = it->second;
      std::vector<float> native(static_cast<std::size_t>(pl.source.res.cells()));
      fill_pattern(pl.source, i, native);
      bilinear_resize(native, pl.source.res, out, {layer.height, layer.width});
      std::mt19937_64 nrng(mix(cfg.seed, {0x5eedull, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(l),
                                          static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)}));
      std::normal_distribution<double> noise(0.0, 1.0);
      for (float& v : out) v = static_cast<float>(pl.pair.scale * v + pl.pair.offset + pl.noise_std * noise(nrng));
    });
    fx.discriminative.push_back(writer.finish());
  }
  std::sort(fx.planted.begin(), fx.planted.end(), [](const PlantedPair& a, const PlantedPair& b) {
    return std::tie(a.partner.model_id, a.generator, a.partner) < std::tie(b.partner.model_id, b.generator, b.partner);
  });

  if (cfg.image_size > 0) {
    const Resolution img{cfg.image_size, cfg.image_size};
    const ToyLayer& l0 = cfg.generator.front();
    std::vector<float> native(static_cast<std::size_t>(l0.height) * l0.width);
    std::vector<float> red(static_cast<std::size_t>(img.cells())), green(red.size());
    for (std::int64_t i = 0; i < cfg.instances; ++i) {
      fill_pattern(gen_pattern(0, 0), i, native);
      bilinear_resize(native, {l0.height, l0.width}, red, img);
      fill_pattern(gen_pattern(0, std::min(1, l0.channels - 1)), i, native);
      bilinear_resize(native, {l0.height, l0.width}, green, img);
      RgbImage image(img.width, img.height);
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          const std::size_t at = static_cast<std::size_t>(y) * img.width + x;
          std::uint8_t* px = image.at(y, x);
          px[0] = static_cast<std::uint8_t>(std::lround(255.0f * std::clamp(red[at], 0.0f, 1.0f)));
          px[1] = static_cast<std::uint8_t>(std::lround(255.0f * std::clamp(green[at], 0.0f, 1.0f)));
          px[2] = 128;
        }
      }
      write_png(dir / "images" / fmt::format("{:06}.png", i), image);
    }
  }

  json planted = json::array();
  for (const auto& p : fx.planted)
    planted.push_back({{"model", p.partner.model_id},
                       {"generator", unit_json(p.generator)},
                       {"partner", unit_json(p.partner)},
                       {"scale", p.scale},
                       {"offset", p.offset}});
  json duplicates = json::array();
  for (const auto& d : fx.duplicates) duplicates.push_back({{"source", unit_json(d.source)}, {"copy", unit_json(d.copy)}});
  json_util::write_file(dir / "planted.json", {{"format_version", 1},
                                               {"dataset_id", cfg.dataset_id},
                                               {"seed", cfg.seed},
                                               {"generator_model", "gen"},
                                               {"noise", cfg.noise},
                                               {"planted", std::move(planted)},
                                               {"duplicates", std::move(duplicates)}});
  return fx;
}

DumpManifest transform_dump(const DumpManifest& src, const fs::path& dir,
                            const std::function<std::pair<double, double>(const UnitId&)>& affine) {
  std::vector<LayerSpec> specs;
  for (const auto& l : src.layers) specs.push_back({l.name, l.channels, l.height, l.width, Dtype::f32});
  DumpWriter writer(dir, src.model_id, src.model_kind, src.dataset_id, specs);
  if (src.class_label) writer.set_class_label(*src.class_label);
  for (int l = 0; l < static_cast<int>(src.layers.size()); ++l) {
    const LayerDescriptor& layer = src.layer(l);
    std::vector<std::pair<double, double>> ab;
    for (int c = 0; c < layer.channels; ++c) ab.push_back(affine({src.model_id, l, c}));
    for (const Chunk& chunk : layer.chunks) {
      MapBatch batch = read_layer_batch(src, l, {chunk.first, chunk.count});
      const auto cells = static_cast<std::size_t>(layer.height) * layer.width;
      for (std::size_t at = 0; at < batch.values.size(); ++at) {
        const auto& [a, b] = ab[(at / cells) % static_cast<std::size_t>(layer.channels)];
        batch.values[at] = static_cast<float>(a * batch.values[at] + b);
      }
      writer.append(l, chunk.count, batch.values);
    }
  }
  return writer.finish();
}

}  // namespace rosetta
