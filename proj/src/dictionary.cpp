// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "rosetta/artifacts.hpp"
#include "rosetta/error.hpp"
#include "rosetta/json_util.hpp"
#include "rosetta/parallel.hpp"

namespace rosetta {

using json_util::json;

namespace {

constexpr Rgb kViridis[256] = {
    { 68,   1,  84}, { 68,   2,  86}, { 69,   4,  87}, { 69,   5,  89},
    { 70,   7,  90}, { 70,   8,  92}, { 70,  10,  93}, { 70,  11,  94},
    { 71,  13,  96}, { 71,  14,  97}, { 71,  16,  99}, { 71,  17, 100},
    { 71,  19, 101}, { 72,  20, 103}, { 72,  22, 104}, { 72,  23, 105},
    { 72,  24, 106}, { 72,  26, 108}, { 72,  27, 109}, { 72,  28, 110},
    { 72,  29, 111}, { 72,  31, 112}, { 72,  32, 113}, { 72,  33, 115},
    { 72,  35, 116}, { 72,  36, 117}, { 72,  37, 118}, { 72,  38, 119},
    { 72,  40, 120}, { 72,  41, 121}, { 71,  42, 122}, { 71,  44, 122},
    { 71,  45, 123}, { 71,  46, 124}, { 71,  47, 125}, { 70,  48, 126},
    { 70,  50, 126}, { 70,  51, 127}, { 70,  52, 128}, { 69,  53, 129},
    { 69,  55, 129}, { 69,  56, 130}, { 68,  57, 131}, { 68,  58, 131},
    { 68,  59, 132}, { 67,  61, 132}, { 67,  62, 133}, { 66,  63, 133},
    { 66,  64, 134}, { 66,  65, 134}, { 65,  66, 135}, { 65,  68, 135},
    { 64,  69, 136}, { 64,  70, 136}, { 63,  71, 136}, { 63,  72, 137},
    { 62,  73, 137}, { 62,  74, 137}, { 62,  76, 138}, { 61,  77, 138},
    { 61,  78, 138}, { 60,  79, 138}, { 60,  80, 139}, { 59,  81, 139},
    { 59,  82, 139}, { 58,  83, 139}, { 58,  84, 140}, { 57,  85, 140},
    { 57,  86, 140}, { 56,  88, 140}, { 56,  89, 140}, { 55,  90, 140},
    { 55,  91, 141}, { 54,  92, 141}, { 54,  93, 141}, { 53,  94, 141},
    { 53,  95, 141}, { 52,  96, 141}, { 52,  97, 141}, { 51,  98, 141},
    { 51,  99, 141}, { 50, 100, 142}, { 50, 101, 142}, { 49, 102, 142},
    { 49, 103, 142}, { 49, 104, 142}, { 48, 105, 142}, { 48, 106, 142},
    { 47, 107, 142}, { 47, 108, 142}, { 46, 109, 142}, { 46, 110, 142},
    { 46, 111, 142}, { 45, 112, 142}, { 45, 113, 142}, { 44, 113, 142},
    { 44, 114, 142}, { 44, 115, 142}, { 43, 116, 142}, { 43, 117, 142},
    { 42, 118, 142}, { 42, 119, 142}, { 42, 120, 142}, { 41, 121, 142},
    { 41, 122, 142}, { 41, 123, 142}, { 40, 124, 142}, { 40, 125, 142},
    { 39, 126, 142}, { 39, 127, 142}, { 39, 128, 142}, { 38, 129, 142},
    { 38, 130, 142}, { 38, 130, 142}, { 37, 131, 142}, { 37, 132, 142},
    { 37, 133, 142}, { 36, 134, 142}, { 36, 135, 142}, { 35, 136, 142},
    { 35, 137, 142}, { 35, 138, 141}, { 34, 139, 141}, { 34, 140, 141},
    { 34, 141, 141}, { 33, 142, 141}, { 33, 143, 141}, { 33, 144, 141},
    { 33, 145, 140}, { 32, 146, 140}, { 32, 146, 140}, { 32, 147, 140},
    { 31, 148, 140}, { 31, 149, 139}, { 31, 150, 139}, { 31, 151, 139},
    { 31, 152, 139}, { 31, 153, 138}, { 31, 154, 138}, { 30, 155, 138},
    { 30, 156, 137}, { 30, 157, 137}, { 31, 158, 137}, { 31, 159, 136},
    { 31, 160, 136}, { 31, 161, 136}, { 31, 161, 135}, { 31, 162, 135},
    { 32, 163, 134}, { 32, 164, 134}, { 33, 165, 133}, { 33, 166, 133},
    { 34, 167, 133}, { 34, 168, 132}, { 35, 169, 131}, { 36, 170, 131},
    { 37, 171, 130}, { 37, 172, 130}, { 38, 173, 129}, { 39, 173, 129},
    { 40, 174, 128}, { 41, 175, 127}, { 42, 176, 127}, { 44, 177, 126},
    { 45, 178, 125}, { 46, 179, 124}, { 47, 180, 124}, { 49, 181, 123},
    { 50, 182, 122}, { 52, 182, 121}, { 53, 183, 121}, { 55, 184, 120},
    { 56, 185, 119}, { 58, 186, 118}, { 59, 187, 117}, { 61, 188, 116},
    { 63, 188, 115}, { 64, 189, 114}, { 66, 190, 113}, { 68, 191, 112},
    { 70, 192, 111}, { 72, 193, 110}, { 74, 193, 109}, { 76, 194, 108},
    { 78, 195, 107}, { 80, 196, 106}, { 82, 197, 105}, { 84, 197, 104},
    { 86, 198, 103}, { 88, 199, 101}, { 90, 200, 100}, { 92, 200,  99},
    { 94, 201,  98}, { 96, 202,  96}, { 99, 203,  95}, {101, 203,  94},
    {103, 204,  92}, {105, 205,  91}, {108, 205,  90}, {110, 206,  88},
    {112, 207,  87}, {115, 208,  86}, {117, 208,  84}, {119, 209,  83},
    {122, 209,  81}, {124, 210,  80}, {127, 211,  78}, {129, 211,  77},
    {132, 212,  75}, {134, 213,  73}, {137, 213,  72}, {139, 214,  70},
    {142, 214,  69}, {144, 215,  67}, {147, 215,  65}, {149, 216,  64},
    {152, 216,  62}, {155, 217,  60}, {157, 217,  59}, {160, 218,  57},
    {162, 218,  55}, {165, 219,  54}, {168, 219,  52}, {170, 220,  50},
    {173, 220,  48}, {176, 221,  47}, {178, 221,  45}, {181, 222,  43},
    {184, 222,  41}, {186, 222,  40}, {189, 223,  38}, {192, 223,  37},
    {194, 223,  35}, {197, 224,  33}, {200, 224,  32}, {202, 225,  31},
    {205, 225,  29}, {208, 225,  28}, {210, 226,  27}, {213, 226,  26},
    {216, 226,  25}, {218, 227,  25}, {221, 227,  24}, {223, 227,  24},
    {226, 228,  24}, {229, 228,  25}, {231, 228,  25}, {234, 229,  26},
    {236, 229,  27}, {239, 229,  28}, {241, 229,  29}, {244, 230,  30},
    {246, 230,  32}, {248, 230,  33}, {251, 231,  35}, {253, 231,  37},};

using StatsKey = std::tuple<UnitId, int, int>;

StatsKey key_of(const UnitId& u, Resolution r) { return {u, r.height, r.width}; }

// Every (unit, resolution) a tuple needs stats for: the generator and the
// partner of each match and synonym, at that pair's comparison resolution.
void referenced_keys(const RosettaTuple& t, std::set<StatsKey>& out) {
  for (const auto& [model, m] : t.matches) {
    out.insert(key_of(t.generator, m.resolution));
    out.insert(key_of(m.unit, m.resolution));
  }
  for (const auto& [model, list] : t.synonyms) {
    for (const auto& m : list) {
      out.insert(key_of(t.generator, m.resolution));
      out.insert(key_of(m.unit, m.resolution));
    }
  }
}

json stats_json(const UnitStats& s) {
  return {{"model_id", s.unit.model_id}, {"layer", s.unit.layer},      {"channel", s.unit.channel},
          {"height", s.resolution.height}, {"width", s.resolution.width}, {"mean", s.mean},
          {"variance", s.variance},        {"sample_count", s.sample_count}};
}

UnitStats stats_from(const json& e, std::string_view ctx) {
  UnitStats s;
  s.unit.model_id = json_util::require_string(e, "model_id", ctx);
  s.unit.layer = static_cast<int>(json_util::require_int(e, "layer", ctx));
  s.unit.channel = static_cast<int>(json_util::require_int(e, "channel", ctx));
  s.resolution.height = static_cast<int>(json_util::require_int(e, "height", ctx));
  s.resolution.width = static_cast<int>(json_util::require_int(e, "width", ctx));
  s.mean = json_util::require_number(e, "mean", ctx);
  s.variance = json_util::require_number(e, "variance", ctx);
  s.sample_count = json_util::require_int(e, "sample_count", ctx);
  return s;
}

}  // namespace

const UnitStats& RosettaDictionary::stats_for(const UnitId& unit, Resolution res) const {
  auto it = std::lower_bound(stats.begin(), stats.end(), key_of(unit, res), [](const UnitStats& s, const StatsKey& k) {
    return key_of(s.unit, s.resolution) < k;
  });
  if (it == stats.end() || key_of(it->unit, it->resolution) != key_of(unit, res))
    throw Error(ErrorKind::MissingStats,
                fmt::format("dictionary holds no stats for {} at {}", to_string(unit), to_string(res)));
  return *it;
}

std::vector<UnitId> RosettaDictionary::generator_units() const {
  std::vector<UnitId> out;
  for (const auto& c : concepts)
    for (const auto& m : c.members) out.push_back(m.generator);
  std::sort(out.begin(), out.end());
  return out;
}

RosettaDictionary curate(std::span<const RosettaTuple> tuples, std::span<const ConceptCluster> clusters,
                         std::span<const StatsTable> stats_tables, const RunInfo& run,
                         const DictionaryParams& params, json provenance) {
  if (params.clip_z <= 0.0) throw Error(ErrorKind::InvalidArgument, "clip_z must be > 0");
  if (params.blend_weight < 0.0 || params.blend_weight > 1.0)
    throw Error(ErrorKind::InvalidArgument, "blend weight must lie in [0, 1]");
  if (params.colormap != "viridis")
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown colormap '{}'", params.colormap));

  const std::set<std::string> models(run.discriminative_models.begin(), run.discriminative_models.end());
  std::map<UnitId, const RosettaTuple*> by_generator;
  for (const auto& t : tuples) {
    if (t.generator.model_id != run.generator_model)
      throw Error(ErrorKind::InconsistentRun,
                  fmt::format("tuple {} is not from generator '{}'", to_string(t.generator), run.generator_model));
    std::set<std::string> tuple_models;
    for (const auto& [model, m] : t.matches) tuple_models.insert(model);
    if (tuple_models != models)
      throw Error(ErrorKind::InconsistentRun,
                  fmt::format("tuple {} does not cover the run's discriminative models", to_string(t.generator)));
    by_generator.emplace(t.generator, &t);
  }

  RosettaDictionary dict;
  dict.generator_model = run.generator_model;
  dict.discriminative_models.assign(models.begin(), models.end());
  dict.dataset_id = run.dataset_id;
  dict.k = run.k;
  dict.instance_count = run.instance_count;
  dict.params = params;
  dict.provenance = std::move(provenance);

  std::set<UnitId> covered;
  std::set<StatsKey> needed;
  for (const auto& c : clusters) {
    Concept entry;
    entry.concept_id = static_cast<int>(dict.concepts.size());
    entry.members = c.members;
    entry.representative = c.representative;
    if (entry.members.empty() || entry.representative >= entry.members.size())
      throw Error(ErrorKind::InconsistentRun, fmt::format("cluster {} is malformed", c.cluster_id));
    for (const auto& m : entry.members) {
      auto it = by_generator.find(m.generator);
      if (it == by_generator.end() || !(*it->second == m))
        throw Error(ErrorKind::InconsistentRun,
                    fmt::format("cluster {} member {} is not among the tuples", c.cluster_id, to_string(m.generator)));
      if (!covered.insert(m.generator).second)
        throw Error(ErrorKind::InconsistentRun,
                    fmt::format("tuple {} appears in more than one cluster", to_string(m.generator)));
      referenced_keys(m, needed);
    }
    dict.concepts.push_back(std::move(entry));
  }
  if (covered.size() != by_generator.size())
    throw Error(ErrorKind::InconsistentRun, "clusters do not cover every tuple");

  for (const auto& key : needed) {
    const auto& [unit, h, w] = key;
    const Resolution res{h, w};
    const UnitStats* found = nullptr;
    for (const auto& table : stats_tables) {
      const UnitStats* s = table.find(unit, res);
      if (s == nullptr) continue;
      if (found != nullptr && !(*found == *s))
        throw Error(ErrorKind::InconsistentRun,
                    fmt::format("conflicting stats for {} at {}", to_string(unit), to_string(res)));
      found = s;
    }
    if (found == nullptr)
      throw Error(ErrorKind::MissingStats, fmt::format("no stats for {} at {}", to_string(unit), to_string(res)));
    if (found->sample_count != run.instance_count * res.cells())
      throw Error(ErrorKind::InconsistentRun,
                  fmt::format("stats for {} at {} cover {} samples, run has n={}", to_string(unit), to_string(res),
                              found->sample_count, run.instance_count));
    dict.stats.push_back(*found);
  }
  validate(dict);
  return dict;
}

void validate(const RosettaDictionary& dict) {
  if (dict.format_version != 1)
    throw Error(ErrorKind::SchemaViolation, fmt::format("dictionary format_version {}", dict.format_version));
  for (std::size_t i = 1; i < dict.stats.size(); ++i) {
    if (!(key_of(dict.stats[i - 1].unit, dict.stats[i - 1].resolution) < key_of(dict.stats[i].unit, dict.stats[i].resolution)))
      throw Error(ErrorKind::SchemaViolation, "dictionary stats must be sorted and unique");
  }
  std::set<StatsKey> needed;
  for (std::size_t i = 0; i < dict.concepts.size(); ++i) {
    const Concept& c = dict.concepts[i];
    if (c.concept_id != static_cast<int>(i))
      throw Error(ErrorKind::SchemaViolation, fmt::format("concept ids must be consecutive; found {} at {}", c.concept_id, i));
    if (c.members.empty() || c.representative >= c.members.size())
      throw Error(ErrorKind::SchemaViolation, fmt::format("concept {} has no valid representative", i));
    for (const auto& m : c.members) {
      if (m.generator.model_id != dict.generator_model)
        throw Error(ErrorKind::SchemaViolation, fmt::format("concept {} member from '{}'", i, m.generator.model_id));
      referenced_keys(m, needed);
    }
  }
  for (const auto& [unit, h, w] : needed) dict.stats_for(unit, {h, w});
  if (needed.size() != dict.stats.size())
    throw Error(ErrorKind::SchemaViolation, "dictionary embeds stats no concept references");
}

json to_json(const RosettaDictionary& d) {
  json concepts = json::array();
  for (const auto& c : d.concepts) {
    json members = json::array();
    for (const auto& m : c.members) members.push_back(to_json(m));
    concepts.push_back({{"concept_id", c.concept_id}, {"representative", c.representative}, {"members", std::move(members)}});
  }
  json stats = json::array();
  for (const auto& s : d.stats) stats.push_back(stats_json(s));
  return {{"format_version", d.format_version},
          {"generator_model", d.generator_model},
          {"discriminative_models", d.discriminative_models},
          {"dataset_id", d.dataset_id},
          {"k", d.k},
          {"instance_count", d.instance_count},
          {"params", {{"clip_z", d.params.clip_z}, {"blend_weight", d.params.blend_weight}, {"colormap", d.params.colormap}}},
          {"concepts", std::move(concepts)},
          {"stats", std::move(stats)},
          {"provenance", d.provenance}};
}

RosettaDictionary dictionary_from_json(const json& doc, const std::string& ctx) {
  RosettaDictionary d;
  d.format_version = static_cast<int>(json_util::require_int(doc, "format_version", ctx));
  d.generator_model = json_util::require_string(doc, "generator_model", ctx);
  for (const auto& m : json_util::require_array(doc, "discriminative_models", ctx)) {
    if (!m.is_string()) throw Error(ErrorKind::SchemaViolation, ctx + ": model ids must be strings");
    d.discriminative_models.push_back(m.get<std::string>());
  }
  d.dataset_id = json_util::require_string(doc, "dataset_id", ctx);
  d.k = static_cast<int>(json_util::require_int(doc, "k", ctx));
  d.instance_count = json_util::require_int(doc, "instance_count", ctx);
  const json& p = json_util::require_object(doc, "params", ctx);
  d.params.clip_z = json_util::require_number(p, "clip_z", ctx);
  d.params.blend_weight = json_util::require_number(p, "blend_weight", ctx);
  d.params.colormap = json_util::require_string(p, "colormap", ctx);
  const json& concepts = json_util::require_array(doc, "concepts", ctx);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const std::string cctx = fmt::format("{}.concepts[{}]", ctx, i);
    Concept c;
    c.concept_id = static_cast<int>(json_util::require_int(concepts[i], "concept_id", cctx));
    c.representative = static_cast<std::size_t>(json_util::require_int(concepts[i], "representative", cctx));
    for (const auto& m : json_util::require_array(concepts[i], "members", cctx))
      c.members.push_back(tuple_from_json(m, d.generator_model, cctx));
    d.concepts.push_back(std::move(c));
  }
  for (const auto& s : json_util::require_array(doc, "stats", ctx)) d.stats.push_back(stats_from(s, ctx));
  if (doc.contains("provenance")) d.provenance = doc["provenance"];
  validate(d);
  return d;
}

void write_dictionary(const RosettaDictionary& dict, const std::filesystem::path& path) {
  validate(dict);
  json_util::write_file(path, to_json(dict));
}

RosettaDictionary read_dictionary(const std::filesystem::path& path) {
  return dictionary_from_json(json_util::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// heatmaps

float normalize_value(float value, const UnitStats& stats, double clip_z) {
  const double z = (static_cast<double>(value) - stats.mean) / std::sqrt(stats.variance);
  return static_cast<float>(std::clamp(z, 0.0, clip_z) / clip_z);
}

Map normalize_map(const Map& map, const UnitStats& stats, double clip_z) {
  if (!(stats.variance > 0.0))
    throw Error(ErrorKind::ZeroVariance, fmt::format("{} is constant over the dataset", to_string(stats.unit)));
  if (!(clip_z > 0.0)) throw Error(ErrorKind::InvalidArgument, "clip_z must be > 0");
  Map out(map.res);
  for (std::size_t i = 0; i < map.values.size(); ++i) out.values[i] = normalize_value(map.values[i], stats, clip_z);
  return out;
}

Rgb colormap_color(float t) {
  const float c = std::clamp(t, 0.0f, 1.0f);
  return kViridis[static_cast<std::size_t>(std::lround(c * 255.0f))];
}

RgbImage blend_heatmap(const RgbImage& base, const Map& normalized, double weight) {
  if (normalized.res.height != base.height || normalized.res.width != base.width)
    throw Error(ErrorKind::InvalidArgument, "heatmap size differs from base image");
  RgbImage out = base;
  if (weight == 0.0) return out;
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      const Rgb color = colormap_color(normalized.at(y, x));
      std::uint8_t* px = out.at(y, x);
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (1.0 - weight) * px[ch] + weight * color[static_cast<std::size_t>(ch)];
        px[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

std::pair<UnitId, Resolution> render_unit(const RosettaDictionary& dict, const Concept& entry,
                                          const std::string& model_id) {
  const RosettaTuple& rep = entry.members.at(entry.representative);
  if (model_id == dict.generator_model) return {rep.generator, rep.matches.begin()->second.resolution};
  auto it = rep.matches.find(model_id);
  if (it == rep.matches.end())
    throw Error(ErrorKind::ModelMismatch, fmt::format("dictionary has no units of model '{}'", model_id));
  return {it->second.unit, it->second.resolution};
}

std::vector<std::filesystem::path> render_gallery(const RosettaDictionary& dict, const DumpManifest& dump,
                                                  const std::filesystem::path& images_dir,
                                                  const std::filesystem::path& out_dir, int samples, int threads) {
  namespace fs = std::filesystem;
  if (samples < 1) throw Error(ErrorKind::InvalidArgument, "samples must be >= 1");
  if (samples > dump.instance_count)
    throw Error(ErrorKind::RangeOutOfBounds,
                fmt::format("{} samples requested, dump has {} instances", samples, dump.instance_count));
  if (dump.dataset_id != dict.dataset_id)
    throw Error(ErrorKind::InconsistentRun,
                fmt::format("dump dataset '{}' differs from dictionary dataset '{}'", dump.dataset_id, dict.dataset_id));

  std::vector<RgbImage> bases;
  for (int i = 0; i < samples; ++i) bases.push_back(read_png(images_dir / fmt::format("{:06}.png", i)));

  std::vector<std::vector<fs::path>> written(dict.concepts.size());
  parallel_for(dict.concepts.size(), threads, [&](std::size_t ci) {
    const Concept& entry = dict.concepts[ci];
    const auto [unit, res] = render_unit(dict, entry, dump.model_id);
    const UnitStats& stats = dict.stats_for(unit, res);
    const MapBatch batch = read_layer_batch(dump, unit.layer, {0, samples});
    for (int i = 0; i < samples; ++i) {
      const RgbImage& base = bases[static_cast<std::size_t>(i)];
      const Map at_stats_res = bilinear_resize(batch.map_copy(i, unit.channel), res);
      const Map norm = bilinear_resize(normalize_map(at_stats_res, stats, dict.params.clip_z), {base.height, base.width});
      const fs::path p = out_dir / fmt::format("concept_{}", entry.concept_id) / fmt::format("sample_{}.png", i);
      write_png(p, blend_heatmap(base, norm, dict.params.blend_weight));
      written[ci].push_back(p);
    }
  });

  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>Concept dictionary</title></head>\n<body>\n";
  html << fmt::format("<h1>{} ({} concepts, model {})</h1>\n", dict.dataset_id, dict.concepts.size(), dump.model_id);
  for (const auto& entry : dict.concepts) {
    const auto [unit, res] = render_unit(dict, entry, dump.model_id);
    html << fmt::format("<h2>Concept #{}</h2>\n<p>unit layer {} channel {}, {} members</p>\n<p>", entry.concept_id,
                        unit.layer, unit.channel, entry.members.size());
    for (int i = 0; i < samples; ++i)
      html << fmt::format("<img src=\"concept_{}/sample_{}.png\" alt=\"Concept #{} sample {}\"> ", entry.concept_id, i,
                          entry.concept_id, i);
    html << "</p>\n";
  }
  html << "</body>\n</html>\n";
  json_util::write_text(out_dir / "index.html", html.str());

  std::vector<fs::path> out;
  for (auto& list : written) out.insert(out.end(), list.begin(), list.end());
  out.push_back(out_dir / "index.html");
  return out;
}

}  // namespace rosetta
