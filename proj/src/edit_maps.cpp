// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/edit_maps.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "rosetta/error.hpp"
#include "rosetta/json_util.hpp"

namespace rosetta {

using json_util::json;

namespace {

constexpr const char* kTargetsManifest = "targets_manifest.json";

const std::pair<EditOp, const char*> kOpNames[] = {
    {EditOp::zoom_in, "zoom_in"}, {EditOp::shift, "shift"},    {EditOp::copy_paste, "copy_paste"},
    {EditOp::set_min, "set_min"}, {EditOp::scale, "scale"},
};

// round(d * size / 4), halves away from zero.
int scaled_stride(int d, int size) { return static_cast<int>(std::lround(static_cast<double>(d) * size / 4.0)); }

}  // namespace

std::string to_string(EditOp op) {
  for (const auto& [o, name] : kOpNames)
    if (o == op) return name;
  return "unknown";
}

EditOp parse_edit_op(const std::string& name) {
  for (const auto& [o, n] : kOpNames)
    if (name == n) return o;
  throw Error(ErrorKind::InvalidSpec, fmt::format("unknown edit op '{}'", name));
}

Map apply_zoom(const Map& map) {
  const int h = map.res.height, w = map.res.width;
  if (h < 2 || w < 2)
    throw Error(ErrorKind::InvalidArgument, fmt::format("zoom needs a map of at least 2x2, got {}", to_string(map.res)));
  const Map big = bilinear_resize(map, {2 * h, 2 * w});
  const int r0 = h / 2, c0 = w / 2;
  Map out(map.res);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = big.at(r0 + r, c0 + c);
  return out;
}

Map apply_shift(const Map& map, int dx, int dy) {
  const int h = map.res.height, w = map.res.width;
  const int sx = scaled_stride(dx, w);
  const int sy = scaled_stride(dy, h);
  if (std::abs(sx) >= w || std::abs(sy) >= h)
    throw Error(ErrorKind::ShiftOutOfRange,
                fmt::format("stride ({}, {}) on a {} map moves ({}, {}) cells", dx, dy, to_string(map.res), sx, sy));
  Map out(map.res, 0.0f);
  for (int r = 0; r < h; ++r) {
    const int sr = r - sy;
    if (sr < 0 || sr >= h) continue;
    for (int c = 0; c < w; ++c) {
      const int sc = c - sx;
      if (sc >= 0 && sc < w) out.at(r, c) = map.at(sr, sc);
    }
  }
  return out;
}

Map apply_copy_paste(const Map& map, int dx) {
  const Map left = apply_shift(map, -dx, 0);
  const Map right = apply_shift(map, dx, 0);
  const int split = map.res.width / 2;
  Map out(map.res);
  for (int r = 0; r < map.res.height; ++r)
    for (int c = 0; c < map.res.width; ++c) out.at(r, c) = c < split ? left.at(r, c) : right.at(r, c);
  return out;
}

Map apply_concept_scale(const Map& map, ScaleMode mode, double factor) {
  if (map.values.empty()) return map;
  if (mode == ScaleMode::scale && !(factor > 0.0))
    throw Error(ErrorKind::InvalidArgument, fmt::format("scale factor must be > 0, got {}", factor));
  const float lo = *std::min_element(map.values.begin(), map.values.end());
  Map out(map.res, lo);
  if (mode == ScaleMode::set_min) return out;
  for (std::size_t i = 0; i < map.values.size(); ++i)
    out.values[i] = static_cast<float>(lo + factor * (static_cast<double>(map.values[i]) - lo));
  return out;
}

Map apply_edit(const Map& map, const EditCommand& cmd) {
  switch (cmd.op) {
    case EditOp::zoom_in: return apply_zoom(map);
    case EditOp::shift: return apply_shift(map, cmd.dx, cmd.dy);
    case EditOp::copy_paste: return apply_copy_paste(map, cmd.dx);
    case EditOp::set_min: return apply_concept_scale(map, ScaleMode::set_min);
    case EditOp::scale: return apply_concept_scale(map, ScaleMode::scale, cmd.factor);
  }
  throw Error(ErrorKind::InvalidSpec, "unknown edit op");
}

// ---------------------------------------------------------------------------
// edits.json

json to_json(const EditSpec& spec) {
  json commands = json::array();
  for (const auto& c : spec.commands) {
    json cj;
    if (c.all_units) {
      cj["target"] = "all";
    } else {
      json units = json::array();
      for (const auto& u : c.units) units.push_back({{"layer", u.layer}, {"channel", u.channel}});
      cj["target"] = std::move(units);
    }
    cj["op"] = to_string(c.op);
    if (c.op == EditOp::shift || c.op == EditOp::copy_paste) cj["dx"] = c.dx;
    if (c.op == EditOp::shift) cj["dy"] = c.dy;
    if (c.op == EditOp::scale) cj["factor"] = c.factor;
    commands.push_back(std::move(cj));
  }
  return {{"init_latent", spec.init_latent == InitLatent::source ? "source" : "random"},
          {"seed", spec.seed},
          {"commands", std::move(commands)}};
}

EditSpec edit_spec_from_json(const json& doc, const std::string& generator_model, const std::string& ctx) {
  if (!doc.is_object()) throw Error(ErrorKind::SchemaViolation, ctx + ": edit spec must be an object");
  json_util::reject_unknown(doc, {"init_latent", "seed", "commands"}, ctx);
  EditSpec spec;
  if (doc.contains("init_latent")) {
    const std::string init = json_util::require_string(doc, "init_latent", ctx);
    if (init == "source") spec.init_latent = InitLatent::source;
    else if (init == "random") spec.init_latent = InitLatent::random;
    else throw Error(ErrorKind::InvalidSpec, fmt::format("{}: init_latent '{}'", ctx, init));
  }
  if (doc.contains("seed")) {
    const std::int64_t seed = json_util::require_int(doc, "seed", ctx);
    if (seed < 0) throw Error(ErrorKind::InvalidSpec, ctx + ": seed must be >= 0");
    spec.seed = static_cast<std::uint64_t>(seed);
  }
  const json& commands = json_util::require_array(doc, "commands", ctx);
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const json& cj = commands[i];
    const std::string cctx = fmt::format("{}.commands[{}]", ctx, i);
    if (!cj.is_object()) throw Error(ErrorKind::SchemaViolation, cctx + ": must be an object");
    json_util::reject_unknown(cj, {"target", "op", "dx", "dy", "factor"}, cctx);
    EditCommand c;
    c.op = parse_edit_op(json_util::require_string(cj, "op", cctx));
    const json& target = json_util::require(cj, "target", cctx);
    if (target.is_string()) {
      if (target.get<std::string>() != "all")
        throw Error(ErrorKind::InvalidSpec, fmt::format("{}: target must be \"all\" or a unit list", cctx));
      c.all_units = true;
    } else if (target.is_array()) {
      for (const auto& u : target)
        c.units.push_back({generator_model, static_cast<int>(json_util::require_int(u, "layer", cctx)),
                           static_cast<int>(json_util::require_int(u, "channel", cctx))});
    } else {
      throw Error(ErrorKind::SchemaViolation, cctx + ": target must be \"all\" or a unit list");
    }
    if (cj.contains("dx")) c.dx = static_cast<int>(json_util::require_int(cj, "dx", cctx));
    if (cj.contains("dy")) c.dy = static_cast<int>(json_util::require_int(cj, "dy", cctx));
    if (cj.contains("factor")) c.factor = json_util::require_number(cj, "factor", cctx);
    spec.commands.push_back(std::move(c));
  }
  return spec;
}

EditSpec read_edit_spec(const std::filesystem::path& path, const std::string& generator_model) {
  return edit_spec_from_json(json_util::read_file(path), generator_model, path.string());
}

void validate_spec(const EditSpec& spec, const RosettaDictionary& dict) {
  const std::vector<UnitId> known = dict.generator_units();
  std::set<UnitId> claimed;
  bool all_claimed = false;
  for (std::size_t i = 0; i < spec.commands.size(); ++i) {
    const EditCommand& c = spec.commands[i];
    if (c.op == EditOp::scale && !(c.factor > 0.0))
      throw Error(ErrorKind::InvalidSpec, fmt::format("command {}: scale factor must be > 0", i));
    if (c.op == EditOp::copy_paste && c.dy != 0)
      throw Error(ErrorKind::InvalidSpec, fmt::format("command {}: copy_paste takes only dx", i));
    if (c.all_units) {
      if (all_claimed || !claimed.empty())
        throw Error(ErrorKind::InvalidSpec, fmt::format("command {} targets units another command edits", i));
      all_claimed = true;
      continue;
    }
    if (c.units.empty()) throw Error(ErrorKind::InvalidSpec, fmt::format("command {} names no units", i));
    for (const auto& u : c.units) {
      if (!std::binary_search(known.begin(), known.end(), u))
        throw Error(ErrorKind::UnknownUnit, fmt::format("{} is not a Rosetta unit of the dictionary", to_string(u)));
      if (all_claimed || !claimed.insert(u).second)
        throw Error(ErrorKind::InvalidSpec, fmt::format("{} is edited by more than one command", to_string(u)));
    }
  }
}

// ---------------------------------------------------------------------------
// targets

const TargetMap* TargetMaps::find(const UnitId& unit) const {
  auto it = std::lower_bound(maps.begin(), maps.end(), unit,
                             [](const TargetMap& m, const UnitId& u) { return m.unit < u; });
  return it != maps.end() && it->unit == unit ? &*it : nullptr;
}

TargetMaps build_targets(const RosettaDictionary& dict, const DumpManifest& dump, std::int64_t instance,
                         const EditSpec& spec, bool edited_only) {
  if (dump.model_id != dict.generator_model)
    throw Error(ErrorKind::ModelMismatch,
                fmt::format("dump is of '{}', dictionary generator is '{}'", dump.model_id, dict.generator_model));
  if (instance < 0 || instance >= dump.instance_count)
    throw Error(ErrorKind::RangeOutOfBounds,
                fmt::format("instance {} outside [0, {})", instance, dump.instance_count));
  validate_spec(spec, dict);

  std::map<UnitId, const EditCommand*> ops;
  const std::vector<UnitId> rosetta_units = dict.generator_units();
  for (const auto& c : spec.commands) {
    if (c.all_units)
      for (const auto& u : rosetta_units) ops[u] = &c;
    else
      for (const auto& u : c.units) ops[u] = &c;
  }
  std::vector<UnitId> wanted;
  if (edited_only) {
    for (const auto& [u, c] : ops) wanted.push_back(u);
  } else {
    wanted = rosetta_units;
  }

  TargetMaps out;
  out.source_instance = instance;
  out.spec = spec;
  std::map<int, MapBatch> batches;
  for (const auto& u : wanted) {
    if (u.layer < 0 || u.layer >= static_cast<int>(dump.layers.size()) ||
        u.channel < 0 || u.channel >= dump.layer(u.layer).channels)
      throw Error(ErrorKind::UnknownUnit, fmt::format("{} is not in the dump", to_string(u)));
    auto it = batches.find(u.layer);
    if (it == batches.end()) it = batches.emplace(u.layer, read_layer_batch(dump, u.layer, {instance, 1})).first;
    TargetMap t;
    t.unit = u;
    t.layer_name = dump.layer(u.layer).name;
    t.map = it->second.map_copy(0, u.channel);
    if (auto op = ops.find(u); op != ops.end()) {
      t.map = apply_edit(t.map, *op->second);
      t.op = op->second->op;
    }
    out.maps.push_back(std::move(t));
  }
  return out;
}

void write_targets(const TargetMaps& targets, const DumpManifest& source, const std::filesystem::path& dir,
                   const json& provenance) {
  std::map<int, std::vector<const TargetMap*>> by_layer;
  for (const auto& t : targets.maps) {
    if (t.unit.model_id != source.model_id)
      throw Error(ErrorKind::ModelMismatch, fmt::format("{} is not a unit of '{}'", to_string(t.unit), source.model_id));
    by_layer[t.unit.layer].push_back(&t);
  }

  std::vector<LayerSpec> specs;
  for (const auto& [layer, maps] : by_layer) {
    const LayerDescriptor& d = source.layer(layer);
    specs.push_back({d.name, d.channels, d.height, d.width, Dtype::f32});
  }
  DumpWriter writer(dir, source.model_id, source.model_kind, source.dataset_id, specs);

  json units = json::array();
  int dump_layer = 0;
  for (const auto& [layer, maps] : by_layer) {
    MapBatch raw = read_layer_batch(source, layer, {targets.source_instance, 1});
    const auto cells = static_cast<std::size_t>(raw.res.cells());
    for (const TargetMap* t : maps) {
      if (t->map.res != raw.res)
        throw Error(ErrorKind::SizeMismatch,
                    fmt::format("target {} is {}, layer is {}", to_string(t->unit), to_string(t->map.res),
                                to_string(raw.res)));
      std::copy(t->map.values.begin(), t->map.values.end(),
                raw.values.begin() + static_cast<std::ptrdiff_t>(cells * static_cast<std::size_t>(t->unit.channel)));
      units.push_back({{"layer", layer},
                       {"layer_name", t->layer_name},
                       {"channel", t->unit.channel},
                       {"dump_layer", dump_layer},
                       {"edited", t->op.has_value()},
                       {"op", t->op ? json(to_string(*t->op)) : json(nullptr)}});
    }
    writer.append(dump_layer, 1, raw.values);
    ++dump_layer;
  }
  writer.finish();

  json doc = {{"format_version", 1},
              {"source_model", source.model_id},
              {"dataset_id", source.dataset_id},
              {"source_instance", targets.source_instance},
              {"spec", to_json(targets.spec)},
              {"units", std::move(units)},
              {"provenance", provenance}};
  json_util::write_file(dir / kTargetsManifest, doc);
}

TargetMaps read_targets(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / kTargetsManifest;
  const json doc = json_util::read_file(path);
  const std::string ctx = path.string();
  if (json_util::require_int(doc, "format_version", ctx) != 1)
    throw Error(ErrorKind::SchemaViolation, ctx + ": unsupported format_version");
  const std::string model = json_util::require_string(doc, "source_model", ctx);
  const DumpManifest mini = read_manifest(dir);
  if (mini.instance_count != 1 || mini.model_id != model)
    throw Error(ErrorKind::SchemaViolation, ctx + ": target dump must hold one instance of the source model");

  TargetMaps out;
  out.source_instance = json_util::require_int(doc, "source_instance", ctx);
  out.spec = edit_spec_from_json(json_util::require_object(doc, "spec", ctx), model, ctx + ".spec");
  std::map<int, MapBatch> batches;
  for (const auto& u : json_util::require_array(doc, "units", ctx)) {
    TargetMap t;
    t.unit = {model, static_cast<int>(json_util::require_int(u, "layer", ctx)),
              static_cast<int>(json_util::require_int(u, "channel", ctx))};
    t.layer_name = json_util::require_string(u, "layer_name", ctx);
    const int dl = static_cast<int>(json_util::require_int(u, "dump_layer", ctx));
    if (dl < 0 || dl >= static_cast<int>(mini.layers.size()) || mini.layer(dl).name != t.layer_name ||
        t.unit.channel < 0 || t.unit.channel >= mini.layer(dl).channels)
      throw Error(ErrorKind::SchemaViolation, fmt::format("{}: {} does not resolve in the target dump", ctx, to_string(t.unit)));
    auto it = batches.find(dl);
    if (it == batches.end()) it = batches.emplace(dl, read_layer_batch(mini, dl, {0, 1})).first;
    t.map = it->second.map_copy(0, t.unit.channel);
    const json& op = json_util::require(u, "op", ctx);
    if (!op.is_null()) t.op = parse_edit_op(op.get<std::string>());
    out.maps.push_back(std::move(t));
  }
  std::sort(out.maps.begin(), out.maps.end(), [](const TargetMap& a, const TargetMap& b) { return a.unit < b.unit; });
  return out;
}

}  // namespace rosetta
