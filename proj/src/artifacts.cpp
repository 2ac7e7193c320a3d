// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/artifacts.hpp"

#include <set>

#include <fmt/format.h>

#include "rosetta/error.hpp"
#include "rosetta/json_util.hpp"

namespace rosetta {

using json_util::json;

namespace {

constexpr int kArtifactVersion = 1;

int as_int(const json& obj, std::string_view key, std::string_view ctx) {
  return static_cast<int>(json_util::require_int(obj, key, ctx));
}

json unit_ref(int layer, int channel) { return {{"layer", layer}, {"channel", channel}}; }

json neighbor_json(int layer, int channel, double r, Resolution res) {
  return {{"layer", layer}, {"channel", channel}, {"r", r}, {"height", res.height}, {"width", res.width}};
}

Neighbor neighbor_from(const json& j, std::string_view ctx) {
  return {as_int(j, "layer", ctx), as_int(j, "channel", ctx), json_util::require_number(j, "r", ctx),
          {as_int(j, "height", ctx), as_int(j, "width", ctx)}};
}

json entries_json(const KnnTable& table) {
  json entries = json::array();
  for (const auto& e : table.entries) {
    json nbs = json::array();
    for (const auto& n : e.neighbors) nbs.push_back(neighbor_json(n.layer, n.channel, n.r, n.resolution));
    entries.push_back({{"source", unit_ref(e.layer, e.channel)}, {"neighbors", std::move(nbs)}});
  }
  return entries;
}

std::vector<KnnEntry> entries_from(const json& arr, std::string_view ctx) {
  std::vector<KnnEntry> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ectx = fmt::format("{}[{}]", ctx, i);
    const json& src = json_util::require_object(arr[i], "source", ectx);
    KnnEntry e{as_int(src, "layer", ectx), as_int(src, "channel", ectx), {}};
    for (const auto& n : json_util::require_array(arr[i], "neighbors", ectx)) e.neighbors.push_back(neighbor_from(n, ectx));
    if (!out.empty() && std::pair{out.back().layer, out.back().channel} >= std::pair{e.layer, e.channel})
      throw Error(ErrorKind::SchemaViolation, ectx + ": entries must be sorted by (layer, channel)");
    out.push_back(std::move(e));
  }
  return out;
}

json units_json(const std::vector<UnitId>& units) {
  json arr = json::array();
  for (const auto& u : units) arr.push_back(unit_ref(u.layer, u.channel));
  return arr;
}

std::vector<UnitId> units_from(const json& arr, const std::string& model, std::string_view ctx) {
  std::vector<UnitId> out;
  for (const auto& u : arr) out.push_back({model, as_int(u, "layer", ctx), as_int(u, "channel", ctx)});
  return out;
}

json match_json(const TupleMatch& m) {
  return neighbor_json(m.unit.layer, m.unit.channel, m.r, m.resolution);
}

TupleMatch match_from(const json& j, const std::string& model, std::string_view ctx) {
  const Neighbor n = neighbor_from(j, ctx);
  return {{model, n.layer, n.channel}, n.r, n.resolution};
}

void check_version(const json& doc, std::string_view ctx) {
  if (json_util::require_int(doc, "format_version", ctx) != kArtifactVersion)
    throw Error(ErrorKind::SchemaViolation, fmt::format("{}: unsupported format_version", ctx));
}

json provenance_of(const json& doc) {
  auto it = doc.find("provenance");
  return it == doc.end() ? json::object() : *it;
}

}  // namespace

// ---------------------------------------------------------------------------
// matches

json to_json(const MatchesFile& f) {
  json doc = json::object();
  doc["format_version"] = kArtifactVersion;
  doc["k"] = f.forward.k;
  doc["policy"] = to_string(f.policy);
  doc["rank"] = to_string(f.forward.rank);
  doc["source_model"] = f.forward.source_model;
  doc["target_model"] = f.forward.target_model;
  doc["dataset_id"] = f.dataset_id;
  doc["instance_count"] = f.instance_count;
  doc["entries"] = entries_json(f.forward);
  doc["reverse_entries"] = entries_json(f.reverse);
  doc["excluded"] = {{"source", units_json(f.excluded_source)}, {"target", units_json(f.excluded_target)}};
  doc["provenance"] = f.provenance;
  return doc;
}

MatchesFile matches_from_json(const json& doc, const std::string& ctx) {
  check_version(doc, ctx);
  MatchesFile f;
  const int k = as_int(doc, "k", ctx);
  const RankOrder rank = parse_rank(json_util::require_string(doc, "rank", ctx));
  f.policy = parse_policy(json_util::require_string(doc, "policy", ctx));
  f.dataset_id = json_util::require_string(doc, "dataset_id", ctx);
  f.instance_count = json_util::require_int(doc, "instance_count", ctx);
  const std::string source = json_util::require_string(doc, "source_model", ctx);
  const std::string target = json_util::require_string(doc, "target_model", ctx);
  f.forward = {source, target, k, rank, entries_from(json_util::require_array(doc, "entries", ctx), ctx + ".entries")};
  f.reverse = {target, source, k, rank,
               entries_from(json_util::require_array(doc, "reverse_entries", ctx), ctx + ".reverse_entries")};
  const json& excluded = json_util::require_object(doc, "excluded", ctx);
  f.excluded_source = units_from(json_util::require_array(excluded, "source", ctx), source, ctx);
  f.excluded_target = units_from(json_util::require_array(excluded, "target", ctx), target, ctx);
  f.provenance = provenance_of(doc);
  return f;
}

void write_matches(const MatchesFile& f, const std::filesystem::path& path) {
  json_util::write_file(path, to_json(f));
}

MatchesFile read_matches(const std::filesystem::path& path) {
  return matches_from_json(json_util::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// rosetta tuples

json to_json(const RosettaTuple& t) {
  json matches = json::object();
  for (const auto& [model, m] : t.matches) matches[model] = match_json(m);
  json synonyms = json::object();
  for (const auto& [model, list] : t.synonyms) {
    json arr = json::array();
    for (const auto& m : list) arr.push_back(match_json(m));
    synonyms[model] = std::move(arr);
  }
  return {{"generator", unit_ref(t.generator.layer, t.generator.channel)},
          {"matches", std::move(matches)},
          {"synonyms", std::move(synonyms)}};
}

RosettaTuple tuple_from_json(const json& doc, const std::string& generator, const std::string& ctx) {
  RosettaTuple t;
  const json& g = json_util::require_object(doc, "generator", ctx);
  t.generator = {generator, as_int(g, "layer", ctx), as_int(g, "channel", ctx)};
  for (const auto& [model, m] : json_util::require_object(doc, "matches", ctx).items())
    t.matches.emplace(model, match_from(m, model, ctx));
  if (doc.contains("synonyms")) {
    for (const auto& [model, arr] : json_util::require_object(doc, "synonyms", ctx).items()) {
      std::vector<TupleMatch> list;
      for (const auto& m : arr) list.push_back(match_from(m, model, ctx));
      t.synonyms.emplace(model, std::move(list));
    }
  }
  return t;
}

json to_json(const RosettaFile& f) {
  json tuples = json::array();
  for (std::size_t i = 0; i < f.tuples.size(); ++i) {
    json t = to_json(f.tuples[i]);
    t["id"] = i;
    tuples.push_back(std::move(t));
  }
  return {{"format_version", kArtifactVersion},
          {"generator_model", f.generator_model},
          {"discriminative_models", f.discriminative_models},
          {"k", f.k},
          {"dataset_id", f.dataset_id},
          {"instance_count", f.instance_count},
          {"tuples", std::move(tuples)},
          {"provenance", f.provenance}};
}

void write_rosetta(const RosettaFile& f, const std::filesystem::path& path) {
  json_util::write_file(path, to_json(f));
}

RosettaFile read_rosetta(const std::filesystem::path& path) {
  const json doc = json_util::read_file(path);
  const std::string ctx = path.string();
  check_version(doc, ctx);
  RosettaFile f;
  f.generator_model = json_util::require_string(doc, "generator_model", ctx);
  for (const auto& m : json_util::require_array(doc, "discriminative_models", ctx)) {
    if (!m.is_string()) throw Error(ErrorKind::SchemaViolation, ctx + ": model ids must be strings");
    f.discriminative_models.push_back(m.get<std::string>());
  }
  f.k = as_int(doc, "k", ctx);
  f.dataset_id = json_util::require_string(doc, "dataset_id", ctx);
  f.instance_count = json_util::require_int(doc, "instance_count", ctx);
  const json& tuples = json_util::require_array(doc, "tuples", ctx);
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    const std::string tctx = fmt::format("{}.tuples[{}]", ctx, i);
    if (json_util::require_int(tuples[i], "id", tctx) != static_cast<std::int64_t>(i))
      throw Error(ErrorKind::SchemaViolation, tctx + ": tuple ids must be consecutive from 0");
    f.tuples.push_back(tuple_from_json(tuples[i], f.generator_model, tctx));
  }
  f.provenance = provenance_of(doc);
  return f;
}

// ---------------------------------------------------------------------------
// clusters

ClustersFile make_clusters_file(const RosettaFile& rosetta, const std::vector<ConceptCluster>& clusters) {
  std::map<UnitId, std::size_t> id_of;
  for (std::size_t i = 0; i < rosetta.tuples.size(); ++i) id_of.emplace(rosetta.tuples[i].generator, i);
  ClustersFile f;
  f.generator_model = rosetta.generator_model;
  f.k = rosetta.k;
  for (const auto& c : clusters) {
    ClusterRef ref;
    ref.cluster_id = c.cluster_id;
    for (const auto& m : c.members) {
      auto it = id_of.find(m.generator);
      if (it == id_of.end())
        throw Error(ErrorKind::InconsistentRun,
                    fmt::format("cluster member {} is not a tuple in rosetta file", to_string(m.generator)));
      ref.members.push_back(it->second);
    }
    ref.representative = ref.members.at(c.representative);
    f.clusters.push_back(std::move(ref));
  }
  return f;
}

std::vector<ConceptCluster> resolve_clusters(const RosettaFile& rosetta, const ClustersFile& f) {
  if (f.generator_model != rosetta.generator_model)
    throw Error(ErrorKind::InconsistentRun,
                fmt::format("clusters are for '{}', tuples for '{}'", f.generator_model, rosetta.generator_model));
  if (f.k != rosetta.k)
    throw Error(ErrorKind::InconsistentRun,
                fmt::format("clusters built with K={}, tuples with K={}", f.k, rosetta.k));
  std::vector<ConceptCluster> out;
  for (const auto& ref : f.clusters) {
    ConceptCluster c;
    c.cluster_id = ref.cluster_id;
    bool found_rep = false;
    for (std::size_t id : ref.members) {
      if (id >= rosetta.tuples.size())
        throw Error(ErrorKind::InconsistentRun, fmt::format("cluster {} names tuple {} of {}",
                                                            ref.cluster_id, id, rosetta.tuples.size()));
      if (id == ref.representative) {
        c.representative = c.members.size();
        found_rep = true;
      }
      c.members.push_back(rosetta.tuples[id]);
    }
    if (c.members.empty() || !found_rep)
      throw Error(ErrorKind::InconsistentRun,
                  fmt::format("cluster {} is empty or its representative is not a member", ref.cluster_id));
    out.push_back(std::move(c));
  }
  return out;
}

void write_clusters(const ClustersFile& f, const std::filesystem::path& path) {
  json clusters = json::array();
  for (const auto& c : f.clusters)
    clusters.push_back({{"cluster_id", c.cluster_id}, {"members", c.members}, {"representative", c.representative}});
  json_util::write_file(path, {{"format_version", kArtifactVersion},
                               {"generator_model", f.generator_model},
                               {"k", f.k},
                               {"clusters", std::move(clusters)},
                               {"provenance", f.provenance}});
}

ClustersFile read_clusters(const std::filesystem::path& path) {
  const json doc = json_util::read_file(path);
  const std::string ctx = path.string();
  check_version(doc, ctx);
  ClustersFile f;
  f.generator_model = json_util::require_string(doc, "generator_model", ctx);
  f.k = as_int(doc, "k", ctx);
  for (const auto& c : json_util::require_array(doc, "clusters", ctx)) {
    ClusterRef ref;
    ref.cluster_id = as_int(c, "cluster_id", ctx);
    for (const auto& m : json_util::require_array(c, "members", ctx)) {
      if (!m.is_number_unsigned()) throw Error(ErrorKind::SchemaViolation, ctx + ": member ids must be non-negative");
      ref.members.push_back(m.get<std::size_t>());
    }
    ref.representative = static_cast<std::size_t>(json_util::require_int(c, "representative", ctx));
    f.clusters.push_back(std::move(ref));
  }
  f.provenance = provenance_of(doc);
  return f;
}

}  // namespace rosetta
