// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

// JSON schemas of the mining artifacts passed between subcommands.
//
// matches.json   {"format_version", "k", "policy", "rank", "source_model",
//                 "target_model", "dataset_id", "instance_count",
//                 "entries": [{"source": {layer, channel},
//                              "neighbors": [{layer, channel, r, height, width}]}],
//                 "reverse_entries": [...same, target -> source...],
//                 "excluded": {"source": [{layer, channel}], "target": [...]},
//                 "provenance": {...}}
// rosetta.json   {"format_version", "generator_model", "discriminative_models",
//                 "k", "dataset_id", "instance_count",
//                 "tuples": [{"id", "generator": {layer, channel},
//                             "matches": {model: {layer, channel, r, height, width}},
//                             "synonyms": {model: [...]}}], "provenance"}
// clusters.json  {"format_version", "generator_model", "k",
//                 "clusters": [{"cluster_id", "members": [tuple id],
//                               "representative": tuple id}], "provenance"}

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rosetta/correlator.hpp"
#include "rosetta/matcher.hpp"

namespace rosetta {

struct MatchesFile {
  KnnTable forward;
  KnnTable reverse;
  ResolutionPolicy policy;
  std::string dataset_id;
  std::int64_t instance_count = 0;
  std::vector<UnitId> excluded_source;
  std::vector<UnitId> excluded_target;
  nlohmann::json provenance = nlohmann::json::object();
};

struct RosettaFile {
  std::string generator_model;
  std::vector<std::string> discriminative_models;
  int k = 0;
  std::string dataset_id;
  std::int64_t instance_count = 0;
  std::vector<RosettaTuple> tuples;  // tuple id = index
  nlohmann::json provenance = nlohmann::json::object();
};

struct ClusterRef {
  int cluster_id = 0;
  std::vector<std::size_t> members;
  std::size_t representative = 0;
};

struct ClustersFile {
  std::string generator_model;
  int k = 0;
  std::vector<ClusterRef> clusters;
  nlohmann::json provenance = nlohmann::json::object();
};

nlohmann::json to_json(const MatchesFile& file);
MatchesFile matches_from_json(const nlohmann::json& doc, const std::string& context);
void write_matches(const MatchesFile& file, const std::filesystem::path& path);
MatchesFile read_matches(const std::filesystem::path& path);

nlohmann::json to_json(const RosettaTuple& tuple);
RosettaTuple tuple_from_json(const nlohmann::json& doc, const std::string& generator_model,
                             const std::string& context);
nlohmann::json to_json(const RosettaFile& file);
void write_rosetta(const RosettaFile& file, const std::filesystem::path& path);
RosettaFile read_rosetta(const std::filesystem::path& path);

// Maps clusters back to tuple ids of `rosetta` (by generator unit).
ClustersFile make_clusters_file(const RosettaFile& rosetta, const std::vector<ConceptCluster>& clusters);
// Rebuilds full clusters from ids; throws InconsistentRun on dangling ids.
std::vector<ConceptCluster> resolve_clusters(const RosettaFile& rosetta, const ClustersFile& file);
void write_clusters(const ClustersFile& file, const std::filesystem::path& path);
ClustersFile read_clusters(const std::filesystem::path& path);

}  // namespace rosetta
