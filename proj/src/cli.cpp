// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rosetta/artifacts.hpp"
#include "rosetta/correlator.hpp"
#include "rosetta/dictionary.hpp"
#include "rosetta/dump_store.hpp"
#include "rosetta/edit_maps.hpp"
#include "rosetta/error.hpp"
#include "rosetta/json_util.hpp"
#include "rosetta/matcher.hpp"
#include "rosetta/parallel.hpp"
#include "rosetta/toy_fixture.hpp"
#include "rosetta/unit_stats.hpp"

namespace rosetta::cli {

using json_util::json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  int threads = default_thread_count();
  std::int64_t batch_size = 64;
  std::string policy = "pairwise-max";
  std::optional<int> grid;
};

struct StatsArgs {
  std::string dump;
  std::vector<std::string> partners;
  std::string out;
};

struct MatchArgs {
  std::string dump_a, dump_b, stats_a, stats_b, out;
  int k = 5;
  std::string rank = "descending";
  std::optional<std::uint64_t> mem_cap;
};

struct MergeArgs {
  std::vector<std::string> matches;
  std::string out;
};

struct ClusterArgs {
  std::string rosetta, self_matches, out;
};

struct CurateArgs {
  std::string rosetta, clusters, out;
  std::vector<std::string> stats;
  DictionaryParams params;
};

struct RenderArgs {
  std::string dict, dump, images, out;
  int samples = 3;
};

struct EditArgs {
  std::string dict, dump, spec, out;
  std::int64_t instance = 0;
  bool edited_only = false;
};

struct ValidateArgs {
  std::string dump, dict, targets;
};

struct ToyArgs {
  std::string out;
  std::string generator = "64:8x8";
  std::string discriminative = "64:8x8";
  std::string dtype = "f32";
  ToyConfig config;
};

bool is_threads_flag(const std::string& a) { return a == "--threads" || a == "-j"; }

// argv minus the thread count, which never changes an output byte.
json recorded_argv(const std::vector<std::string>& args) {
  json out = json::array();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (is_threads_flag(args[i])) {
      ++i;
      continue;
    }
    if (args[i].rfind("--threads=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

json provenance(const std::string& subcommand, const std::vector<std::string>& args, json config) {
  return {{"tool", "rosetta"},
          {"version", kToolVersion},
          {"subcommand", subcommand},
          {"argv", recorded_argv(args)},
          {"config", std::move(config)}};
}

std::uint64_t resolve_mem_cap(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("ROSETTA_MEM_CAP"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0' || v == 0)
      throw UsageError(fmt::format("ROSETTA_MEM_CAP must be a positive byte count, got '{}'", env));
    return v;
  }
  return CorrelateOptions{}.mem_cap_bytes;
}

ResolutionPolicy policy_of(const Common& c) {
  try {
    return parse_policy(c.policy, c.grid);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

StatsTable compute_stats(const DumpManifest& self, const std::vector<DumpManifest>& partners,
                         const ResolutionPolicy& policy, const Common& c) {
  std::set<std::pair<int, Resolution>> needed;
  if (partners.empty()) {
    for (int l = 0; l < static_cast<int>(self.layers.size()); ++l)
      needed.insert({l, policy.mode == PolicyMode::global_grid ? policy.target({}, {}) : self.layer(l).resolution()});
  }
  for (const auto& p : partners)
    for (const auto& lr : required_resolutions(self, p, policy)) needed.insert(lr);
  StatsTable table;
  for (const auto& [layer, res] : needed) table.insert_all(accumulate_stats(self, layer, res, c.batch_size, c.threads));
  return table;
}

StatsTable load_or_compute(const std::string& path, const DumpManifest& self, const DumpManifest& partner,
                           const ResolutionPolicy& policy, const Common& c) {
  if (path.empty()) return compute_stats(self, {partner}, policy, c);
  StatsTable t = read_stats_json(path);
  for (const auto& [key, s] : t.entries())
    if (s.unit.model_id != self.model_id)
      throw Error(ErrorKind::ModelMismatch,
                  fmt::format("{} holds stats of '{}', dump is '{}'", path, s.unit.model_id, self.model_id));
  return t;
}

MatchesFile to_matches_file(CorrelationResult&& r, const DumpManifest& a, const ResolutionPolicy& policy, json prov) {
  MatchesFile f;
  f.forward = std::move(r.a_to_b);
  f.reverse = std::move(r.b_to_a);
  f.policy = policy;
  f.dataset_id = a.dataset_id;
  f.instance_count = a.instance_count;
  f.excluded_source = std::move(r.excluded_a);
  f.excluded_target = std::move(r.excluded_b);
  f.provenance = std::move(prov);
  return f;
}

CorrelateOptions correlate_options(const MatchArgs& m, const Common& c, const ResolutionPolicy& policy) {
  CorrelateOptions opt;
  opt.policy = policy;
  opt.k = m.k;
  opt.batch_size = c.batch_size;
  opt.mem_cap_bytes = resolve_mem_cap(m.mem_cap);
  opt.threads = c.threads;
  try {
    opt.rank = parse_rank(m.rank);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return opt;
}

json match_config(const CorrelateOptions& opt) {
  return {{"k", opt.k},
          {"policy", to_string(opt.policy)},
          {"rank", to_string(opt.rank)},
          {"batch_size", opt.batch_size},
          {"mem_cap_bytes", opt.mem_cap_bytes}};
}

void check_same_run(const MatchesFile& a, const MatchesFile& b, const std::string& what) {
  if (a.dataset_id != b.dataset_id || a.instance_count != b.instance_count)
    throw Error(ErrorKind::InconsistentRun,
                fmt::format("{}: dataset '{}' (n={}) vs '{}' (n={})", what, a.dataset_id, a.instance_count,
                            b.dataset_id, b.instance_count));
  if (a.forward.k != b.forward.k)
    throw Error(ErrorKind::KMismatch, fmt::format("{}: K={} vs K={}", what, a.forward.k, b.forward.k));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-model activation correlation mining", "rosetta"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool with_policy) {
    sub->add_option("--threads,-j", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    if (with_policy) {
      sub->add_option("--batch-size,--batch", common.batch_size, "Instances per streamed batch")
          ->check(CLI::PositiveNumber);
      sub->add_option("--policy", common.policy, "pairwise-max or global-grid[:N]");
      sub->add_option("--grid", common.grid, "Grid side for global-grid");
    }
  };

  StatsArgs stats_args;
  auto* stats = app.add_subcommand("stats", "Per-unit mean and variance of a dump");
  stats->add_option("--dump", stats_args.dump, "Dump directory")->required();
  stats->add_option("--partner", stats_args.partners, "Dumps it will be matched against");
  stats->add_option("--out", stats_args.out, "Output stats.json (default DUMP/stats.json)");
  add_common(stats, true);

  MatchArgs match_args;
  auto add_match_options = [&](CLI::App* sub) {
    sub->add_option("--k", match_args.k, "Nearest neighbors per unit")->check(CLI::PositiveNumber);
    sub->add_option("--rank", match_args.rank, "descending or ascending");
    sub->add_option("--mem-cap-bytes", match_args.mem_cap, "Accumulator memory cap (env ROSETTA_MEM_CAP)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", match_args.out, "Output matches.json")->required();
    add_common(sub, true);
  };
  auto* match = app.add_subcommand("match", "Top-K correlations between two models");
  match->add_option("--dump-a", match_args.dump_a, "First dump")->required();
  match->add_option("--dump-b", match_args.dump_b, "Second dump")->required();
  match->add_option("--stats-a", match_args.stats_a, "Stats of the first dump");
  match->add_option("--stats-b", match_args.stats_b, "Stats of the second dump");
  add_match_options(match);

  auto* self_match = app.add_subcommand("self-match", "Top-K correlations of a model with itself");
  self_match->add_option("--dump", match_args.dump_a, "Dump directory")->required();
  self_match->add_option("--stats", match_args.stats_a, "Stats of the dump");
  add_match_options(self_match);

  MergeArgs merge_args;
  auto* merge = app.add_subcommand("merge", "Best buddies merged across discriminative models");
  merge->add_option("--matches", merge_args.matches, "Generator-vs-model matches files")->required();
  merge->add_option("--out", merge_args.out, "Output rosetta.json")->required();

  ClusterArgs cluster_args;
  auto* cluster = app.add_subcommand("cluster", "Concept clusters from generator self matches");
  cluster->add_option("--rosetta", cluster_args.rosetta, "rosetta.json")->required();
  cluster->add_option("--self-matches", cluster_args.self_matches, "Generator self-match file")->required();
  cluster->add_option("--out", cluster_args.out, "Output clusters.json")->required();

  CurateArgs curate_args;
  auto* curate_cmd = app.add_subcommand("curate", "Concept dictionary with embedded stats");
  curate_cmd->add_option("--rosetta", curate_args.rosetta, "rosetta.json")->required();
  curate_cmd->add_option("--clusters", curate_args.clusters, "clusters.json")->required();
  curate_cmd->add_option("--stats", curate_args.stats, "stats.json of every model")->required();
  curate_cmd->add_option("--clip-z", curate_args.params.clip_z, "z-score mapped to the top of the colormap");
  curate_cmd->add_option("--blend-weight", curate_args.params.blend_weight, "Heatmap opacity in [0, 1]");
  curate_cmd->add_option("--colormap", curate_args.params.colormap, "Colormap name");
  curate_cmd->add_option("--out", curate_args.out, "Output dictionary.json")->required();

  RenderArgs render_args;
  auto* render = app.add_subcommand("render", "Heatmap gallery of every concept");
  render->add_option("--dict", render_args.dict, "dictionary.json")->required();
  render->add_option("--dump", render_args.dump, "Dump of one dictionary model")->required();
  render->add_option("--images", render_args.images, "Directory of {instance:06}.png")->required();
  render->add_option("--samples", render_args.samples, "Instances per concept")->check(CLI::PositiveNumber);
  render->add_option("--out", render_args.out, "Gallery directory")->required();
  add_common(render, false);

  EditArgs edit_args;
  auto* edit = app.add_subcommand("edit-maps", "Edited target maps for re-optimization");
  edit->add_option("--dict", edit_args.dict, "dictionary.json")->required();
  edit->add_option("--dump", edit_args.dump, "Generator dump")->required();
  edit->add_option("--instance", edit_args.instance, "Source instance")->required();
  edit->add_option("--spec", edit_args.spec, "edits.json")->required();
  edit->add_option("--out", edit_args.out, "Targets directory")->required();
  edit->add_flag("--edited-only", edit_args.edited_only, "Only write units an edit touches");

  ValidateArgs validate_args;
  auto* validate_cmd = app.add_subcommand("validate", "Check a dump, dictionary or targets directory");
  validate_cmd->add_option("--dump", validate_args.dump, "Dump directory");
  validate_cmd->add_option("--dict", validate_args.dict, "dictionary.json");
  validate_cmd->add_option("--targets", validate_args.targets, "Targets directory");

  ToyArgs toy_args;
  auto* toy = app.add_subcommand("toy", "Synthetic planted-match dumps");
  toy->add_option("--out", toy_args.out, "Output directory")->required();
  toy->add_option("--instances", toy_args.config.instances, "n")->check(CLI::PositiveNumber);
  toy->add_option("--seed", toy_args.config.seed, "Seed");
  toy->add_option("--dataset", toy_args.config.dataset_id, "dataset_id");
  toy->add_option("--gen-layers", toy_args.generator, "Generator layers C:HxW,...");
  toy->add_option("--disc-layers", toy_args.discriminative, "Discriminative layers C:HxW,...");
  toy->add_option("--models", toy_args.config.discriminative_models, "Discriminative model count")
      ->check(CLI::NonNegativeNumber);
  toy->add_option("--planted", toy_args.config.planted, "Planted pairs per model")->check(CLI::NonNegativeNumber);
  toy->add_option("--noise", toy_args.config.noise, "Noise std as a fraction of the signal std")
      ->check(CLI::NonNegativeNumber);
  toy->add_option("--duplicates", toy_args.config.duplicates, "Exact duplicate generator channels")
      ->check(CLI::NonNegativeNumber);
  toy->add_option("--chunk", toy_args.config.chunk_instances, "Instances per chunk file")->check(CLI::PositiveNumber);
  toy->add_option("--dtype", toy_args.dtype, "f32 or f16")->check(CLI::IsMember({"f32", "f16"}));
  toy->add_option("--images", toy_args.config.image_size, "Image side in pixels (0: none)")
      ->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    if (chosen == stats) {
      const DumpManifest dump = read_manifest(stats_args.dump);
      std::vector<DumpManifest> partners;
      for (const auto& p : stats_args.partners) partners.push_back(read_manifest(p));
      const StatsTable table = compute_stats(dump, partners, policy_of(common), common);
      const fs::path dest = stats_args.out.empty() ? fs::path(stats_args.dump) / "stats.json" : fs::path(stats_args.out);
      write_stats_json(table, dest);
      out << fmt::format("{} stats entries for {} -> {}\n", table.size(), dump.model_id, dest.string());
    } else if (chosen == match || chosen == self_match) {
      const ResolutionPolicy policy = policy_of(common);
      CorrelateOptions opt = correlate_options(match_args, common, policy);
      const DumpManifest a = read_manifest(match_args.dump_a);
      const bool self = chosen == self_match;
      const DumpManifest b = self ? a : read_manifest(match_args.dump_b);
      const StatsTable sa = load_or_compute(match_args.stats_a, a, b, policy, common);
      const StatsTable sb = self ? sa : load_or_compute(match_args.stats_b, b, a, policy, common);
      CorrelationResult r = correlate_models(a, b, sa, sb, opt);
      const int passes = r.passes;
      const std::uint64_t peak = r.peak_bytes;
      const MatchesFile f = to_matches_file(std::move(r), a, policy, provenance(name, args, match_config(opt)));
      write_matches(f, match_args.out);
      out << fmt::format("{} -> {}: {} + {} entries, {} passes, peak {} bytes -> {}\n", a.model_id, b.model_id,
                         f.forward.entries.size(), f.reverse.entries.size(), passes, peak, match_args.out);
    } else if (chosen == merge) {
      std::vector<MatchesFile> files;
      std::vector<BestBuddySet> sets;
      for (const auto& p : merge_args.matches) {
        files.push_back(read_matches(p));
        if (files.size() > 1) check_same_run(files.front(), files.back(), p);
        sets.push_back(best_buddies(files.back().forward, files.back().reverse));
      }
      RosettaFile rf;
      rf.generator_model = sets.front().model_1;
      for (const auto& s : sets) rf.discriminative_models.push_back(s.model_2);
      std::sort(rf.discriminative_models.begin(), rf.discriminative_models.end());
      rf.k = sets.front().k;
      rf.dataset_id = files.front().dataset_id;
      rf.instance_count = files.front().instance_count;
      rf.tuples = merge_models(sets);
      rf.provenance = provenance(name, args, json::object());
      write_rosetta(rf, merge_args.out);
      out << fmt::format("{} tuples over {} models -> {}\n", rf.tuples.size(), sets.size(), merge_args.out);
    } else if (chosen == cluster) {
      const RosettaFile rf = read_rosetta(cluster_args.rosetta);
      const MatchesFile self = read_matches(cluster_args.self_matches);
      if (self.forward.source_model != rf.generator_model || self.forward.target_model != rf.generator_model)
        throw Error(ErrorKind::GeneratorMismatch,
                    fmt::format("self matches are {} -> {}, generator is '{}'", self.forward.source_model,
                                self.forward.target_model, rf.generator_model));
      if (self.forward.k != rf.k)
        throw Error(ErrorKind::KMismatch, fmt::format("self matches K={}, tuples K={}", self.forward.k, rf.k));
      if (self.dataset_id != rf.dataset_id || self.instance_count != rf.instance_count)
        throw Error(ErrorKind::InconsistentRun, "self matches and tuples come from different dumps");
      const BestBuddySet self_bb = best_buddies(self.forward, self.reverse);
      ClustersFile cf = make_clusters_file(rf, cluster_tuples(rf.tuples, self_bb));
      cf.provenance = provenance(name, args, json::object());
      write_clusters(cf, cluster_args.out);
      out << fmt::format("{} clusters from {} tuples -> {}\n", cf.clusters.size(), rf.tuples.size(), cluster_args.out);
    } else if (chosen == curate_cmd) {
      const RosettaFile rf = read_rosetta(curate_args.rosetta);
      const ClustersFile cf = read_clusters(curate_args.clusters);
      const std::vector<ConceptCluster> clusters = resolve_clusters(rf, cf);
      std::vector<StatsTable> tables;
      for (const auto& p : curate_args.stats) tables.push_back(read_stats_json(p));
      const RunInfo run{rf.generator_model, rf.discriminative_models, rf.dataset_id, rf.k, rf.instance_count};
      const json config = {{"clip_z", curate_args.params.clip_z},
                           {"blend_weight", curate_args.params.blend_weight},
                           {"colormap", curate_args.params.colormap}};
      const RosettaDictionary dict =
          curate(rf.tuples, clusters, tables, run, curate_args.params, provenance(name, args, config));
      write_dictionary(dict, curate_args.out);
      out << fmt::format("{} concepts, {} stats entries -> {}\n", dict.concepts.size(), dict.stats.size(),
                         curate_args.out);
    } else if (chosen == render) {
      const RosettaDictionary dict = read_dictionary(render_args.dict);
      const DumpManifest dump = read_manifest(render_args.dump);
      const auto files =
          render_gallery(dict, dump, render_args.images, render_args.out, render_args.samples, common.threads);
      out << fmt::format("{} files -> {}\n", files.size(), render_args.out);
    } else if (chosen == edit) {
      const RosettaDictionary dict = read_dictionary(edit_args.dict);
      const DumpManifest dump = read_manifest(edit_args.dump);
      const EditSpec spec = read_edit_spec(edit_args.spec, dict.generator_model);
      const TargetMaps targets = build_targets(dict, dump, edit_args.instance, spec, edit_args.edited_only);
      write_targets(targets, dump, edit_args.out,
                    provenance(name, args, {{"edited_only", edit_args.edited_only}}));
      const auto edited = std::count_if(targets.maps.begin(), targets.maps.end(),
                                        [](const TargetMap& t) { return t.op.has_value(); });
      out << fmt::format("{} target maps ({} edited) -> {}\n", targets.maps.size(), edited, edit_args.out);
    } else if (chosen == validate_cmd) {
      if (validate_args.dump.empty() && validate_args.dict.empty() && validate_args.targets.empty())
        throw UsageError("validate needs --dump, --dict or --targets");
      if (!validate_args.dump.empty()) {
        const DumpManifest m = read_manifest(validate_args.dump);
        out << fmt::format("ok: dump '{}' ({}), dataset '{}', {} instances, {} layers, {} units\n", m.model_id,
                           to_string(m.model_kind), m.dataset_id, m.instance_count, m.layers.size(), m.unit_count());
      }
      if (!validate_args.dict.empty()) {
        const RosettaDictionary d = read_dictionary(validate_args.dict);
        out << fmt::format("ok: dictionary of '{}', {} concepts, {} stats entries\n", d.generator_model,
                           d.concepts.size(), d.stats.size());
      }
      if (!validate_args.targets.empty()) {
        const TargetMaps t = read_targets(validate_args.targets);
        out << fmt::format("ok: targets of instance {}, {} units\n", t.source_instance, t.maps.size());
      }
    } else if (chosen == toy) {
      ToyConfig cfg = toy_args.config;
      try {
        cfg.generator = parse_toy_layers(toy_args.generator, "g");
        cfg.discriminative = parse_toy_layers(toy_args.discriminative, "d");
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      cfg.dtype = toy_args.dtype == "f16" ? Dtype::f16 : Dtype::f32;
      const ToyFixture fx = make_toy(cfg, toy_args.out);
      out << fmt::format("gen + {} models, {} planted pairs, {} duplicates -> {}\n", fx.discriminative.size(),
                         fx.planted.size(), fx.duplicates.size(), toy_args.out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace rosetta::cli
