// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/matcher.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "rosetta/error.hpp"

namespace rosetta {

bool BestBuddySet::contains(const UnitId& a, const UnitId& b) const {
  return std::binary_search(pairs.begin(), pairs.end(), BuddyPair{a, b, 0.0, {}},
                            [](const BuddyPair& x, const BuddyPair& y) {
                              return std::tie(x.first, x.second) < std::tie(y.first, y.second);
                            });
}

namespace {

void sort_pairs(std::vector<BuddyPair>& pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const BuddyPair& x, const BuddyPair& y) {
    return std::tie(x.first, x.second) < std::tie(y.first, y.second);
  });
}

bool in_list(const KnnEntry& entry, int layer, int channel) {
  return std::any_of(entry.neighbors.begin(), entry.neighbors.end(),
                     [&](const Neighbor& n) { return n.layer == layer && n.channel == channel; });
}

// Best first: r descending, then partner ascending.
bool match_before(const TupleMatch& x, const TupleMatch& y) {
  if (x.r != y.r) return x.r > y.r;
  return x.unit < y.unit;
}

}  // namespace

BestBuddySet best_buddies(const KnnTable& ab, const KnnTable& ba) {
  if (ab.k != ba.k)
    throw Error(ErrorKind::KMismatch,
                fmt::format("k-NN tables built with K={} and K={}", ab.k, ba.k));
  if (ab.source_model != ba.target_model || ab.target_model != ba.source_model)
    throw Error(ErrorKind::ModelMismatch,
                fmt::format("tables {}->{} and {}->{} are not reverse directions", ab.source_model,
                            ab.target_model, ba.source_model, ba.target_model));
  BestBuddySet out;
  out.model_1 = ab.source_model;
  out.model_2 = ab.target_model;
  out.k = ab.k;
  for (const auto& entry : ab.entries) {
    for (const auto& nb : entry.neighbors) {
      const KnnEntry* back = ba.find(nb.layer, nb.channel);
      if (back == nullptr || !in_list(*back, entry.layer, entry.channel)) continue;
      out.pairs.push_back({{ab.source_model, entry.layer, entry.channel},
                           {ab.target_model, nb.layer, nb.channel},
                           nb.r,
                           nb.resolution});
    }
  }
  sort_pairs(out.pairs);
  return out;
}

BestBuddySet reversed(const BestBuddySet& set) {
  BestBuddySet out{set.model_2, set.model_1, set.k, {}};
  out.pairs.reserve(set.pairs.size());
  for (const auto& p : set.pairs) out.pairs.push_back({p.second, p.first, p.r, p.resolution});
  sort_pairs(out.pairs);
  return out;
}

double RosettaTuple::mean_r() const {
  if (matches.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [model, m] : matches) total += m.r;
  return total / static_cast<double>(matches.size());
}

std::vector<RosettaTuple> merge_models(std::span<const BestBuddySet> sets) {
  if (sets.empty()) throw Error(ErrorKind::InvalidArgument, "merge_models needs at least one set");
  const std::string& generator = sets.front().model_1;
  std::set<std::string> seen_models;
  for (const auto& s : sets) {
    if (s.model_1 != generator)
      throw Error(ErrorKind::GeneratorMismatch,
                  fmt::format("best-buddy sets reference generators '{}' and '{}'", generator,
                              s.model_1));
    if (s.k != sets.front().k)
      throw Error(ErrorKind::KMismatch,
                  fmt::format("best-buddy sets built with K={} and K={}", sets.front().k, s.k));
    if (!seen_models.insert(s.model_2).second)
      throw Error(ErrorKind::ModelMismatch,
                  fmt::format("model '{}' appears in more than one set", s.model_2));
  }

  std::vector<std::map<UnitId, std::vector<TupleMatch>>> partners(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (const auto& p : sets[i].pairs) partners[i][p.first].push_back({p.second, p.r, p.resolution});
    for (auto& [unit, list] : partners[i]) std::sort(list.begin(), list.end(), match_before);
  }

  std::vector<RosettaTuple> out;
  for (const auto& [unit, first_list] : partners.front()) {
    bool everywhere = true;
    for (std::size_t i = 1; i < sets.size() && everywhere; ++i) everywhere = partners[i].contains(unit);
    if (!everywhere) continue;
    RosettaTuple t;
    t.generator = unit;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const auto& list = partners[i].at(unit);
      t.matches.emplace(sets[i].model_2, list.front());
      if (list.size() > 1)
        t.synonyms.emplace(sets[i].model_2, std::vector<TupleMatch>(list.begin() + 1, list.end()));
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::pair<UnitId, UnitId>> tuple_pairs(std::span<const RosettaTuple> tuples,
                                                   const std::string& model) {
  std::vector<std::pair<UnitId, UnitId>> out;
  for (const auto& t : tuples) {
    if (auto it = t.matches.find(model); it != t.matches.end())
      out.emplace_back(t.generator, it->second.unit);
    if (auto it = t.synonyms.find(model); it != t.synonyms.end())
      for (const auto& s : it->second) out.emplace_back(t.generator, s.unit);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ConceptCluster> cluster_tuples(std::span<const RosettaTuple> tuples,
                                           const BestBuddySet& self_bb) {
  if (self_bb.model_1 != self_bb.model_2)
    throw Error(ErrorKind::ModelMismatch,
                fmt::format("self matches pair '{}' with '{}'", self_bb.model_1, self_bb.model_2));
  std::map<UnitId, std::size_t> index;
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    if (tuples[i].generator.model_id != self_bb.model_1)
      throw Error(ErrorKind::GeneratorMismatch,
                  fmt::format("tuple generator '{}' but self matches are for '{}'",
                              tuples[i].generator.model_id, self_bb.model_1));
    if (!index.emplace(tuples[i].generator, i).second)
      throw Error(ErrorKind::InvalidArgument,
                  fmt::format("generator unit {} appears in two tuples", to_string(tuples[i].generator)));
  }

  // Union-find over tuples in generator-unit order so roots do not depend on
  // the caller's tuple order.
  std::vector<std::size_t> order;
  order.reserve(index.size());
  std::map<UnitId, std::size_t> rank;
  for (const auto& [unit, i] : index) {
    rank.emplace(unit, order.size());
    order.push_back(i);
  }
  UnionFind uf(order.size());
  for (const auto& p : self_bb.pairs) {
    if (p.first == p.second) continue;
    auto a = rank.find(p.first);
    auto b = rank.find(p.second);
    if (a == rank.end() || b == rank.end()) continue;
    uf.unite(a->second, b->second);
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t s = 0; s < order.size(); ++s) groups[uf.find(s)].push_back(s);

  std::vector<ConceptCluster> clusters;
  clusters.reserve(groups.size());
  for (const auto& [root, sorted_members] : groups) {
    ConceptCluster c;
    for (std::size_t s : sorted_members) c.members.push_back(tuples[order[s]]);
    std::size_t best = 0;
    for (std::size_t m = 1; m < c.members.size(); ++m)
      if (c.members[m].mean_r() > c.members[best].mean_r()) best = m;
    c.representative = best;
    clusters.push_back(std::move(c));
  }
  std::sort(clusters.begin(), clusters.end(), [](const ConceptCluster& x, const ConceptCluster& y) {
    if (x.members.size() != y.members.size()) return x.members.size() > y.members.size();
    return x.members.front().generator < y.members.front().generator;
  });
  for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].cluster_id = static_cast<int>(i);
  return clusters;
}

}  // namespace rosetta
