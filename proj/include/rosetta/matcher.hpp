// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rosetta/correlator.hpp"
#include "rosetta/dump_store.hpp"

namespace rosetta {

struct BuddyPair {
  UnitId first;   // unit of model_1
  UnitId second;  // unit of model_2
  double r = 0.0;
  Resolution resolution;

  bool operator==(const BuddyPair&) const = default;
};

// Mutual k-nearest-neighbor pairs between two models, sorted by (first, second).
struct BestBuddySet {
  std::string model_1;
  std::string model_2;
  int k = 0;
  std::vector<BuddyPair> pairs;

  bool contains(const UnitId& first, const UnitId& second) const;
  bool operator==(const BestBuddySet&) const = default;
};

// (j, k) is kept iff k is among j's k-NN in `ab` and j among k's k-NN in `ba`.
BestBuddySet best_buddies(const KnnTable& ab, const KnnTable& ba);

// Swaps the roles of the two models.
BestBuddySet reversed(const BestBuddySet& set);

struct TupleMatch {
  UnitId unit;
  double r = 0.0;
  Resolution resolution;

  bool operator==(const TupleMatch&) const = default;
};

// A generator unit with its partner in every discriminative model. When the
// unit has several buddies inside one model the highest-r partner is the
// match and the rest are kept, best first, as synonyms.
struct RosettaTuple {
  UnitId generator;
  std::map<std::string, TupleMatch> matches;
  std::map<std::string, std::vector<TupleMatch>> synonyms;

  double mean_r() const;
  bool operator==(const RosettaTuple&) const = default;
};

// Tuples for every generator unit that has a buddy in each set, sorted by
// generator unit. All sets must share model_1 (the generator).
std::vector<RosettaTuple> merge_models(std::span<const BestBuddySet> sets);

// Every (generator, partner) pair a tuple list represents for `model`,
// synonyms included.
std::vector<std::pair<UnitId, UnitId>> tuple_pairs(std::span<const RosettaTuple> tuples,
                                                   const std::string& model);

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      const std::size_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  // Union by size; ties attach the larger index under the smaller.
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

struct ConceptCluster {
  int cluster_id = 0;
  std::vector<RosettaTuple> members;  // sorted by generator unit
  std::size_t representative = 0;     // index into members: highest mean r

  bool operator==(const ConceptCluster&) const = default;
};

// Connected components of the tuples' generator units under the generator's
// self-best-buddy pairs (self pairs ignored). Sorted by size descending,
// then by smallest generator unit.
std::vector<ConceptCluster> cluster_tuples(std::span<const RosettaTuple> tuples,
                                           const BestBuddySet& self_bb);

}  // namespace rosetta
