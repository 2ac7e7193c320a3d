// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <set>

#include <fmt/format.h>

#include "rosetta/error.hpp"
#include "rosetta/parallel.hpp"

namespace rosetta {

// ---------------------------------------------------------------------------
// policy

Resolution ResolutionPolicy::target(Resolution a, Resolution b) const {
  if (mode == PolicyMode::global_grid) {
    if (!grid_side || *grid_side < 1)
      throw Error(ErrorKind::InvalidArgument, "global_grid policy needs a positive grid side");
    return {*grid_side, *grid_side};
  }
  return {std::max(a.height, b.height), std::max(a.width, b.width)};
}

std::string to_string(const ResolutionPolicy& p) {
  if (p.mode == PolicyMode::pairwise_max) return "pairwise-max";
  return fmt::format("global-grid:{}", p.grid_side.value_or(0));
}

ResolutionPolicy parse_policy(const std::string& name, std::optional<int> grid_side) {
  ResolutionPolicy p;
  if (name == "pairwise-max" || name == "pairwise_max") {
    p.mode = PolicyMode::pairwise_max;
    return p;
  }
  std::string base = name;
  if (auto colon = name.find(':'); colon != std::string::npos) {
    base = name.substr(0, colon);
    grid_side = std::atoi(name.c_str() + colon + 1);
  }
  if (base == "global-grid" || base == "global_grid") {
    p.mode = PolicyMode::global_grid;
    p.grid_side = grid_side;
    if (!p.grid_side || *p.grid_side < 1)
      throw Error(ErrorKind::InvalidArgument, "global-grid policy needs a positive grid side");
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown resolution policy '{}'", name));
}

std::vector<std::pair<int, Resolution>> required_resolutions(const DumpManifest& self,
                                                             const DumpManifest& partner,
                                                             const ResolutionPolicy& policy) {
  std::set<std::pair<int, Resolution>> needed;
  for (int l = 0; l < static_cast<int>(self.layers.size()); ++l) {
    for (const auto& other : partner.layers)
      needed.insert({l, policy.target(self.layers[static_cast<std::size_t>(l)].resolution(),
                                      other.resolution())});
  }
  return {needed.begin(), needed.end()};
}

std::string to_string(RankOrder order) {
  return order == RankOrder::descending ? "descending" : "ascending";
}

RankOrder parse_rank(const std::string& name) {
  if (name == "descending") return RankOrder::descending;
  if (name == "ascending") return RankOrder::ascending;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown rank order '{}'", name));
}

// ---------------------------------------------------------------------------
// top-k

namespace {

bool ranks_before(const Neighbor& a, const Neighbor& b, RankOrder rank) {
  if (a.r != b.r) return rank == RankOrder::descending ? a.r > b.r : a.r < b.r;
  if (a.layer != b.layer) return a.layer < b.layer;
  return a.channel < b.channel;
}

// Inserts into a best-first list of at most k entries. Targets are assumed
// unique per list (the engine offers every pair once).
void insert_top_k(std::vector<Neighbor>& list, const Neighbor& cand, int k, RankOrder rank) {
  const auto ku = static_cast<std::size_t>(k);
  if (list.size() == ku && !ranks_before(cand, list.back(), rank)) return;
  auto pos = std::upper_bound(list.begin(), list.end(), cand, [rank](const Neighbor& x, const Neighbor& y) {
    return ranks_before(x, y, rank);
  });
  list.insert(pos, cand);
  if (list.size() > ku) list.pop_back();
}

}  // namespace

const KnnEntry* KnnTable::find(int layer, int channel) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), std::pair{layer, channel},
                             [](const KnnEntry& e, const std::pair<int, int>& key) {
                               return std::pair{e.layer, e.channel} < key;
                             });
  if (it == entries.end() || it->layer != layer || it->channel != channel) return nullptr;
  return &*it;
}

KnnBuilder::KnnBuilder(std::string source_model, std::string target_model, int k, RankOrder rank) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "K must be >= 1");
  table_.source_model = std::move(source_model);
  table_.target_model = std::move(target_model);
  table_.k = k;
  table_.rank = rank;
}

bool KnnBuilder::better(const Neighbor& a, const Neighbor& b) const {
  return ranks_before(a, b, table_.rank);
}

void KnnBuilder::touch(int layer, int channel) { lists_[{layer, channel}]; }

void KnnBuilder::offer(int layer, int channel, const Neighbor& cand) {
  auto& list = lists_[{layer, channel}];
  auto dup = std::find_if(list.begin(), list.end(), [&](const Neighbor& n) {
    return n.layer == cand.layer && n.channel == cand.channel;
  });
  if (dup != list.end()) {
    if (!better(cand, *dup)) return;
    list.erase(dup);
  }
  insert_top_k(list, cand, table_.k, table_.rank);
}

KnnTable KnnBuilder::finish() && {
  for (auto& [key, list] : lists_) table_.entries.push_back({key.first, key.second, std::move(list)});
  lists_.clear();
  return std::move(table_);
}

KnnTable top_k_filter(std::span<const CorrelationRecord> records, int k, RankOrder rank) {
  if (records.empty()) return KnnBuilder("", "", k, rank).finish();
  KnnBuilder builder(records.front().unit_a.model_id, records.front().unit_b.model_id, k, rank);
  for (const auto& rec : records)
    builder.offer(rec.unit_a.layer, rec.unit_a.channel,
                  {rec.unit_b.layer, rec.unit_b.channel, rec.r, rec.resolution});
  return std::move(builder).finish();
}

// ---------------------------------------------------------------------------
// single pair

double pearson_pair(std::span<const float> a, std::span<const float> b, const UnitStats& sa,
                    const UnitStats& sb) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorKind::InvalidArgument, "pearson_pair: sample spans differ in length");
  if (sa.variance <= 0.0 || sb.variance <= 0.0)
    throw Error(ErrorKind::ZeroVariance,
                fmt::format("{} or {} is constant over the dataset", to_string(sa.unit),
                            to_string(sb.unit)));
  double cross = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    cross += (static_cast<double>(a[i]) - sa.mean) * (static_cast<double>(b[i]) - sb.mean);
  const double n = static_cast<double>(a.size());
  return cross / ((n - 1.0) * std::sqrt(sa.variance * sb.variance));
}

// ---------------------------------------------------------------------------
// blocked engine

namespace {

#if defined(__AVX512F__)
inline constexpr int kLanes = 8;
inline constexpr int kMR = 6;
#else
inline constexpr int kLanes = 4;
inline constexpr int kMR = 6;
#endif
inline constexpr int kNV = 2;
inline constexpr int kNR = kLanes * kNV;
inline constexpr std::int64_t kKC = 256;   // samples per cache block
inline constexpr std::int64_t kMB = kMR * 12;  // rows per work item
inline constexpr std::int64_t kNB = kNR * 24;  // columns per work item

typedef double VecD __attribute__((vector_size(kLanes * sizeof(double))));

struct AlignedFree {
  void operator()(double* p) const { std::free(p); }
};

class AlignedBuffer {
 public:
  AlignedBuffer() = default;
  explicit AlignedBuffer(std::size_t count) { resize(count); }

  void resize(std::size_t count) {
    if (count == size_) return;
    const std::size_t bytes = ((count * sizeof(double) + 63) / 64) * 64;
    data_.reset(static_cast<double*>(std::aligned_alloc(64, std::max<std::size_t>(bytes, 64))));
    if (!data_) throw std::bad_alloc();
    size_ = count;
  }
  void zero() { std::memset(data_.get(), 0, size_ * sizeof(double)); }
  double* data() { return data_.get(); }
  const double* data() const { return data_.get(); }

 private:
  std::unique_ptr<double, AlignedFree> data_;
  std::size_t size_ = 0;
};

// c[MR x NR] += a[kc x MR]^T b[kc x NR]; each output accumulates in sample
// order, so the sum order does not depend on blocking or threading. Single
// out-of-line copy, so contraction into FMA is the same for every caller.
__attribute__((noinline, optimize("fp-contract=fast"))) void micro_kernel(const double* __restrict a, const double* __restrict b, std::int64_t kc,
                  double* __restrict c, std::int64_t ldc) {
  VecD acc[kMR][kNV];
  for (int r = 0; r < kMR; ++r)
    for (int v = 0; v < kNV; ++v) std::memcpy(&acc[r][v], c + r * ldc + v * kLanes, sizeof(VecD));
  for (std::int64_t t = 0; t < kc; ++t) {
    VecD bv[kNV];
    for (int v = 0; v < kNV; ++v) std::memcpy(&bv[v], b + t * kNR + v * kLanes, sizeof(VecD));
    const double* ar = a + t * kMR;
    for (int r = 0; r < kMR; ++r) {
      const double av = ar[r];
      for (int v = 0; v < kNV; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (int r = 0; r < kMR; ++r)
    for (int v = 0; v < kNV; ++v) std::memcpy(c + r * ldc + v * kLanes, &acc[r][v], sizeof(VecD));
}

std::int64_t round_up(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

struct BucketUnit {
  int layer;
  int channel;
  std::size_t ordinal;  // index into the model's dense unit list
  double mean;
  double variance;
};

// One side of a bucket: the units with a given native shape and a packed
// panel of their centered samples for the current batch.
struct PanelSide {
  std::vector<BucketUnit> units;
  std::int64_t lanes = 0;  // MR or NR
  std::int64_t blocks = 0;
  AlignedBuffer panel;     // [block][sample][lane]
};

void pack_side(const DumpManifest& m, std::span<const BucketUnit> units, std::int64_t lanes,
               Resolution target, InstanceRange range, int threads, AlignedBuffer& panel) {
  const std::int64_t cells = target.cells();
  const std::int64_t samples = range.count * cells;
  const std::int64_t blocks = round_up(static_cast<std::int64_t>(units.size()), lanes) / lanes;
  panel.resize(static_cast<std::size_t>(blocks * samples * lanes));

  std::set<int> layers;
  for (const auto& u : units) layers.insert(u.layer);
  std::map<int, MapBatch> batches;
  for (int l : layers) batches.emplace(l, read_layer_batch(m, l, range));

  parallel_for(static_cast<std::size_t>(blocks), threads, [&](std::size_t blk) {
    double* out = panel.data() + blk * static_cast<std::size_t>(samples * lanes);
    std::vector<float> resized(static_cast<std::size_t>(cells));
    for (std::int64_t lane = 0; lane < lanes; ++lane) {
      const std::size_t ui = blk * static_cast<std::size_t>(lanes) + static_cast<std::size_t>(lane);
      if (ui >= units.size()) {
        for (std::int64_t s = 0; s < samples; ++s) out[s * lanes + lane] = 0.0;
        continue;
      }
      const BucketUnit& u = units[ui];
      const MapBatch& batch = batches.at(u.layer);
      for (std::int64_t i = 0; i < range.count; ++i) {
        auto src = batch.map(i, u.channel);
        std::span<const float> values = src;
        if (batch.res != target) {
          bilinear_resize(src, batch.res, resized, target);
          values = resized;
        }
        double* dst = out + i * cells * lanes + lane;
        for (std::int64_t x = 0; x < cells; ++x) dst[x * lanes] = static_cast<double>(values[x]) - u.mean;
      }
    }
  });
}

// acc[rows_p x cols_p] += A^T B over `samples` packed samples.
void accumulate_products(const AlignedBuffer& a_panel, std::int64_t a_blocks,
                         const AlignedBuffer& b_panel, std::int64_t b_blocks, std::int64_t samples,
                         double* acc, std::int64_t ldc, int threads) {
  const std::int64_t mr_per_item = kMB / kMR;
  const std::int64_t nr_per_item = kNB / kNR;
  const std::int64_t row_items = (a_blocks + mr_per_item - 1) / mr_per_item;
  const std::int64_t col_items = (b_blocks + nr_per_item - 1) / nr_per_item;
  parallel_for(static_cast<std::size_t>(row_items * col_items), threads, [&](std::size_t item) {
    const std::int64_t ri = static_cast<std::int64_t>(item) / col_items;
    const std::int64_t ci = static_cast<std::int64_t>(item) % col_items;
    const std::int64_t ib0 = ri * mr_per_item, ib1 = std::min(a_blocks, ib0 + mr_per_item);
    const std::int64_t jb0 = ci * nr_per_item, jb1 = std::min(b_blocks, jb0 + nr_per_item);
    for (std::int64_t k0 = 0; k0 < samples; k0 += kKC) {
      const std::int64_t kc = std::min(kKC, samples - k0);
      for (std::int64_t jb = jb0; jb < jb1; ++jb) {
        const double* bp = b_panel.data() + (jb * samples + k0) * kNR;
        for (std::int64_t ib = ib0; ib < ib1; ++ib) {
          const double* ap = a_panel.data() + (ib * samples + k0) * kMR;
          micro_kernel(ap, bp, kc, acc + ib * kMR * ldc + jb * kNR, ldc);
        }
      }
    }
  });
}

struct ModelUnits {
  std::vector<UnitId> ids;                 // dense ordinal -> unit
  std::map<std::pair<int, int>, std::size_t> ordinal;
};

ModelUnits enumerate_units(const DumpManifest& m) {
  ModelUnits mu;
  for (int l = 0; l < static_cast<int>(m.layers.size()); ++l) {
    for (int c = 0; c < m.layers[static_cast<std::size_t>(l)].channels; ++c) {
      mu.ordinal[{l, c}] = mu.ids.size();
      mu.ids.push_back({m.model_id, l, c});
    }
  }
  return mu;
}

std::vector<BucketUnit> bucket_units(const DumpManifest& m, const ModelUnits& mu,
                                     const StatsTable& stats, Resolution native, Resolution target,
                                     std::set<UnitId>& excluded, std::set<UnitId>& included) {
  std::vector<BucketUnit> out;
  const std::int64_t expected = m.instance_count * target.cells();
  for (int l = 0; l < static_cast<int>(m.layers.size()); ++l) {
    const auto& layer = m.layers[static_cast<std::size_t>(l)];
    if (layer.resolution() != native) continue;
    for (int c = 0; c < layer.channels; ++c) {
      const UnitId id{m.model_id, l, c};
      const UnitStats& s = stats.stats_for(id, target);
      if (s.sample_count != expected)
        throw Error(ErrorKind::InconsistentRun,
                    fmt::format("stats for {} at {} hold {} samples, dump implies {}",
                                to_string(id), to_string(target), s.sample_count, expected));
      if (!(s.variance > 0.0)) {
        excluded.insert(id);
        continue;
      }
      included.insert(id);
      out.push_back({l, c, mu.ordinal.at({l, c}), s.mean, s.variance});
    }
  }
  return out;
}

void require_mining_input(const DumpManifest& m) {
  if (m.activation_point != kPostNonlinearity)
    throw Error(ErrorKind::SchemaViolation,
                fmt::format("{}: activation_point is '{}', mining needs '{}'", m.model_id,
                            m.activation_point, kPostNonlinearity));
}

}  // namespace

CorrelationResult correlate_models(const DumpManifest& a, const DumpManifest& b,
                                   const StatsTable& stats_a, const StatsTable& stats_b,
                                   const CorrelateOptions& opt) {
  require_mining_input(a);
  require_mining_input(b);
  if (a.instance_count != b.instance_count)
    throw Error(ErrorKind::InstanceCountMismatch,
                fmt::format("{} has {} instances, {} has {}", a.model_id, a.instance_count,
                            b.model_id, b.instance_count));
  if (a.dataset_id != b.dataset_id)
    throw Error(ErrorKind::InconsistentRun,
                fmt::format("dumps come from different datasets ('{}' vs '{}')", a.dataset_id,
                            b.dataset_id));
  if (opt.k < 1) throw Error(ErrorKind::InvalidArgument, "K must be >= 1");
  if (opt.batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");

  const ModelUnits units_a = enumerate_units(a);
  const ModelUnits units_b = enumerate_units(b);
  std::vector<std::vector<Neighbor>> best_ab(units_a.ids.size());
  std::vector<std::vector<Neighbor>> best_ba(units_b.ids.size());
  std::set<UnitId> excluded_a, excluded_b, included_a, included_b;

  std::set<Resolution> shapes_a, shapes_b;
  for (const auto& l : a.layers) shapes_a.insert(l.resolution());
  for (const auto& l : b.layers) shapes_b.insert(l.resolution());

  CorrelationResult result;
  const std::int64_t n = a.instance_count;
  const std::int64_t batch = std::min(opt.batch_size, n);

  for (const Resolution sa : shapes_a) {
    for (const Resolution sb : shapes_b) {
      const Resolution target = opt.policy.target(sa, sb);
      PanelSide side_a, side_b;
      side_a.units = bucket_units(a, units_a, stats_a, sa, target, excluded_a, included_a);
      side_b.units = bucket_units(b, units_b, stats_b, sb, target, excluded_b, included_b);
      if (side_a.units.empty() || side_b.units.empty()) continue;

      const std::int64_t na = static_cast<std::int64_t>(side_a.units.size());
      const std::int64_t nb_p = round_up(static_cast<std::int64_t>(side_b.units.size()), kNR);
      const std::int64_t batch_samples = batch * target.cells();
      auto bytes_for_rows = [&](std::int64_t rows) {
        const std::int64_t rows_p = round_up(rows, kMR);
        return static_cast<std::uint64_t>(rows_p * nb_p + rows_p * batch_samples + nb_p * batch_samples) *
               sizeof(double);
      };
      std::int64_t tile_rows = na;
      if (bytes_for_rows(na) > opt.mem_cap_bytes) {
        const auto cap_doubles = static_cast<std::int64_t>(opt.mem_cap_bytes / sizeof(double));
        const std::int64_t spare = cap_doubles - nb_p * batch_samples;
        tile_rows = spare > 0 ? spare / (nb_p + batch_samples) / kMR * kMR : 0;
        if (tile_rows == 0)
          throw Error(ErrorKind::OutOfBudget,
                      fmt::format("correlating {} against {} at {} needs at least {} bytes, cap is {}",
                                  to_string(sa), to_string(sb), to_string(target),
                                  bytes_for_rows(kMR), opt.mem_cap_bytes));
      }
      result.peak_bytes = std::max(result.peak_bytes, bytes_for_rows(tile_rows));

      const double denom_n = static_cast<double>(n * target.cells()) - 1.0;
      for (std::int64_t row0 = 0; row0 < na; row0 += tile_rows) {
        const std::int64_t rows = std::min(tile_rows, na - row0);
        const std::int64_t rows_p = round_up(rows, kMR);
        std::span<const BucketUnit> tile_units(side_a.units.data() + row0, static_cast<std::size_t>(rows));
        AlignedBuffer acc(static_cast<std::size_t>(rows_p * nb_p));
        acc.zero();
        ++result.passes;

        for (std::int64_t first = 0; first < n; first += batch) {
          const InstanceRange range{first, std::min(batch, n - first)};
          const std::int64_t samples = range.count * target.cells();
          pack_side(a, tile_units, kMR, target, range, opt.threads, side_a.panel);
          pack_side(b, side_b.units, kNR, target, range, opt.threads, side_b.panel);
          accumulate_products(side_a.panel, rows_p / kMR, side_b.panel, nb_p / kNR, samples,
                              acc.data(), nb_p, opt.threads);
        }

        for (std::int64_t i = 0; i < rows; ++i) {
          const BucketUnit& ua = tile_units[static_cast<std::size_t>(i)];
          const double* row = acc.data() + i * nb_p;
          for (std::size_t j = 0; j < side_b.units.size(); ++j) {
            const BucketUnit& ub = side_b.units[j];
            const double r = row[j] / (denom_n * std::sqrt(ua.variance * ub.variance));
            insert_top_k(best_ab[ua.ordinal], {ub.layer, ub.channel, r, target}, opt.k, opt.rank);
            insert_top_k(best_ba[ub.ordinal], {ua.layer, ua.channel, r, target}, opt.k, opt.rank);
            if (opt.record_sink)
              opt.record_sink({units_a.ids[ua.ordinal], units_b.ids[ub.ordinal], r, target});
          }
        }
      }
    }
  }

  auto build = [&](const DumpManifest& src, const DumpManifest& dst, const ModelUnits& mu,
                   std::vector<std::vector<Neighbor>>& best, const std::set<UnitId>& included) {
    KnnTable t;
    t.source_model = src.model_id;
    t.target_model = dst.model_id;
    t.k = opt.k;
    t.rank = opt.rank;
    for (std::size_t o = 0; o < mu.ids.size(); ++o) {
      if (!included.contains(mu.ids[o])) continue;
      t.entries.push_back({mu.ids[o].layer, mu.ids[o].channel, std::move(best[o])});
    }
    return t;
  };
  result.a_to_b = build(a, b, units_a, best_ab, included_a);
  result.b_to_a = build(b, a, units_b, best_ba, included_b);
  result.excluded_a.assign(excluded_a.begin(), excluded_a.end());
  result.excluded_b.assign(excluded_b.begin(), excluded_b.end());
  return result;
}

}  // namespace rosetta
