#include "splatkit/densify.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iostream>
#include <numeric>

#include "splatkit/errors.hpp"

namespace splat {

namespace {

Region tight_region(const std::vector<Vec3d>& points, std::vector<int> members) {
  Region r;
  r.member_indices = std::move(members);
  r.min_corner = points[r.member_indices.front()];
  r.max_corner = r.min_corner;
  for (int idx : r.member_indices) {
    r.min_corner = r.min_corner.cwiseMin(points[idx]);
    r.max_corner = r.max_corner.cwiseMax(points[idx]);
  }
  return r;
}

}  // namespace

std::vector<double> estimate_density(const std::vector<Vec3d>& queries, const KdTreed& reference,
                                     int k, double sigma) {
  if (sigma <= 0.0) throw Error("estimate_density: sigma must be positive");
  if (k < 1) throw Error("estimate_density: k must be >= 1");
  if (k > reference.size()) {
    std::cerr << "[splatkit] warning: k=" << k << " exceeds reference size " << reference.size()
              << ", clamping\n";
    k = reference.size();
  }
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> density(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    double acc = 0.0;
    for (const auto& nb : reference.knn(queries[i], k)) acc += std::exp(-nb.dist_sq * inv_two_sigma_sq);
    density[i] = acc;
  }
  return density;
}

std::vector<double> estimate_density(const std::vector<Vec3d>& queries,
                                     const std::vector<Vec3d>& reference, int k, double sigma) {
  if (reference.empty()) throw Error("estimate_density: empty reference cloud");
  return estimate_density(queries, KdTreed(reference), k, sigma);
}

std::vector<Region> partition_regions(const PointCloudd& cloud, int regions) {
  if (cloud.positions.empty()) throw Error("partition_regions: empty cloud");
  if (regions < 1) throw Error("partition_regions: regions must be >= 1");
  regions = std::min<long>(regions, static_cast<long>(cloud.positions.size()));

  std::vector<int> all(cloud.positions.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::vector<int>> leaves;
  leaves.push_back(std::move(all));

  // Split the most populated leaf at the median of its longest axis until
  // the leaf count reaches the target.
  while (static_cast<int>(leaves.size()) < regions) {
    std::size_t largest = 0;
    for (std::size_t i = 1; i < leaves.size(); ++i)
      if (leaves[i].size() > leaves[largest].size()) largest = i;
    if (leaves[largest].size() < 2) break;

    std::vector<int>& members = leaves[largest];
    Vec3d lo = cloud.positions[members.front()], hi = lo;
    for (int idx : members) {
      lo = lo.cwiseMin(cloud.positions[idx]);
      hi = hi.cwiseMax(cloud.positions[idx]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = members.size() / 2;
    std::nth_element(members.begin(), members.begin() + mid, members.end(), [&](int a, int b) {
      const double va = cloud.positions[a][axis], vb = cloud.positions[b][axis];
      return va != vb ? va < vb : a < b;
    });
    std::vector<int> right(members.begin() + mid, members.end());
    members.resize(mid);
    leaves.push_back(std::move(right));
  }

  std::vector<Region> out;
  out.reserve(leaves.size());
  for (auto& leaf : leaves) {
    std::sort(leaf.begin(), leaf.end());
    out.push_back(tight_region(cloud.positions, std::move(leaf)));
  }
  return out;
}

std::vector<Vec3d> sample_candidates(const Region& region, int count, Rng& rng) {
  if (count < 0) throw Error("sample_candidates: negative count");
  std::vector<Vec3d> out;
  out.reserve(count);
  const Vec3d extent = region.max_corner - region.min_corner;
  for (int i = 0; i < count; ++i) {
    Vec3d p;
    for (int a = 0; a < 3; ++a) p[a] = region.min_corner[a] + extent[a] * rng.uniform();
    out.push_back(p);
  }
  return out;
}

std::vector<int> select_by_density(const std::vector<double>& densities, long budget, Rng& rng) {
  for (double d : densities)
    if (d < 0.0 || !std::isfinite(d)) throw Error("select_by_density: negative or non-finite density");
  const long n = static_cast<long>(densities.size());
  if (budget <= 0) return {};
  if (budget >= n) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }

  std::vector<double> weights = densities;
  double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (total <= 0.0) std::fill(weights.begin(), weights.end(), 1.0), total = static_cast<double>(n);

  std::vector<char> selected(n, 0);
  std::vector<char> active(n, 1);
  long remaining_budget = budget;

  // Peel off certainty inclusions (weight >= total/budget) so that the
  // systematic pass below never hits one candidate twice.
  bool changed = true;
  while (changed && remaining_budget > 0) {
    changed = false;
    for (long i = 0; i < n; ++i) {
      if (!active[i]) continue;
      if (weights[i] * static_cast<double>(remaining_budget) >= total && weights[i] > 0.0) {
        selected[i] = 1;
        active[i] = 0;
        total -= weights[i];
        --remaining_budget;
        changed = true;
        if (remaining_budget == 0) break;
      }
    }
    if (total <= 0.0) break;
  }

  if (remaining_budget > 0 && total > 0.0) {
    const double stride = total / static_cast<double>(remaining_budget);
    double pointer = rng.uniform() * stride;
    double cum = 0.0;
    for (long i = 0; i < n && remaining_budget > 0; ++i) {
      if (!active[i]) continue;
      cum += weights[i];
      if (pointer < cum) {
        selected[i] = 1;
        --remaining_budget;
        pointer += stride;
      }
    }
  }

  std::vector<int> out;
  out.reserve(budget);
  for (long i = 0; i < n; ++i)
    if (selected[i]) out.push_back(static_cast<int>(i));
  return out;
}

double median_knn_distance(const std::vector<Vec3d>& points, int k) {
  if (points.size() < 2) return 0.0;
  const KdTreed tree(points);
  const int kk = std::min<int>(k + 1, static_cast<int>(points.size()));  // +1 for the self match
  std::vector<double> dists;
  dists.reserve(points.size());
  for (const auto& p : points) {
    const auto nn = tree.knn(p, kk);
    double acc = 0.0;
    int cnt = 0;
    for (const auto& nb : nn) {
      if (nb.dist_sq == 0.0 && cnt == 0 && nn.size() > 1) continue;  // skip self
      acc += std::sqrt(nb.dist_sq);
      ++cnt;
    }
    if (cnt > 0) dists.push_back(acc / cnt);
  }
  if (dists.empty()) return 0.0;
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  return dists[mid];
}

PointCloudd densify_pointcloud(const PointCloudd& init, const DensityConfig& cfg) {
  if (init.positions.empty()) throw Error("densify_pointcloud: empty input cloud");
  const long n = static_cast<long>(init.positions.size());
  const long budget_local = cfg.retention_budget_local < 0 ? n : cfg.retention_budget_local;
  const long budget_global = cfg.retention_budget_global < 0 ? n / 2 : cfg.retention_budget_global;

  PointCloudd out;
  out.positions = init.positions;
  const bool colored = init.has_colors();
  if (colored) out.colors = init.colors;
  if (budget_local == 0 && budget_global == 0) return out;

  Rng master(cfg.rng_seed);
  const std::uint64_t local_seed_base = master.derive_seed();
  const std::uint64_t global_seed = master.derive_seed();

  const KdTreed init_tree(init.positions);
  std::vector<Vec3d> added;

  // Local branch: per-region uniform candidates, region-restricted KDE,
  // density-proportional retention. The total local budget is spread evenly
  // over the regions.
  if (budget_local > 0) {
    const auto regions = partition_regions(init, cfg.regions);
    const long per_region = budget_local / static_cast<long>(regions.size());
    long remainder = budget_local % static_cast<long>(regions.size());
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const Region& region = regions[r];
      long region_budget = per_region + (remainder > 0 ? 1 : 0);
      if (remainder > 0) --remainder;
      if (region_budget == 0) continue;

      Rng rng(local_seed_base ^ (0x9e3779b97f4a7c15ULL * (r + 1)));
      const int member_count = static_cast<int>(region.member_indices.size());
      const int candidates = cfg.candidates_per_region > 0 ? cfg.candidates_per_region
                                                           : 4 * std::max(1, member_count);
      auto samples = sample_candidates(region, candidates, rng);
      if (samples.empty()) continue;

      std::vector<Vec3d> members;
      members.reserve(member_count);
      for (int idx : region.member_indices) members.push_back(init.positions[idx]);
      double sigma = cfg.bandwidth_local > 0.0 ? cfg.bandwidth_local
                                               : 1.5 * median_knn_distance(members, cfg.k_neighbors);
      if (sigma <= 0.0) sigma = 1.5 * median_knn_distance(init.positions, cfg.k_neighbors);
      if (sigma <= 0.0) sigma = 1.0;  // degenerate cloud; kernel value is constant anyway

      const KdTreed region_tree(members);
      const auto density = estimate_density(samples, region_tree, cfg.k_neighbors, sigma);
      for (int idx : select_by_density(density, region_budget, rng)) added.push_back(samples[idx]);
    }
  }

  // Global branch: candidates from the whole-cloud bounding box, KDE against
  // the full input cloud.
  if (budget_global > 0) {
    Rng rng(global_seed);
    Region whole = partition_regions(init, 1).front();
    const int candidates = cfg.candidates_per_region > 0
                               ? cfg.candidates_per_region * std::max(1, cfg.regions)
                               : static_cast<int>(std::min<long>(4 * n, 1'000'000));
    auto samples = sample_candidates(whole, candidates, rng);
    double sigma = cfg.bandwidth_global > 0.0
                       ? cfg.bandwidth_global
                       : 1.5 * median_knn_distance(init.positions, cfg.k_neighbors);
    if (sigma <= 0.0) sigma = 1.0;
    const auto density = estimate_density(samples, init_tree, cfg.k_neighbors, sigma);
    for (int idx : select_by_density(density, budget_global, rng)) added.push_back(samples[idx]);
  }

  for (const auto& p : added) {
    out.positions.push_back(p);
    if (colored) out.colors.push_back(init.colors[init_tree.nearest(p)]);
  }
  return out;
}

}  // namespace splat
