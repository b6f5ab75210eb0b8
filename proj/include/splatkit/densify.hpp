#pragma once

#include <cstdint>
#include <vector>

#include "splatkit/kdtree.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/types.hpp"

namespace splat {

/// Local adaptive density scaling parameters. Non-positive bandwidths and
/// candidate counts mean "auto": bandwidth = 1.5 x median k-NN distance of
/// the reference set, candidates = 4 x region member count.
struct DensityConfig {
  int k_neighbors = 8;
  double bandwidth_global = 0.0;
  double bandwidth_local = 0.0;
  int regions = 64;
  int candidates_per_region = 0;
  long retention_budget_local = -1;   // -1: |P_init|
  long retention_budget_global = -1;  // -1: |P_init| / 2
  std::uint64_t rng_seed = 0;
};

/// Axis-aligned region produced by the partitioner; the box is tight over
/// the member points.
struct Region {
  Vec3d min_corner = Vec3d::Zero();
  Vec3d max_corner = Vec3d::Zero();
  std::vector<int> member_indices;
};

/// Truncated-KNN kernel density: for each query, the sum over its k nearest
/// reference points of exp(-||q-p||^2 / (2 sigma^2)). Densities are in
/// (0, k]. k larger than |P| is clamped (with a warning to stderr).
std::vector<double> estimate_density(const std::vector<Vec3d>& queries, const KdTreed& reference,
                                     int k, double sigma);
std::vector<double> estimate_density(const std::vector<Vec3d>& queries,
                                     const std::vector<Vec3d>& reference, int k, double sigma);

/// Recursive median split along the longest axis (largest region first)
/// until `regions` leaves. Every point lands in exactly one region.
std::vector<Region> partition_regions(const PointCloudd& cloud, int regions);

/// i.i.d. uniform samples inside the region's box. Degenerate axes collapse
/// to the shared coordinate.
std::vector<Vec3d> sample_candidates(const Region& region, int count, Rng& rng);

/// Draws `budget` items without replacement with inclusion probability
/// proportional to density (systematic proportional resampling; certainty
/// inclusions are peeled off first so marginals stay exact). All-zero
/// densities fall back to uniform. Returned indices are in candidate order.
std::vector<int> select_by_density(const std::vector<double>& densities, long budget, Rng& rng);

/// Median k-NN distance of a point set to itself (self matches excluded);
/// used for the auto bandwidth.
double median_knn_distance(const std::vector<Vec3d>& points, int k);

/// Full pipeline: per-region sampling + local KDE selection, global
/// sampling + global KDE selection, then union with the input cloud. New
/// points inherit the color of their nearest input neighbor. The input
/// points are always the leading entries of the result, bit-identical.
PointCloudd densify_pointcloud(const PointCloudd& init, const DensityConfig& cfg);

}  // namespace splat
