#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "splatkit/errors.hpp"
#include "splatkit/types.hpp"

namespace splat {

/// Exact k-nearest-neighbor KD-tree over 3D points. Built once, queried from
/// any number of threads (read-only after construction).
template <class S> class KdTree {
 public:
  struct Neighbor {
    int index;
    S dist_sq;
  };

  KdTree() = default;

  explicit KdTree(const std::vector<Vec3<S>>& points) : points_(points) {
    if (points_.empty()) throw Error("KdTree: empty point set");
    indices_.resize(points_.size());
    std::iota(indices_.begin(), indices_.end(), 0);
    nodes_.reserve(2 * points_.size());
    root_ = build(0, static_cast<int>(points_.size()));
  }

  int size() const { return static_cast<int>(points_.size()); }

  /// k nearest neighbors of `query`, sorted by ascending distance.
  /// k larger than the point count is clamped.
  std::vector<Neighbor> knn(const Vec3<S>& query, int k) const {
    k = std::min<int>(k, size());
    std::vector<Neighbor> heap;  // max-heap on dist_sq
    heap.reserve(k + 1);
    search(root_, query, k, heap);
    std::sort_heap(heap.begin(), heap.end(), heap_cmp);
    return heap;
  }

  /// Index of the single nearest neighbor.
  int nearest(const Vec3<S>& query) const { return knn(query, 1)[0].index; }

 private:
  struct Node {
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into indices_
    int axis = 0;
    S split = S(0);
    bool leaf = false;
  };

  static bool heap_cmp(const Neighbor& a, const Neighbor& b) {
    return a.dist_sq != b.dist_sq ? a.dist_sq < b.dist_sq : a.index < b.index;
  }

  static constexpr int kLeafSize = 16;

  int build(int begin, int end) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.leaf = true;
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    Vec3<S> lo = points_[indices_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[indices_[i]]);
      hi = hi.cwiseMax(points_[indices_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid, indices_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    node.axis = axis;
    node.split = points_[indices_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void consider(const Vec3<S>& query, int point_index, int k, std::vector<Neighbor>& heap) const {
    const S d2 = (points_[point_index] - query).squaredNorm();
    if (static_cast<int>(heap.size()) < k) {
      heap.push_back({point_index, d2});
      std::push_heap(heap.begin(), heap.end(), heap_cmp);
    } else if (heap_cmp({point_index, d2}, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), heap_cmp);
      heap.back() = {point_index, d2};
      std::push_heap(heap.begin(), heap.end(), heap_cmp);
    }
  }

  void search(int node_index, const Vec3<S>& query, int k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[node_index];
    if (node.leaf) {
      for (int i = node.begin; i < node.end; ++i) consider(query, indices_[i], k, heap);
      return;
    }
    const S delta = query[node.axis] - node.split;
    const int near = delta < S(0) ? node.left : node.right;
    const int far = delta < S(0) ? node.right : node.left;
    search(near, query, k, heap);
    if (static_cast<int>(heap.size()) < k || delta * delta <= heap.front().dist_sq)
      search(far, query, k, heap);
  }

  std::vector<Vec3<S>> points_;
  std::vector<int> indices_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

using KdTreed = KdTree<double>;

}  // namespace splat
