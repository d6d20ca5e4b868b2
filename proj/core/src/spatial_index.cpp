#include "splatedit/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "splatedit/errors.hpp"

namespace splatedit {

namespace {

using HeapEntry = std::pair<double, std::uint32_t>;  // (squared distance, gaussian index)

inline double dist2(const Vec3& q, const std::array<double, 3>& p) {
  const double dx = q[0] - p[0];
  const double dy = q[1] - p[1];
  const double dz = q[2] - p[2];
  return dx * dx + dy * dy + dz * dz;
}

inline void offer(std::vector<HeapEntry>& heap, std::size_t k, HeapEntry e) {
  if (heap.size() < k) {
    heap.push_back(e);
    std::push_heap(heap.begin(), heap.end());
  } else if (e < heap.front()) {
    std::pop_heap(heap.begin(), heap.end());
    heap.back() = e;
    std::push_heap(heap.begin(), heap.end());
  }
}

std::vector<Neighbor> finish(std::vector<HeapEntry>& heap) {
  std::sort_heap(heap.begin(), heap.end());
  std::vector<Neighbor> out;
  out.reserve(heap.size());
  for (const auto& [d2, id] : heap) out.push_back({id, std::sqrt(d2)});
  return out;
}

}  // namespace

KdIndex KdIndex::build(const GaussianScene& scene, std::optional<std::span<const std::uint32_t>> subset,
                       std::size_t leaf_size) {
  std::vector<Vec3> pts;
  std::vector<std::uint32_t> ids;
  if (subset) {
    if (subset->empty()) throw EmptyInputError("cannot build an index over an empty subset");
    pts.reserve(subset->size());
    for (std::uint32_t i : *subset) {
      if (i >= scene.size()) throw InvalidArgumentError("subset index out of range");
      pts.push_back(scene[i].center());
    }
    ids.assign(subset->begin(), subset->end());
  } else {
    if (scene.empty()) throw EmptyInputError("cannot build an index over an empty scene");
    pts.reserve(scene.size());
    for (const auto& s : scene.splats()) pts.push_back(s.center());
  }
  return build(pts, ids, leaf_size);
}

KdIndex KdIndex::build(std::span<const Vec3> points, std::span<const std::uint32_t> ids,
                       std::size_t leaf_size) {
  if (points.empty()) throw EmptyInputError("cannot build an index over zero points");
  if (!ids.empty() && ids.size() != points.size()) {
    throw InvalidArgumentError("KdIndex::build: ids/points size mismatch");
  }
  KdIndex index;
  index.leaf_size_ = std::max<std::size_t>(1, leaf_size);
  index.points_.resize(points.size());
  index.ids_.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    index.points_[i] = {points[i][0], points[i][1], points[i][2]};
    index.ids_[i] = ids.empty() ? static_cast<std::uint32_t>(i) : ids[i];
  }
  index.nodes_.reserve(2 * points.size() / index.leaf_size_ + 1);
  index.build_node(0, static_cast<std::uint32_t>(points.size()), 0);
  return index;
}

std::int32_t KdIndex::build_node(std::uint32_t begin, std::uint32_t end, std::size_t depth) {
  const auto node_id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  depth_ = std::max(depth_, depth);
  if (end - begin <= leaf_size_) return node_id;

  std::array<double, 3> lo{points_[begin]}, hi{points_[begin]};
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], points_[i][a]);
      hi[a] = std::max(hi[a], points_[i][a]);
    }
  }
  std::uint8_t axis = 0;
  for (std::uint8_t a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  if (hi[axis] == lo[axis]) return node_id;  // all coincident: keep as one leaf

  // Partition a permutation so points and ids move together; the comparator
  // is total over (coordinate, id) which makes the structure deterministic.
  const std::uint32_t n = end - begin;
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), begin);
  const std::uint32_t mid = n / 2;
  std::nth_element(perm.begin(), perm.begin() + mid, perm.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double ca = points_[a][axis], cb = points_[b][axis];
    return ca < cb || (ca == cb && ids_[a] < ids_[b]);
  });
  std::vector<std::array<double, 3>> pts(n);
  std::vector<std::uint32_t> ids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    pts[i] = points_[perm[i]];
    ids[i] = ids_[perm[i]];
  }
  std::copy(pts.begin(), pts.end(), points_.begin() + begin);
  std::copy(ids.begin(), ids.end(), ids_.begin() + begin);

  const double split = points_[begin + mid][axis];
  const std::int32_t left = build_node(begin, begin + mid, depth + 1);
  const std::int32_t right = build_node(begin + mid, end, depth + 1);
  Node& node = nodes_[node_id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return node_id;
}

void KdIndex::search(const Vec3& q, std::size_t k, std::int64_t exclude,
                     std::vector<HeapEntry>& heap) const {
  // Explicit stack of (node, lower bound on squared distance along the split).
  std::vector<std::pair<std::int32_t, double>> stack;
  stack.reserve(64);
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    const auto [id, bound] = stack.back();
    stack.pop_back();
    if (heap.size() == k && bound > heap.front().first) continue;
    const Node& node = nodes_[id];
    if (node.leaf()) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        if (static_cast<std::int64_t>(ids_[i]) == exclude) continue;
        offer(heap, k, {dist2(q, points_[i]), ids_[i]});
      }
      continue;
    }
    const double diff = q[node.axis] - node.split;
    const std::int32_t near = diff < 0 ? node.left : node.right;
    const std::int32_t far = diff < 0 ? node.right : node.left;
    // Far side first on the stack so the near side is explored first.
    stack.emplace_back(far, std::max(bound, diff * diff));
    stack.emplace_back(near, bound);
  }
}

std::vector<Neighbor> KdIndex::knn(const Vec3& query, std::size_t k) const {
  k = std::min(k, ids_.size());
  if (k == 0) return {};
  std::vector<HeapEntry> heap;
  heap.reserve(k + 1);
  search(query, k, -1, heap);
  return finish(heap);
}

std::vector<Neighbor> KdIndex::knn_excluding(const Vec3& query, std::size_t k, std::uint32_t exclude) const {
  k = std::min(k, ids_.size());
  if (k == 0) return {};
  std::vector<HeapEntry> heap;
  heap.reserve(k + 1);
  search(query, k, exclude, heap);
  return finish(heap);
}

// ---- semantic refinement ------------------------------------------------------

bool is_background_class(std::string_view class_name) {
  return class_name == "wall" || class_name == "floor" || class_name == "ceiling";
}

std::vector<std::uint32_t> background_indices(const SemanticOverlay& overlay) {
  std::vector<InstanceId> background_ids;
  for (const auto& r : overlay.instances) {
    if (is_background_class(r.class_name)) background_ids.push_back(r.id);
  }
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < overlay.assignment.size(); ++i) {
    const InstanceId a = overlay.assignment[i];
    if (a == kUnlabeled ||
        std::find(background_ids.begin(), background_ids.end(), a) != background_ids.end()) {
      out.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return out;
}

SemanticOverlay relabel_roi(const GaussianScene& scene, const SemanticOverlay& overlay, const Aabb& roi,
                            std::size_t k, const KdIndex* index) {
  if (k == 0) throw InvalidArgumentError("relabel_roi: k must be >= 1");
  SemanticOverlay out = overlay;
  if (scene.size() < 2 || roi.empty() || !roi.intersects(scene.bounds())) return out;

  KdIndex local;
  if (!index) {
    local = KdIndex::build(scene);
    index = &local;
  }

  std::vector<std::pair<InstanceId, std::size_t>> votes;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Vec3 p = scene[i].center();
    if (!roi.contains(p)) continue;
    const auto nbrs = index->knn_excluding(p, k, static_cast<std::uint32_t>(i));
    if (nbrs.empty()) continue;
    votes.clear();
    for (const auto& nb : nbrs) {
      const InstanceId label = overlay.assignment[nb.index];
      auto it = std::find_if(votes.begin(), votes.end(), [label](const auto& v) { return v.first == label; });
      if (it == votes.end()) {
        votes.emplace_back(label, 1);
      } else {
        ++it->second;
      }
    }
    // votes is in order of first (nearest) occurrence, so the first maximum
    // is the nearest of any tied labels.
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    out.assignment[i] = best->first;
  }
  return out;
}

InpaintResult inpaint_background(const GaussianScene& scene, const SemanticOverlay& overlay,
                                 std::span<const GaussianSplat> removed, std::size_t k) {
  InpaintResult result;
  const auto background = background_indices(overlay);
  if (background.size() < 3 || k < 3) {
    result.skipped = removed.size();
    return result;
  }
  const KdIndex index = KdIndex::build(scene, std::span<const std::uint32_t>(background));

  for (const auto& g : removed) {
    const Vec3 p = g.center();
    const auto nbrs = index.knn(p, k);
    if (nbrs.size() < 3) {
      ++result.skipped;
      continue;
    }
    Vec3 centroid = Vec3::Zero();
    for (const auto& nb : nbrs) centroid += scene[nb.index].center();
    centroid /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& nb : nbrs) {
      const Vec3 d = scene[nb.index].center() - centroid;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();  // ascending
    if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) {
      ++result.skipped;  // coincident or collinear neighbors
      continue;
    }
    const Vec3 normal = eig.eigenvectors().col(0).normalized();
    const Vec3 projected = p - normal * normal.dot(p - centroid);

    // Mean appearance, accumulated in double.
    const GaussianSplat& first = scene[nbrs.front().index];
    std::array<double, 3> dc{}, scale{};
    std::array<double, kShRestCount> rest{};
    std::array<double, 4> quat{};
    double opacity = 0.0;
    for (const auto& nb : nbrs) {
      const GaussianSplat& s = scene[nb.index];
      for (int c = 0; c < 3; ++c) {
        dc[c] += s.sh_dc[c];
        scale[c] += s.log_scale[c];
      }
      for (std::size_t c = 0; c < kShRestCount; ++c) rest[c] += s.sh_rest[c];
      opacity += s.logit_opacity;
      double dot = 0.0;
      for (int c = 0; c < 4; ++c) dot += double(s.rotation[c]) * first.rotation[c];
      const double sign = dot < 0.0 ? -1.0 : 1.0;
      for (int c = 0; c < 4; ++c) quat[c] += sign * s.rotation[c];
    }
    const double n = static_cast<double>(nbrs.size());
    GaussianSplat out;
    out.set_center(projected);
    out.normal = {0.0f, 0.0f, 0.0f};
    for (int c = 0; c < 3; ++c) {
      out.sh_dc[c] = static_cast<float>(dc[c] / n);
      out.log_scale[c] = static_cast<float>(scale[c] / n);
    }
    for (std::size_t c = 0; c < kShRestCount; ++c) out.sh_rest[c] = static_cast<float>(rest[c] / n);
    out.logit_opacity = static_cast<float>(opacity / n);
    for (auto& c : quat) c /= n;
    const double qn = std::sqrt(quat[0] * quat[0] + quat[1] * quat[1] + quat[2] * quat[2] + quat[3] * quat[3]);
    if (qn > 0.0) {
      // Same tolerance as PLY load: an already-unit mean is kept as is.
      const double div = std::abs(qn - 1.0) <= 1e-6 ? 1.0 : qn;
      for (int c = 0; c < 4; ++c) out.rotation[c] = static_cast<float>(quat[c] / div);
    } else {
      out.rotation = first.rotation;
    }
    result.splats.push_back(out);
  }
  return result;
}

}  // namespace splatedit
