#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "splatedit/splat_model.hpp"

namespace splatedit {

/// Default neighbor count for relabeling and inpainting.
inline constexpr std::size_t kDefaultKnnK = 16;

struct Neighbor {
  std::uint32_t index = 0;  // gaussian index in the source scene
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact k-d tree over Gaussian centers. Immutable after construction and
/// bound to the scene snapshot it was built from.
///
/// Distances are computed in double from the float32 centers. Results are
/// ordered by (distance, gaussian index) ascending, so ties resolve to the
/// lower index and the output matches a linear scan exactly.
class KdIndex {
 public:
  static constexpr std::size_t kDefaultLeafSize = 16;

  KdIndex() = default;

  /// Index over all of `scene`, or over `subset` (gaussian indices) when
  /// given. Throws EmptyInputError for an empty subset.
  static KdIndex build(const GaussianScene& scene,
                       std::optional<std::span<const std::uint32_t>> subset = std::nullopt,
                       std::size_t leaf_size = kDefaultLeafSize);

  /// Index over raw points; entry i carries gaussian index `ids[i]` (or i).
  static KdIndex build(std::span<const Vec3> points, std::span<const std::uint32_t> ids = {},
                       std::size_t leaf_size = kDefaultLeafSize);

  /// min(k, size()) nearest entries, ascending.
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

  /// Same as `knn` but skips the entry whose gaussian index is `exclude`.
  std::vector<Neighbor> knn_excluding(const Vec3& query, std::size_t k, std::uint32_t exclude) const;

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t depth() const noexcept { return depth_; }
  std::size_t leaf_size() const noexcept { return leaf_size_; }

 private:
  struct Node {
    std::uint32_t begin = 0, end = 0;  // range into points_/ids_
    std::int32_t left = -1, right = -1;
    std::uint8_t axis = 0;
    double split = 0.0;
    bool leaf() const { return left < 0; }
  };

  std::int32_t build_node(std::uint32_t begin, std::uint32_t end, std::size_t depth);
  void search(const Vec3& q, std::size_t k, std::int64_t exclude, std::vector<std::pair<double, std::uint32_t>>& heap) const;

  std::vector<std::array<double, 3>> points_;  // permuted into tree order
  std::vector<std::uint32_t> ids_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = kDefaultLeafSize;
  std::size_t depth_ = 0;
};

/// Gaussians counted as background: unlabeled, or an instance whose class is
/// wall, floor or ceiling.
std::vector<std::uint32_t> background_indices(const SemanticOverlay& overlay);
bool is_background_class(std::string_view class_name);

/// Majority-vote relabeling of every Gaussian whose center lies in `roi`.
/// Votes come from the k nearest neighbors over the whole scene (self
/// excluded), evaluated against the input overlay; ties go to the tied label
/// that occurs nearest. `index`, when given, must be built over all of `scene`.
SemanticOverlay relabel_roi(const GaussianScene& scene, const SemanticOverlay& overlay, const Aabb& roi,
                            std::size_t k = kDefaultKnnK, const KdIndex* index = nullptr);

struct InpaintResult {
  std::vector<GaussianSplat> splats;  // to be appended with the unlabeled sentinel
  std::size_t skipped = 0;
};

/// For each removed Gaussian, fits a plane to its k nearest background
/// Gaussians in `scene` and emits one Gaussian at the projection onto that
/// plane, carrying the neighbors' mean appearance. Gaussians with fewer than
/// 3 non-collinear background neighbors are skipped.
InpaintResult inpaint_background(const GaussianScene& scene, const SemanticOverlay& overlay,
                                 std::span<const GaussianSplat> removed, std::size_t k = kDefaultKnnK);

}  // namespace splatedit
