#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace splatedit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Degree-0 spherical harmonic basis constant, 1 / (2 sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;

inline constexpr std::size_t kShRestCount = 45;
inline constexpr std::size_t kPlyFloatsPerSplat = 62;

/// One anisotropic Gaussian. Field order matches the canonical vertex layout
/// of the 3DGS PLY file, so a record is exactly 62 packed float32 values.
struct GaussianSplat {
  std::array<float, 3> position{};
  std::array<float, 3> normal{};  // preserved verbatim, unused
  std::array<float, 3> sh_dc{};
  std::array<float, kShRestCount> sh_rest{};  // per-channel blocks of 15
  float logit_opacity = 0.0f;
  std::array<float, 3> log_scale{};
  std::array<float, 4> rotation{1.0f, 0.0f, 0.0f, 0.0f};  // (w, x, y, z)

  Vec3 center() const { return {position[0], position[1], position[2]}; }
  void set_center(const Vec3& p);

  /// R * diag(exp(log_scale))^2 * R^T.
  Mat3 covariance() const;

  /// clamp(sh_dc * C0 + 0.5) per channel.
  Vec3 base_color() const;

  friend bool operator==(const GaussianSplat&, const GaussianSplat&) = default;
};

static_assert(sizeof(GaussianSplat) == kPlyFloatsPerSplat * sizeof(float),
              "GaussianSplat must pack to one PLY vertex record");

/// True when the two splats have identical bit patterns in every field
/// (distinguishes -0.0 from 0.0 and compares NaNs by payload).
bool bitwise_equal(const GaussianSplat& a, const GaussianSplat& b) noexcept;

/// Axis-aligned box. An Aabb built from no points is `empty()`.
struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  static Aabb of_point(const Vec3& p) { return {p, p}; }

  bool empty() const { return (min.array() > max.array()).any(); }
  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  double max_edge() const { return empty() ? 0.0 : extent().maxCoeff(); }
  double diagonal() const { return empty() ? 0.0 : extent().norm(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool intersects(const Aabb& o) const {
    return !empty() && !o.empty() && (min.array() <= o.max.array()).all() &&
           (o.min.array() <= max.array()).all();
  }
  /// The 8 corners, bit i of the index selecting max on axis i.
  std::array<Vec3, 8> corners() const;

  friend bool operator==(const Aabb& a, const Aabb& b) {
    return a.min == b.min && a.max == b.max;
  }
};

/// Ordered Gaussian set with a cached bounding box. All mutation goes through
/// member functions, which keep `bounds()` exact.
class GaussianScene {
 public:
  GaussianScene() = default;
  explicit GaussianScene(std::vector<GaussianSplat> splats, std::string source_path = {});

  const std::vector<GaussianSplat>& splats() const noexcept { return splats_; }
  const GaussianSplat& operator[](std::size_t i) const { return splats_[i]; }
  std::size_t size() const noexcept { return splats_.size(); }
  bool empty() const noexcept { return splats_.empty(); }

  const Aabb& bounds() const noexcept { return bounds_; }
  const std::string& source_path() const noexcept { return source_path_; }
  void set_source_path(std::string path) { source_path_ = std::move(path); }

  void set(std::size_t i, const GaussianSplat& s);
  /// Overwrites `indices[j]` with `splats[j]`; bounds are recomputed once.
  void set(std::span<const std::uint32_t> indices, std::span<const GaussianSplat> splats);
  void append(std::span<const GaussianSplat> splats);
  /// Removes the given indices (strictly ascending).
  void erase(std::span<const std::uint32_t> ascending_indices);
  /// Inverse of `erase`: places `splats[j]` at final position `indices[j]`.
  void insert(std::span<const std::uint32_t> ascending_indices,
              std::span<const GaussianSplat> splats);
  void truncate(std::size_t new_size);

 private:
  void recompute_bounds();

  std::vector<GaussianSplat> splats_;
  std::string source_path_;
  Aabb bounds_;
};

using InstanceId = std::uint32_t;
inline constexpr InstanceId kUnlabeled = 0xFFFFFFFFu;

struct InstanceRecord {
  InstanceId id = 0;
  std::string class_name;  // lowercase
  double confidence = 1.0;

  friend bool operator==(const InstanceRecord&, const InstanceRecord&) = default;
};

/// Per-Gaussian instance assignment plus the instance table (sorted by id).
struct SemanticOverlay {
  std::vector<InstanceId> assignment;
  std::vector<InstanceRecord> instances;

  const InstanceRecord* find(InstanceId id) const;
  bool contains(InstanceId id) const { return find(id) != nullptr; }
  /// max id + 1, or 0 for an empty table.
  InstanceId next_id() const;
  /// Inserts keeping the table sorted; replaces a record with the same id.
  void upsert(InstanceRecord record);
  void erase_instance(InstanceId id);
  std::size_t member_count(InstanceId id) const;

  /// Throws FormatError when assignment/instances violate the invariants
  /// against a scene of `splat_count` Gaussians.
  void validate(std::size_t splat_count) const;

  friend bool operator==(const SemanticOverlay&, const SemanticOverlay&) = default;
};

// ---- PLY ------------------------------------------------------------------

/// Property names of the canonical vertex layout, in file order.
const std::array<std::string, kPlyFloatsPerSplat>& ply_property_names();

/// Canonical header written by `save_ply` for `vertex_count` splats.
std::string canonical_ply_header(std::size_t vertex_count);

GaussianScene load_ply(const std::filesystem::path& path);
GaussianScene parse_ply(std::span<const std::byte> bytes, std::string source_path = {});

void save_ply(const GaussianScene& scene, const std::filesystem::path& path);
std::vector<std::byte> serialize_ply(std::span<const GaussianSplat> splats);

/// Writes `bytes` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<std::byte> read_file(const std::filesystem::path& path);

// ---- labels ---------------------------------------------------------------

/// Default confidence threshold for instance import.
inline constexpr double kDefaultMinConfidence = 0.8;

SemanticOverlay load_labels(const GaussianScene& scene,
                            const std::filesystem::path& json_path,
                            const std::filesystem::path& bin_path,
                            double min_confidence = kDefaultMinConfidence);

/// Parses label data already in memory; same contract as `load_labels`.
SemanticOverlay parse_labels(std::size_t splat_count, std::string_view json_text,
                             std::span<const std::byte> bin_bytes, double min_confidence);

void save_labels(const SemanticOverlay& overlay, const std::filesystem::path& json_path,
                 const std::filesystem::path& bin_path);

std::string labels_to_json(const SemanticOverlay& overlay);
std::vector<std::byte> labels_to_bin(const SemanticOverlay& overlay);

/// Tight box over member centers.
Aabb instance_aabb(const GaussianScene& scene, const SemanticOverlay& overlay, InstanceId id);

}  // namespace splatedit
