#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "splatedit/splat_model.hpp"

namespace fixtures {

using splatedit::Aabb;
using splatedit::GaussianScene;
using splatedit::GaussianSplat;
using splatedit::InstanceId;
using splatedit::SemanticOverlay;
using splatedit::Vec3;

/// A splat at `p` whose base color is `rgb`, opaque and small.
GaussianSplat make_splat(const Vec3& p, const Vec3& rgb = {0.5, 0.5, 0.5}, float logit_opacity = 4.0f,
                         float log_scale = -3.0f);

/// Every field random, unit quaternion.
GaussianSplat random_splat(std::mt19937& rng, double extent = 10.0);

struct Instance {
  InstanceId id;
  std::string class_name;
  Aabb box;
};

/// Labeled axis-aligned boxes of Gaussians over an optional floor.
class SceneBuilder {
 public:
  /// A cube lattice of `per_axis`^3 Gaussians filling `box` (surface and
  /// interior), labeled with a fresh id. Returns the id.
  InstanceId add_box(const std::string& class_name, const Aabb& box, const Vec3& rgb = {0.5, 0.5, 0.5},
                     int per_axis = 5, double confidence = 0.95);
  InstanceId add_box_at(const std::string& class_name, const Vec3& center, const Vec3& size,
                        const Vec3& rgb = {0.5, 0.5, 0.5}, int per_axis = 5);
  /// Unlabeled square grid at height z (for z-up scenes).
  void add_floor(double z, double x0, double x1, double y0, double y1, double spacing,
                 const Vec3& rgb = {0.4, 0.3, 0.2});
  /// Labeled floor instance (class "floor").
  InstanceId add_labeled_floor(double z, double x0, double x1, double y0, double y1, double spacing);
  void add_unlabeled(const GaussianSplat& s);

  GaussianScene scene() const { return GaussianScene(splats_); }
  SemanticOverlay overlay() const;
  const std::vector<Instance>& instances() const { return instances_; }

  /// Writes scene.ply, labels.json and labels.bin into `dir`.
  void write(const std::filesystem::path& dir) const;

 private:
  std::vector<GaussianSplat> splats_;
  std::vector<InstanceId> labels_;
  std::vector<splatedit::InstanceRecord> records_;
  std::vector<Instance> instances_;
};

/// Removed in the destructor.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Binary PLY with an arbitrary float32 property list; `rows` hold one value
/// per property.
std::vector<std::byte> custom_ply(const std::vector<std::string>& properties,
                                  const std::vector<std::vector<float>>& rows,
                                  const std::string& extra_header = {});

void write_bytes(const std::filesystem::path& path, const std::vector<std::byte>& bytes);
std::string read_text(const std::filesystem::path& path);

/// The "chairs and table" room: four black chairs around a table, a stool on
/// each side, an office chair and a lamp.
struct Room {
  SceneBuilder builder;
  InstanceId table, left_stool, right_stool, office_chair, lamp;
  std::vector<InstanceId> chairs;
};
Room make_room();

/// A small "asset" of Gaussians filling a box of the given size at the origin.
std::vector<GaussianSplat> box_splats(const Vec3& size, const Vec3& rgb, int per_axis = 4);

}  // namespace fixtures
