#include "fixtures.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "splatedit/errors.hpp"

namespace fixtures {

using namespace splatedit;

GaussianSplat make_splat(const Vec3& p, const Vec3& rgb, float logit_opacity, float log_scale) {
  GaussianSplat s;
  s.set_center(p);
  for (int c = 0; c < 3; ++c) s.sh_dc[c] = static_cast<float>((rgb[c] - 0.5) / kShC0);
  s.logit_opacity = logit_opacity;
  s.log_scale = {log_scale, log_scale, log_scale};
  return s;
}

GaussianSplat random_splat(std::mt19937& rng, double extent) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::normal_distribution<float> n(0.0f, 1.0f);
  GaussianSplat s;
  for (auto& v : s.position) v = u(rng) * static_cast<float>(extent);
  for (auto& v : s.normal) v = u(rng);
  for (auto& v : s.sh_dc) v = n(rng);
  for (auto& v : s.sh_rest) v = 0.1f * n(rng);
  s.logit_opacity = n(rng);
  for (auto& v : s.log_scale) v = -4.0f + u(rng);
  float q[4], norm = 0.0f;
  do {
    norm = 0.0f;
    for (auto& v : q) {
      v = n(rng);
      norm += v * v;
    }
  } while (norm < 1e-3f);
  norm = std::sqrt(norm);
  for (int i = 0; i < 4; ++i) s.rotation[i] = q[i] / norm;
  // Store the float that renormalization on load reproduces exactly.
  GaussianScene probe({s});
  const auto bytes = serialize_ply(probe.splats());
  return parse_ply(bytes)[0];
}

InstanceId SceneBuilder::add_box(const std::string& class_name, const Aabb& box, const Vec3& rgb, int per_axis,
                                 double confidence) {
  const InstanceId id = static_cast<InstanceId>(records_.size());
  records_.push_back({id, class_name, confidence});
  instances_.push_back({id, class_name, box});
  const Vec3 e = box.extent();
  for (int i = 0; i < per_axis; ++i) {
    for (int j = 0; j < per_axis; ++j) {
      for (int k = 0; k < per_axis; ++k) {
        const double d = per_axis > 1 ? per_axis - 1 : 1;
        const Vec3 p = box.min + Vec3(e.x() * i / d, e.y() * j / d, e.z() * k / d);
        splats_.push_back(make_splat(p, rgb));
        labels_.push_back(id);
      }
    }
  }
  return id;
}

InstanceId SceneBuilder::add_box_at(const std::string& class_name, const Vec3& center, const Vec3& size,
                                    const Vec3& rgb, int per_axis) {
  return add_box(class_name, Aabb{center - size / 2, center + size / 2}, rgb, per_axis);
}

void SceneBuilder::add_floor(double z, double x0, double x1, double y0, double y1, double spacing, const Vec3& rgb) {
  for (double x = x0; x <= x1 + 1e-9; x += spacing) {
    for (double y = y0; y <= y1 + 1e-9; y += spacing) {
      splats_.push_back(make_splat({x, y, z}, rgb));
      labels_.push_back(kUnlabeled);
    }
  }
}

InstanceId SceneBuilder::add_labeled_floor(double z, double x0, double x1, double y0, double y1, double spacing) {
  const InstanceId id = static_cast<InstanceId>(records_.size());
  records_.push_back({id, "floor", 0.99});
  const std::size_t before = splats_.size();
  add_floor(z, x0, x1, y0, y1, spacing);
  for (std::size_t i = before; i < labels_.size(); ++i) labels_[i] = id;
  instances_.push_back({id, "floor", Aabb{{x0, y0, z}, {x1, y1, z}}});
  return id;
}

void SceneBuilder::add_unlabeled(const GaussianSplat& s) {
  splats_.push_back(s);
  labels_.push_back(kUnlabeled);
}

SemanticOverlay SceneBuilder::overlay() const {
  SemanticOverlay o;
  o.assignment = labels_;
  o.instances = records_;
  return o;
}

void SceneBuilder::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_ply(scene(), dir / "scene.ply");
  save_labels(overlay(), dir / "labels.json", dir / "labels.bin");
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("splatedit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<std::byte> custom_ply(const std::vector<std::string>& properties, const std::vector<std::vector<float>>& rows,
                                  const std::string& extra_header) {
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\n" << extra_header << "element vertex " << rows.size() << "\n";
  for (const auto& p : properties) h << "property float " << p << "\n";
  h << "end_header\n";
  const std::string header = h.str();
  std::vector<std::byte> out(header.size());
  std::memcpy(out.data(), header.data(), header.size());
  for (const auto& row : rows) {
    const std::size_t at = out.size();
    out.resize(at + row.size() * sizeof(float));
    std::memcpy(out.data() + at, row.data(), row.size() * sizeof(float));
  }
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::byte>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Room make_room() {
  Room r;
  auto& b = r.builder;
  b.add_floor(0.0, -4.0, 4.0, -6.0, 4.0, 0.25);
  r.table = b.add_box_at("table", {0.0, 0.0, 0.45}, {1.2, 0.8, 0.8}, {0.6, 0.4, 0.2});
  const Vec3 black(0.02, 0.02, 0.02);
  for (const Vec3 c : {Vec3(-1.2, 1.2, 0.5), Vec3(1.2, 1.2, 0.5), Vec3(-1.2, -1.2, 0.5), Vec3(1.2, -1.2, 0.5)}) {
    r.chairs.push_back(b.add_box_at("chair", c, {0.5, 0.5, 0.9}, black));
  }
  // Objects float 5 cm above the floor so no floor Gaussian falls inside an
  // object box. The floor reaches further toward -y, so the viewer at the
  // room center looks along +y and screen right is +x.
  r.left_stool = b.add_box_at("stool", {-2.2, 0.0, 0.35}, {0.4, 0.4, 0.6}, {0.8, 0.8, 0.8});
  r.right_stool = b.add_box_at("stool", {2.2, 0.0, 0.35}, {0.4, 0.4, 0.6}, {0.8, 0.8, 0.8});
  r.office_chair = b.add_box_at("office chair", {0.0, 3.0, 0.55}, {0.6, 0.6, 1.0}, {0.2, 0.2, 0.7});
  r.lamp = b.add_box_at("lamp", {3.0, 3.0, 0.85}, {0.3, 0.3, 1.6}, {0.9, 0.9, 0.5});
  return r;
}

std::vector<GaussianSplat> box_splats(const Vec3& size, const Vec3& rgb, int per_axis) {
  SceneBuilder b;
  b.add_box_at("asset", Vec3::Zero(), size, rgb, per_axis);
  return b.scene().splats();
}

}  // namespace fixtures
