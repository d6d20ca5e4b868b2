#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "splatedit/splat_model.hpp"

namespace bench {

inline splatedit::GaussianScene uniform_scene(std::size_t n, unsigned seed = 7) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> pos(0.0f, 10.0f);
  std::vector<splatedit::GaussianSplat> splats(n);
  for (auto& s : splats) {
    s.position = {pos(rng), pos(rng), pos(rng)};
    s.log_scale = {-4.0f, -4.0f, -4.0f};
    s.logit_opacity = 2.0f;
  }
  return splatedit::GaussianScene(std::move(splats));
}

/// `boxes` labeled cubes on a 10 m grid floor; the remainder is unlabeled.
inline splatedit::SemanticOverlay grid_labels(const splatedit::GaussianScene& scene, int boxes) {
  splatedit::SemanticOverlay o;
  o.assignment.assign(scene.size(), splatedit::kUnlabeled);
  const char* classes[] = {"chair", "table", "stool", "lamp", "sofa"};
  for (int b = 0; b < boxes; ++b) o.instances.push_back({static_cast<splatedit::InstanceId>(b), classes[b % 5], 0.9});
  const int side = 1 + static_cast<int>(std::sqrt(double(boxes)));
  const double cell = 10.0 / side;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto p = scene[i].center();
    const int cx = std::min(side - 1, int(p.x() / cell)), cy = std::min(side - 1, int(p.y() / cell));
    const int b = cy * side + cx;
    const double fx = p.x() / cell - cx, fy = p.y() / cell - cy;
    if (b < boxes && fx > 0.3 && fx < 0.7 && fy > 0.3 && fy < 0.7 && p.z() < 2.0) {
      o.assignment[i] = static_cast<splatedit::InstanceId>(b);
    }
  }
  return o;
}

}  // namespace bench
