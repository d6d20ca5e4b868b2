#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splatedit/splat_model.hpp"

namespace splatedit {

struct ViewParams {
  double azimuth_deg = 0.0;    // around the up axis, from +x (z-up) or +z (y-up)
  double elevation_deg = 30.0; // above the horizontal plane
  std::uint32_t width = 256;
  std::uint32_t height = 256;
  Vec3 up = Vec3::UnitZ();
};

/// Screen-space rectangle in view-plane units.
struct OrthoWindow {
  double u_min = -1.0, u_max = 1.0, v_min = -1.0, v_max = 1.0;
};

struct PreviewImage {
  std::uint32_t width = 0, height = 0;
  std::vector<std::uint8_t> rgba;  // row-major, top row first
  ViewParams view;
  OrthoWindow window;

  const std::uint8_t* pixel(std::uint32_t x, std::uint32_t y) const { return &rgba[(std::size_t(y) * width + x) * 4]; }
};

/// Orthonormal camera basis; `forward` points from the eye into the scene.
struct OrthoCamera {
  Vec3 right, screen_up, forward;

  static OrthoCamera from(const ViewParams& view);
  double u(const Vec3& p) const { return p.dot(right); }
  double v(const Vec3& p) const { return p.dot(screen_up); }
  double depth(const Vec3& p) const { return p.dot(forward); }
};

/// Extra variance added to every projected footprint, in pixels squared, so
/// sub-pixel Gaussians still cover a pixel.
inline constexpr double kPreviewDilation = 0.3;

/// Window fitted to `box` projected through `camera` with `padding` (fraction
/// of the extent per side), widened to the image aspect ratio.
OrthoWindow fit_window(const OrthoCamera& camera, const Aabb& box, double padding, std::uint32_t width,
                       std::uint32_t height);

/// Orthographic solid-ellipse rasterization. Each Gaussian covers the pixels
/// inside its projected 2-sigma ellipse with alpha sigmoid(logit_opacity) and
/// color clamp(sh_dc * C0 + 0.5), composited back to front (depth descending,
/// ties by index). `crop` restricts the window to that instance's projected
/// box plus 10% padding.
PreviewImage render_preview(const GaussianScene& scene, const SemanticOverlay& overlay, const ViewParams& view,
                            std::optional<InstanceId> crop = std::nullopt);

PreviewImage render_preview(const GaussianScene& scene, const ViewParams& view,
                            const std::optional<OrthoWindow>& window = std::nullopt);

/// RGBA8 PNG, no ancillary chunks; identical input gives identical bytes.
std::vector<std::uint8_t> encode_png(const PreviewImage& image);

}  // namespace splatedit
