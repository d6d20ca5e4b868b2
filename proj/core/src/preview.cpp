#include "splatedit/preview.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <zlib.h>

#include <Eigen/Geometry>

#include "splatedit/errors.hpp"

namespace splatedit {

namespace {

constexpr double kDefaultPadding = 0.05;
constexpr double kCropPadding = 0.10;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

OrthoCamera OrthoCamera::from(const ViewParams& view) {
  const Vec3 up = view.up.normalized();
  // Horizontal reference axes: +x and the axis completing a right-handed frame.
  Vec3 h0 = Vec3::UnitX() - Vec3::UnitX().dot(up) * up;
  if (h0.norm() < 1e-9) h0 = Vec3::UnitZ() - Vec3::UnitZ().dot(up) * up;
  h0.normalize();
  const Vec3 h1 = up.cross(h0);

  const double az = view.azimuth_deg * std::numbers::pi / 180.0;
  const double el = std::clamp(view.elevation_deg, -89.999, 89.999) * std::numbers::pi / 180.0;
  const Vec3 to_eye = std::cos(el) * (std::cos(az) * h0 + std::sin(az) * h1) + std::sin(el) * up;

  OrthoCamera cam;
  cam.forward = -to_eye.normalized();
  cam.right = cam.forward.cross(up).normalized();
  cam.screen_up = cam.right.cross(cam.forward).normalized();
  return cam;
}

OrthoWindow fit_window(const OrthoCamera& camera, const Aabb& box, double padding, std::uint32_t width,
                       std::uint32_t height) {
  OrthoWindow w;
  if (box.empty()) return w;
  double u0 = std::numeric_limits<double>::infinity(), u1 = -u0, v0 = u0, v1 = -u0;
  for (const auto& c : box.corners()) {
    u0 = std::min(u0, camera.u(c));
    u1 = std::max(u1, camera.u(c));
    v0 = std::min(v0, camera.v(c));
    v1 = std::max(v1, camera.v(c));
  }
  double du = u1 - u0, dv = v1 - v0;
  const double extent = std::max(du, dv);
  const double floor = extent > 0.0 ? 1e-6 * extent : 1.0;
  du = std::max(du, floor) * (1.0 + 2.0 * padding);
  dv = std::max(dv, floor) * (1.0 + 2.0 * padding);
  const double aspect = double(width) / double(std::max<std::uint32_t>(height, 1));
  if (du / dv < aspect) {
    du = dv * aspect;
  } else {
    dv = du / aspect;
  }
  const double cu = 0.5 * (u0 + u1), cv = 0.5 * (v0 + v1);
  return {cu - 0.5 * du, cu + 0.5 * du, cv - 0.5 * dv, cv + 0.5 * dv};
}

PreviewImage render_preview(const GaussianScene& scene, const ViewParams& view,
                            const std::optional<OrthoWindow>& window) {
  if (view.width == 0 || view.height == 0) throw InvalidArgumentError("preview size must be positive");
  const OrthoCamera cam = OrthoCamera::from(view);
  PreviewImage img;
  img.width = view.width;
  img.height = view.height;
  img.view = view;
  img.window = window ? *window : fit_window(cam, scene.bounds(), kDefaultPadding, view.width, view.height);
  img.rgba.assign(std::size_t(img.width) * img.height * 4, 0);

  const auto& splats = scene.splats();
  std::vector<double> depth(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) depth[i] = cam.depth(splats[i].center());
  std::vector<std::uint32_t> order(splats.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return depth[a] > depth[b] || (depth[a] == depth[b] && a < b);
  });

  const double px = (img.window.u_max - img.window.u_min) / img.width;
  const double py = (img.window.v_max - img.window.v_min) / img.height;
  Eigen::Matrix<double, 2, 3> J;
  J.row(0) = cam.right.transpose() / px;
  J.row(1) = cam.screen_up.transpose() / py;

  // Premultiplied accumulation.
  std::vector<float> acc(std::size_t(img.width) * img.height * 4, 0.0f);
  for (std::uint32_t i : order) {
    const GaussianSplat& g = splats[i];
    const Vec3 p = g.center();
    const double cx = (cam.u(p) - img.window.u_min) / px;  // pixel units, origin at left edge
    const double cy = (img.window.v_max - cam.v(p)) / py;  // origin at top edge
    Eigen::Matrix2d cov = J * g.covariance() * J.transpose();
    cov(0, 0) += kPreviewDilation;
    cov(1, 1) += kPreviewDilation;
    const double det = cov.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) continue;
    const Eigen::Matrix2d inv = cov.inverse();
    const double rx = 2.0 * std::sqrt(cov(0, 0)), ry = 2.0 * std::sqrt(cov(1, 1));
    const double x_lo = std::max(0.0, std::floor(cx - rx - 0.5)), x_hi = std::min(double(img.width - 1), std::ceil(cx + rx));
    const double y_lo = std::max(0.0, std::floor(cy - ry - 0.5)), y_hi = std::min(double(img.height - 1), std::ceil(cy + ry));
    if (x_lo > x_hi || y_lo > y_hi) continue;

    const double alpha = 1.0 / (1.0 + std::exp(-double(g.logit_opacity)));
    const Vec3 color = g.base_color();
    for (int y = int(y_lo); y <= int(y_hi); ++y) {
      for (int x = int(x_lo); x <= int(x_hi); ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double m = inv(0, 0) * dx * dx + 2.0 * inv(0, 1) * dx * dy + inv(1, 1) * dy * dy;
        if (m > 4.0) continue;
        float* dst = &acc[(std::size_t(y) * img.width + x) * 4];
        const float a = static_cast<float>(alpha);
        for (int c = 0; c < 3; ++c) dst[c] = a * static_cast<float>(color[c]) + (1.0f - a) * dst[c];
        dst[3] = a + (1.0f - a) * dst[3];
      }
    }
  }

  for (std::size_t k = 0; k < std::size_t(img.width) * img.height; ++k) {
    const float a = acc[k * 4 + 3];
    if (a <= 0.0f) continue;
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(acc[k * 4 + c] / a, 0.0f, 1.0f);
      img.rgba[k * 4 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    img.rgba[k * 4 + 3] = static_cast<std::uint8_t>(std::lround(std::clamp(a, 0.0f, 1.0f) * 255.0f));
  }
  return img;
}

PreviewImage render_preview(const GaussianScene& scene, const SemanticOverlay& overlay, const ViewParams& view,
                            std::optional<InstanceId> crop) {
  if (!crop) return render_preview(scene, view);
  const Aabb box = instance_aabb(scene, overlay, *crop);
  const OrthoCamera cam = OrthoCamera::from(view);
  return render_preview(scene, view, fit_window(cam, box, kCropPadding, view.width, view.height));
}

std::vector<std::uint8_t> encode_png(const PreviewImage& image) {
  static constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> out(kSignature, kSignature + 8);

  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, image.width);
  put_u32(ihdr, image.height);
  ihdr.insert(ihdr.end(), {8, 6, 0, 0, 0});  // 8-bit RGBA, deflate, no filter, no interlace
  put_chunk(out, "IHDR", ihdr);

  const std::size_t stride = std::size_t(image.width) * 4;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * image.height);
  for (std::uint32_t y = 0; y < image.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), image.rgba.begin() + y * stride, image.rgba.begin() + (y + 1) * stride);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> idat(len);
  if (compress2(idat.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("PNG deflate failed");
  }
  idat.resize(len);
  put_chunk(out, "IDAT", idat);
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace splatedit
