#include "dal/camerabranch/calib.hpp"

#include <cstring>

namespace dal::cam {

bool Calibration::project(int view, const Vec3& p, double& u, double& v, double& depth) const {
  return views.at(view).project(bda.inverse() * p, u, v, depth);
}

std::uint64_t Calibration::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](double x) {
    std::uint64_t b;
    std::memcpy(&b, &x, sizeof b);
    h = (h ^ b) * 1099511628211ULL;
  };
  for (const auto& v : views) {
    for (double x : {v.fx, v.fy, v.cx, v.cy, v.translation.x, v.translation.y, v.translation.z}) mix(x);
    for (double x : v.rotation.m) mix(x);
    mix(v.height);
    mix(v.width);
  }
  for (double x : bda.m) mix(x);
  return h;
}

void DepthBins::validate() const {
  if (count < 2 || d_min <= 0 || d_max <= d_min) throw ConfigError("depth bins: need D >= 2 and 0 < d_min < d_max");
}

Vec3 frustum_point(const Calibration& calib, int view, int h, int w, int d, int stride, const DepthBins& bins) {
  const auto& cam = calib.views[view];
  const double z = bins.center(d);
  const double u = (w + 0.5) * stride, v = (h + 0.5) * stride;
  const Vec3 pc{(u - cam.cx) / cam.fx * z, (v - cam.cy) / cam.fy * z, z};
  return calib.bda * cam.cam_to_ego(pc);
}

}  // namespace dal::cam
