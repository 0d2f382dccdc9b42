#include "dal/synthio/sensors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "dal/common/rng.hpp"

namespace dal::synth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int box = -1;  // -1 ground, -2 nothing
  int face = 0;
};

Hit cast(const Vec3& o, const Vec3& d, const std::vector<Box3D>& boxes, double max_t) {
  Hit h;
  h.box = -2;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    int face = 0;
    const double t = ray_box(o, d, boxes[i], &face);
    if (t > 0 && t < h.t) {
      h.t = t;
      h.box = static_cast<int>(i);
      h.face = face;
    }
  }
  if (d.z < 0) {
    const double t = -o.z / d.z;
    if (t > 0 && t < h.t) {
      h.t = t;
      h.box = -1;
    }
  }
  if (h.t > max_t) h.box = -2;
  return h;
}

}  // namespace

void LidarConfig::validate() const {
  if (beams < 1 || azimuth_step_deg <= 0 || max_range <= 0 || sweeps < 1 || dt <= 0 ||
      elevation_hi_deg < elevation_lo_deg || range_noise < 0)
    throw ConfigError("lidar: invalid sensor configuration");
}

int PointCloudSweeps::sweep_of(const LidarPoint& p) const {
  return static_cast<int>(std::lround(p.dt / dt));
}

PointCloudSweeps simulate_lidar(const Scene& scene, const LidarConfig& sensor) {
  sensor.validate();
  PointCloudSweeps out;
  out.sweep_count = sensor.sweeps;
  out.dt = sensor.dt;
  const int azimuths = static_cast<int>(std::lround(360.0 / sensor.azimuth_step_deg));
  Rng phase_rng(scene.seed ^ 0x5eed1d0aULL);
  for (int s = 0; s < sensor.sweeps; ++s) {
    Rng noise_rng = phase_rng.fork(1000 + s);
    const double phase = phase_rng.uniform(0, sensor.azimuth_step_deg);
    const Pose2 pose = s < static_cast<int>(scene.ego_poses.size()) ? scene.ego_poses[s] : Pose2{};
    const double lag = s * sensor.dt;
    const Vec3 origin{pose.x, pose.y, sensor.height};
    for (int b = 0; b < sensor.beams; ++b) {
      const double elev = sensor.beams == 1
                              ? sensor.elevation_lo_deg
                              : sensor.elevation_lo_deg +
                                    (sensor.elevation_hi_deg - sensor.elevation_lo_deg) * b / (sensor.beams - 1);
      const double ce = std::cos(elev * kDeg), se = std::sin(elev * kDeg);
      for (int a = 0; a < azimuths; ++a) {
        const double az = (phase + a * sensor.azimuth_step_deg) * kDeg + pose.yaw;
        const Vec3 d{ce * std::cos(az), ce * std::sin(az), se};
        const Hit h = cast(origin, d, scene.boxes, sensor.max_range);
        if (h.box == -2) continue;
        double t = h.t;
        if (sensor.range_noise > 0) t += noise_rng.normal(0, sensor.range_noise);
        LidarPoint p{origin.x + t * d.x, origin.y + t * d.y, origin.z + t * d.z,
                     h.box >= 0 ? sensor.box_intensity : sensor.ground_intensity, lag};
        if (h.box >= 0) {
          const Box3D& box = scene.boxes[h.box];
          p.x -= box.vx * lag;
          p.y -= box.vy * lag;
        }
        out.points.push_back(p);
      }
    }
  }
  return out;
}

bool CameraView::project(const Vec3& ego, double& u, double& v, double& depth) const {
  const Vec3 c = ego_to_cam(ego);
  depth = c.z;
  if (c.z <= 1e-6) return false;
  u = fx * c.x / c.z + cx;
  v = fy * c.y / c.z + cy;
  return u >= 0 && u < width && v >= 0 && v < height;
}

void RigConfig::validate() const {
  if (views < 1 || hfov_deg <= 0 || hfov_deg >= 180 || height < 1 || width < 1)
    throw ConfigError("rig: invalid camera configuration");
  if (views * hfov_deg < 360) throw ConfigError("rig: views do not cover 360 degrees of azimuth");
}

CameraRig CameraRig::surround(const RigConfig& config) {
  config.validate();
  CameraRig rig;
  const double fx = (config.width / 2.0) / std::tan(config.hfov_deg * kDeg / 2);
  for (int i = 0; i < config.views; ++i) {
    const double psi = 2 * std::numbers::pi * i / config.views;
    const double c = std::cos(psi), s = std::sin(psi);
    CameraView v;
    v.fx = v.fy = fx;
    v.cx = config.width / 2.0;
    v.cy = config.height / 2.0;
    v.width = config.width;
    v.height = config.height;
    // Rows are the camera axes expressed in ego coordinates.
    v.rotation = Mat3{{s, -c, 0, 0, 0, -1, c, s, 0}};
    const Vec3 position{config.mount_offset * c, config.mount_offset * s, config.mount_height};
    v.translation = (v.rotation * position) * -1.0;
    rig.views.push_back(v);
  }
  return rig;
}

void CameraRig::validate() const {
  if (views.empty()) throw ConfigError("rig: at least one view is required");
  double covered = 0;
  for (const auto& v : views) covered += 2 * std::atan(v.width / (2 * v.fx));
  if (covered < 2 * std::numbers::pi - 1e-9) throw ConfigError("rig: views do not cover 360 degrees of azimuth");
}

std::vector<Image> render_cameras(const Scene& scene, const CameraRig& rig, const std::vector<ClassSpec>& classes) {
  static constexpr double kShade[3] = {0.85, 0.7, 1.0};
  std::vector<Image> images;
  for (const auto& view : rig.views) {
    Image img{view.height, view.width, std::vector<std::uint8_t>(3ull * view.height * view.width)};
    const Vec3 origin = view.cam_to_ego({0, 0, 0});
    const Mat3 rt = view.rotation.transposed();
    for (int r = 0; r < view.height; ++r)
      for (int c = 0; c < view.width; ++c) {
        const Vec3 d = rt * Vec3{(c + 0.5 - view.cx) / view.fx, (r + 0.5 - view.cy) / view.fy, 1.0};
        const Hit h = cast(origin, d, scene.boxes, std::numeric_limits<double>::infinity());
        std::uint8_t* px = &img.rgb[3ull * (static_cast<std::size_t>(r) * view.width + c)];
        if (h.box >= 0) {
          const auto& col = classes.at(scene.boxes[h.box].class_id).color;
          for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>(std::lround(col[k] * kShade[h.face]));
        } else if (h.box == -1) {
          px[0] = px[1] = px[2] = 96;
        } else {
          px[0] = 150, px[1] = 170, px[2] = 190;
        }
      }
    images.push_back(std::move(img));
  }
  return images;
}

int decode_class(const std::uint8_t* rgb, const std::vector<ClassSpec>& classes) {
  const double r = rgb[0], g = rgb[1], b = rgb[2];
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  if (mx <= 0 || (mx - mn) / mx < 0.45) return -1;
  const double sum = r + g + b;
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& c = classes[k].color;
    const double cs = double(c[0]) + c[1] + c[2];
    const double d = std::pow(r / sum - c[0] / cs, 2) + std::pow(g / sum - c[1] / cs, 2) + std::pow(b / sum - c[2] / cs, 2);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace dal::synth
