#pragma once

#include <cstdint>
#include <vector>

#include "dal/synthio/world.hpp"

namespace dal::synth {

struct LidarConfig {
  int beams = 32;
  double elevation_lo_deg = -30, elevation_hi_deg = 10;
  double azimuth_step_deg = 1.0;
  double max_range = 40;
  double height = 1.8;
  int sweeps = 3;
  double dt = 0.1;
  double range_noise = 0;  // stddev in metres
  double box_intensity = 0.5, ground_intensity = 0.1;

  void validate() const;
  bool operator==(const LidarConfig&) const = default;
};

struct LidarPoint {
  double x = 0, y = 0, z = 0, intensity = 0;
  double dt = 0;  // time lag of the sweep, seconds
  bool operator==(const LidarPoint&) const = default;
};

struct PointCloudSweeps {
  std::vector<LidarPoint> points;  // grouped by sweep, reference sweep first
  int sweep_count = 1;
  double dt = 0.1;
  int sweep_of(const LidarPoint& p) const;
  bool operator==(const PointCloudSweeps&) const = default;
};

/// Ray-casts every sweep against the boxes and the ground plane z = 0, all in
/// the reference ego frame. Each sweep uses its own seeded azimuth phase.
/// Points on a moving box are cast against the box at its reference pose and
/// then displaced by -v * dt of that sweep.
PointCloudSweeps simulate_lidar(const Scene& scene, const LidarConfig& sensor);

/// Pinhole camera. Extrinsics map ego coordinates into the camera frame
/// (x right, y down, z forward): p_cam = rotation * p_ego + translation.
struct CameraView {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Mat3 rotation;
  Vec3 translation;
  int height = 1, width = 1;

  Vec3 ego_to_cam(const Vec3& p) const { return rotation * p + translation; }
  Vec3 cam_to_ego(const Vec3& p) const { return rotation.transposed() * (p - translation); }
  /// Continuous pixel coordinates (pixel centres at i + 0.5). False when the
  /// point is behind the camera or outside the image.
  bool project(const Vec3& ego, double& u, double& v, double& depth) const;
  bool operator==(const CameraView&) const = default;
};

struct RigConfig {
  int views = 6;
  double hfov_deg = 70;
  int height = 128, width = 352;
  double mount_height = 1.6;
  double mount_offset = 0.5;  // forward offset of each camera from the ego origin

  void validate() const;
  bool operator==(const RigConfig&) const = default;
};

struct CameraRig {
  std::vector<CameraView> views;

  /// Evenly spaced views around the vertical axis, view 0 looking along +x.
  static CameraRig surround(const RigConfig& config);
  /// Throws unless N >= 1 and the horizontal fields of view cover 360°.
  void validate() const;
};

struct Image {
  int height = 0, width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, interleaved
  bool operator==(const Image&) const = default;
};

/// Flat-shaded rasters: box faces in their class colour (scaled by a per-face
/// shade), ground and sky in unsaturated greys. Nearest hit wins.
std::vector<Image> render_cameras(const Scene& scene, const CameraRig& rig,
                                  const std::vector<ClassSpec>& classes);

/// Class whose palette chroma is nearest to the pixel, or -1 for background
/// (low saturation).
int decode_class(const std::uint8_t* rgb, const std::vector<ClassSpec>& classes);

}  // namespace dal::synth
