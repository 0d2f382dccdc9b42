#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dal/common/bev_grid.hpp"
#include "dal/synthio/sensors.hpp"

namespace dal::cam {

/// Per-sample camera geometry as seen by the network: intrinsics of the
/// resized and cropped input images, extrinsics, and the BEV-space
/// augmentation `bda` mapping ego coordinates into the augmented frame.
struct Calibration {
  std::vector<synth::CameraView> views;
  Mat3 bda;

  /// Augmented-frame point to pixel coordinates of one view.
  bool project(int view, const Vec3& p, double& u, double& v, double& depth) const;
  std::uint64_t fingerprint() const;
};

/// D bins of equal width over [d_min, d_max]; bin i stands for its centre.
struct DepthBins {
  int count = 30;
  double d_min = 1, d_max = 31;
  double center(int i) const { return d_min + (i + 0.5) * (d_max - d_min) / count; }
  void validate() const;
  bool operator==(const DepthBins&) const = default;
};

/// Augmented-frame position of the frustum point (pixel (h, w) of a stride
/// `stride` feature map, depth bin d).
Vec3 frustum_point(const Calibration& calib, int view, int h, int w, int d, int stride, const DepthBins& bins);

}  // namespace dal::cam
