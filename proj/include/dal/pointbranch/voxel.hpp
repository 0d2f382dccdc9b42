#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dal/kernels/exec.hpp"
#include "dal/synthio/sensors.hpp"
#include "dal/tensorcore/tensor.hpp"

namespace dal::pb {

/// Axis-aligned voxel range. Cells are half-open: [lo + i*size, lo + (i+1)*size).
struct VoxelGridSpec {
  double x_min = -24, x_max = 24, y_min = -24, y_max = 24, z_min = -0.5, z_max = 3.5;
  double voxel_xy = 0.5, voxel_z = 1.0;
  int max_points = 10;
  double max_lag = 0.2;  // normaliser for the time-lag channel

  int nx() const;
  int ny() const;
  int nz() const;
  void validate() const;
  /// False for points outside the range.
  bool cell_of(double x, double y, double z, int& ix, int& iy, int& iz) const;
};

inline constexpr int kPointFeatures = 5;  // x, y, z, intensity, time lag
inline constexpr int kVoxelChannels = 6;  // per z slice in the dense input

struct VoxelGrid {
  VoxelGridSpec spec;
  std::vector<std::array<int, 3>> coords;  // (ix, iy, iz), sorted by (iz, ix, iy)
  std::vector<std::array<double, kPointFeatures>> features;  // mean of assigned points
  std::vector<int> counts;  // points kept (<= max_points)
  std::int64_t in_range_points = 0;
};

/// Hard voxelisation. Points are visited in a permutation drawn from `seed`;
/// each voxel keeps the first `max_points` it receives. Kept points are summed
/// in a canonical order so the result does not depend on input order.
VoxelGrid voxelize(const synth::PointCloudSweeps& cloud, const VoxelGridSpec& spec, std::uint64_t seed,
                   kernels::Exec exec = kernels::default_exec());

/// Dense encoder input for a batch, shape (B, kVoxelChannels * nz, nx, ny).
/// Per slice: offsets of the mean point from the voxel centre (in voxels),
/// intensity, normalised lag, and fill ratio count / max_points.
tc::Tensorf voxels_to_dense(const std::vector<VoxelGrid>& grids, kernels::Exec exec = kernels::default_exec());

}  // namespace dal::pb
