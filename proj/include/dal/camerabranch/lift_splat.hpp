#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dal/camerabranch/calib.hpp"
#include "dal/kernels/exec.hpp"
#include "dal/tensorcore/tensor.hpp"

namespace dal::cam {

/// Precomputed BEV destination of every frustum point of one sample, plus the
/// points grouped into runs that share a cell. Frustum point p enumerates
/// (view, depth bin, h, w) in the memory order of the depth tensor.
struct Frustum {
  int views = 0, depth_bins = 0, feat_h = 0, feat_w = 0;
  int nx = 0, ny = 0;
  std::uint64_t calib_fingerprint = 0;
  std::vector<std::int32_t> point_cell;      // -1 when outside the grid
  std::vector<std::int32_t> ranks;           // valid points ordered by cell, stable
  std::vector<std::int32_t> interval_begin;  // offsets into ranks, one past the end last
  std::vector<std::int32_t> interval_cell;

  std::int64_t valid_points() const { return static_cast<std::int64_t>(ranks.size()); }
  std::int64_t intervals() const { return static_cast<std::int64_t>(interval_cell.size()); }
  /// Throws when the frustum was built for a different calibration.
  void check(const Calibration& calib) const;
};

Frustum build_frustum(const Calibration& calib, const BevGrid& grid, const DepthBins& bins, int feat_h, int feat_w,
                      int stride, kernels::Exec exec = kernels::default_exec());

/// Pooled view transform. feat (B*N, C, H, W), depth (B*N, D, H, W), one
/// frustum per sample. Returns (B, C, nx, ny); each cell is the sum over its
/// run of depth * feature. Differentiable in feat and depth.
template <class T>
tc::Tensor<T> lift_splat(const tc::Tensor<T>& feat, const tc::Tensor<T>& depth, std::span<const Frustum> frusta,
                         kernels::Exec exec = kernels::default_exec());

/// Reference implementation: loops over (view, pixel, bin), projects each
/// point on the fly and scatter-adds. Differentiable, with its own backward.
template <class T>
tc::Tensor<T> lift_splat_oracle(const tc::Tensor<T>& feat, const tc::Tensor<T>& depth,
                                std::span<const Calibration> calibs, const BevGrid& grid, const DepthBins& bins,
                                int stride);

}  // namespace dal::cam
