#pragma once

#include <cmath>
#include <cstdint>

namespace dal {

/// Square-celled BEV raster. Tensors over it are laid out (C, nx, ny) with the
/// flat cell index ix * ny + iy. Cells are half-open like voxels.
struct BevGrid {
  double x_min = -24, y_min = -24;
  double cell = 1.0;
  int nx = 48, ny = 48;
  double z_min = -2, z_max = 6;  // vertical extent accepted by the view transform

  double x_max() const { return x_min + nx * cell; }
  double y_max() const { return y_min + ny * cell; }
  std::int64_t cells() const { return static_cast<std::int64_t>(nx) * ny; }
  /// Flat cell index, or -1 outside the grid.
  std::int64_t cell_of(double x, double y, double z) const {
    if (!(z >= z_min && z < z_max)) return -1;
    const double fx = (x - x_min) / cell, fy = (y - y_min) / cell;
    if (!(fx >= 0 && fx < nx && fy >= 0 && fy < ny)) return -1;
    return static_cast<std::int64_t>(fx) * ny + static_cast<std::int64_t>(fy);
  }
  bool operator==(const BevGrid&) const = default;
};

}  // namespace dal
