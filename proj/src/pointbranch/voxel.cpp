#include "dal/pointbranch/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "dal/common/rng.hpp"

namespace dal::pb {

namespace {

int extent(double lo, double hi, double size) { return static_cast<int>(std::lround((hi - lo) / size)); }

using Feature = std::array<double, kPointFeatures>;

Feature point_feature(const synth::LidarPoint& p) { return {p.x, p.y, p.z, p.intensity, p.dt}; }

std::vector<std::uint32_t> visit_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

/// Mean over kept points, summed in lexicographic feature order.
Feature mean_of(std::vector<Feature>& pts) {
  std::sort(pts.begin(), pts.end());
  Feature s{};
  for (const auto& f : pts)
    for (int k = 0; k < kPointFeatures; ++k) s[k] += f[k];
  for (auto& v : s) v /= static_cast<double>(pts.size());
  return s;
}

}  // namespace

int VoxelGridSpec::nx() const { return extent(x_min, x_max, voxel_xy); }
int VoxelGridSpec::ny() const { return extent(y_min, y_max, voxel_xy); }
int VoxelGridSpec::nz() const { return extent(z_min, z_max, voxel_z); }

void VoxelGridSpec::validate() const {
  if (voxel_xy <= 0 || voxel_z <= 0 || x_max <= x_min || y_max <= y_min || z_max <= z_min || max_points < 1 ||
      max_lag <= 0)
    throw ConfigError("voxel grid: invalid range or voxel size");
  for (auto [lo, hi, s] : {std::tuple{x_min, x_max, voxel_xy}, {y_min, y_max, voxel_xy}, {z_min, z_max, voxel_z}})
    if (std::abs((hi - lo) / s - std::round((hi - lo) / s)) > 1e-9)
      throw ConfigError("voxel grid: range is not a whole number of voxels");
}

bool VoxelGridSpec::cell_of(double x, double y, double z, int& ix, int& iy, int& iz) const {
  if (!(x >= x_min && x < x_max && y >= y_min && y < y_max && z >= z_min && z < z_max)) return false;
  ix = std::min(static_cast<int>(std::floor((x - x_min) / voxel_xy)), nx() - 1);
  iy = std::min(static_cast<int>(std::floor((y - y_min) / voxel_xy)), ny() - 1);
  iz = std::min(static_cast<int>(std::floor((z - z_min) / voxel_z)), nz() - 1);
  return true;
}

VoxelGrid voxelize(const synth::PointCloudSweeps& cloud, const VoxelGridSpec& spec, std::uint64_t seed,
                   kernels::Exec exec) {
  spec.validate();
  const int nx = spec.nx(), ny = spec.ny();
  VoxelGrid grid;
  grid.spec = spec;
  const auto order = visit_order(cloud.points.size(), seed);
  const auto n = static_cast<std::int64_t>(order.size());

  // Key (iz, ix, iy) linearised so that sorting keys sorts voxels.
  std::vector<std::int64_t> keys(n);
  auto key_of = [&](std::int64_t k) {
    const auto& p = cloud.points[order[k]];
    int ix, iy, iz;
    return spec.cell_of(p.x, p.y, p.z, ix, iy, iz) ? (static_cast<std::int64_t>(iz) * nx + ix) * ny + iy : -1;
  };

  std::vector<std::pair<std::int64_t, std::vector<Feature>>> voxels;
  if (exec == kernels::Exec::Serial) {
    std::unordered_map<std::int64_t, std::size_t> slot;
    for (std::int64_t k = 0; k < n; ++k) {
      const auto key = key_of(k);
      if (key < 0) continue;
      ++grid.in_range_points;
      auto [it, fresh] = slot.try_emplace(key, voxels.size());
      if (fresh) voxels.push_back({key, {}});
      auto& pts = voxels[it->second].second;
      if (static_cast<int>(pts.size()) < spec.max_points) pts.push_back(point_feature(cloud.points[order[k]]));
    }
    std::sort(voxels.begin(), voxels.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  } else {
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < n; ++k) keys[k] = key_of(k);
    std::vector<std::int64_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });
    std::vector<std::int64_t> starts;
    for (std::int64_t i = 0; i < n; ++i)
      if (keys[idx[i]] >= 0 && (i == 0 || keys[idx[i]] != keys[idx[i - 1]])) starts.push_back(i);
    const std::int64_t first_valid = starts.empty() ? n : starts.front();
    grid.in_range_points = n - first_valid;
    voxels.resize(starts.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t v = 0; v < static_cast<std::int64_t>(starts.size()); ++v) {
      const std::int64_t end = v + 1 < static_cast<std::int64_t>(starts.size()) ? starts[v + 1] : n;
      auto& [key, pts] = voxels[v];
      key = keys[idx[starts[v]]];
      for (std::int64_t i = starts[v]; i < end && static_cast<int>(pts.size()) < spec.max_points; ++i)
        pts.push_back(point_feature(cloud.points[order[idx[i]]]));
    }
  }

  grid.coords.resize(voxels.size());
  grid.features.resize(voxels.size());
  grid.counts.resize(voxels.size());
  const auto nv = static_cast<std::int64_t>(voxels.size());
#pragma omp parallel for schedule(static) if (exec == kernels::Exec::Parallel)
  for (std::int64_t v = 0; v < nv; ++v) {
    const auto key = voxels[v].first;
    grid.coords[v] = {static_cast<int>((key / ny) % nx), static_cast<int>(key % ny), static_cast<int>(key / (static_cast<std::int64_t>(nx) * ny))};
    grid.counts[v] = static_cast<int>(voxels[v].second.size());
    grid.features[v] = mean_of(voxels[v].second);
  }
  return grid;
}

tc::Tensorf voxels_to_dense(const std::vector<VoxelGrid>& grids, kernels::Exec exec) {
  if (grids.empty()) throw ShapeError("voxels_to_dense: empty batch");
  const auto& spec = grids.front().spec;
  const int nx = spec.nx(), ny = spec.ny(), nz = spec.nz();
  for (const auto& g : grids)
    if (g.spec.nx() != nx || g.spec.ny() != ny || g.spec.nz() != nz)
      throw ShapeError("voxels_to_dense: grids in a batch differ in extent");
  const std::int64_t plane = static_cast<std::int64_t>(nx) * ny;
  const std::int64_t per_sample = kVoxelChannels * nz * plane;
  std::vector<float> out(grids.size() * per_sample, 0.f);
  const auto batch = static_cast<std::int64_t>(grids.size());
  // Each voxel owns distinct output cells, so the scatter has a single writer.
#pragma omp parallel for schedule(static) if (exec == kernels::Exec::Parallel)
  for (std::int64_t b = 0; b < batch; ++b) {
    const auto& g = grids[b];
    float* base = out.data() + b * per_sample;
    for (std::size_t v = 0; v < g.coords.size(); ++v) {
      const auto [ix, iy, iz] = g.coords[v];
      const auto& f = g.features[v];
      const double cx = spec.x_min + (ix + 0.5) * spec.voxel_xy;
      const double cy = spec.y_min + (iy + 0.5) * spec.voxel_xy;
      const double cz = spec.z_min + (iz + 0.5) * spec.voxel_z;
      const float vals[kVoxelChannels] = {
          static_cast<float>((f[0] - cx) / spec.voxel_xy), static_cast<float>((f[1] - cy) / spec.voxel_xy),
          static_cast<float>((f[2] - cz) / spec.voxel_z), static_cast<float>(f[3]),
          static_cast<float>(f[4] / spec.max_lag), static_cast<float>(g.counts[v]) / spec.max_points};
      const std::int64_t cell = static_cast<std::int64_t>(ix) * ny + iy;
      for (int k = 0; k < kVoxelChannels; ++k) base[(iz * kVoxelChannels + k) * plane + cell] = vals[k];
    }
  }
  return tc::Tensorf::from_data({batch, static_cast<std::int64_t>(kVoxelChannels) * nz, nx, ny}, std::move(out));
}

}  // namespace dal::pb
