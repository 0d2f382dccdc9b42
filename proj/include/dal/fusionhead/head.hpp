#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dal/common/bev_grid.hpp"
#include "dal/synthio/world.hpp"
#include "dal/tensorcore/nn.hpp"

namespace dal::fh {

inline constexpr int kCodeSize = 10;  // dx, dy, z, log w, log l, log h, sin, cos, vx, vy
using BoxCode = std::array<double, kCodeSize>;

/// Regression target of `box` relative to BEV cell (ix, iy): sub-cell offsets
/// in cell units, absolute z, log sizes, yaw as (sin, cos), planar velocity.
BoxCode encode_box(const synth::Box3D& box, int ix, int iy, const BevGrid& grid);
/// Inverse of encode_box; yaw = atan2(sin, cos), sizes = exp(log sizes).
synth::Box3D decode_box(const BoxCode& code, int ix, int iy, const BevGrid& grid, int class_id);

struct Proposal {
  int class_id = 0;
  int ix = 0, iy = 0;
  float score = 0;
  bool operator==(const Proposal&) const = default;
};

/// Top-K over a (C, X, Y) score map after 3x3 local-maximum filtering per
/// class: a cell survives when it is >= all of its neighbours; suppressed
/// cells rank with score 0. Ties go to the smaller (class, ix, iy).
std::vector<Proposal> select_candidates(std::span<const float> scores, int classes, int nx, int ny, int k);

struct Detection {
  synth::Box3D box;
  double confidence = 0;
  bool operator==(const Detection&) const = default;
};

struct FrameDetections {
  std::uint64_t frame_id = 0;
  std::vector<Detection> detections;
  bool operator==(const FrameDetections&) const = default;
};

/// Writes `<stem>.bin` (versioned, CRC-checked) and `<stem>.json`.
void write_detections(const std::filesystem::path& stem, const std::vector<FrameDetections>& frames);
std::vector<FrameDetections> read_detections(const std::filesystem::path& stem);

struct HeadConfig {
  int num_classes = 3;
  int bev_channels = 128;    // each of the two BEV inputs, and the image feature
  int fuse_channels = 32;
  int ffn_hidden = 64;
  int top_k = 50;
  double heatmap_bias = -2.19;
};

/// Late fusion and the dense / sparse heads. The fused map only feeds the
/// heatmap; regression sees LiDAR BEV features alone.
class FusionHead {
 public:
  FusionHead() = default;
  FusionHead(tc::ParamStore<float>& store, const std::string& name, HeadConfig config);

  /// Channel concat, 1x1 reduction, two residual blocks.
  tc::Tensorf fuse(const tc::Tensorf& lidar_bev, const tc::Tensorf& image_bev);
  /// Per-class logits (B, C, X, Y); sigmoid gives the heatmap.
  tc::Tensorf heatmap_logits(const tc::Tensorf& fused);
  /// (K, bev_channels) -> (K, kCodeSize).
  tc::Tensorf regress(const tc::Tensorf& point_features);
  /// Concat of (K, 128) image feature at the predicted centre, (K, 128) image
  /// BEV and (K, 128) LiDAR BEV at the cell, and the (K, 1) validity flag.
  tc::Tensorf classify(const tc::Tensorf& image_at_center, const tc::Tensorf& image_bev_at_cell,
                       const tc::Tensorf& point_bev_at_cell, const tc::Tensorf& valid);
  const HeadConfig& config() const { return config_; }

 private:
  HeadConfig config_;
  tc::ConvBnAct<float> reduce_;
  tc::BasicBlock<float> block0_, block1_;
  tc::Conv2d<float> heatmap_;
  tc::Linear<float> reg0_, reg1_, cls0_, cls1_;
};

/// Rows (sample[i], :, cell[i] / ny, cell[i] % ny) of a (B, C, X, Y) map as a
/// (K, C) tensor.
tc::Tensorf gather_cells(const tc::Tensorf& bev, std::span<const int> sample, std::span<const std::int64_t> cell);

}  // namespace dal::fh
