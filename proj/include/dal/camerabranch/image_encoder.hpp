#pragma once

#include <string>
#include <vector>

#include "dal/camerabranch/calib.hpp"
#include "dal/synthio/sensors.hpp"
#include "dal/tensorcore/nn.hpp"

namespace dal::cam {

inline constexpr int kFeatureStride = 8;

struct ImageEncoderConfig {
  std::vector<int> widths{16, 32, 64, 128};  // stem (stride 2), then stages at strides 4, 8, 16
  int blocks = 1;                            // residual blocks per stage
  int out_channels = 128;
  bool smooth = false;  // extra 3x3 conv after the top-down merge

  /// Input extents must be divisible by this.
  static constexpr int total_stride() { return 16; }
};

/// Residual backbone with a two-level top-down neck; emits one map at stride 8.
class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(tc::ParamStore<float>& store, const std::string& name, ImageEncoderConfig config);
  /// images (B*N, 3, H, W) -> (B*N, out_channels, H/8, W/8).
  tc::Tensorf operator()(const tc::Tensorf& images);

 private:
  ImageEncoderConfig config_;
  tc::ConvBnAct<float> stem_;
  std::vector<std::vector<tc::BasicBlock<float>>> stages_;
  tc::ConvBnAct<float> lateral8_, lateral16_, smooth_;
};

/// 1x1 conv to D logits followed by a softmax over the bins.
class DepthHead {
 public:
  DepthHead() = default;
  DepthHead(tc::ParamStore<float>& store, const std::string& name, int in_channels, int bins);
  tc::Tensorf logits(const tc::Tensorf& feat) const { return conv_(feat); }
  tc::Tensorf operator()(const tc::Tensorf& feat) const { return tc::softmax(conv_(feat), 1); }

 private:
  tc::Conv2d<float> conv_;
};

/// Normalised float planes (B*N, 3, H, W) from interleaved 8-bit images.
tc::Tensorf images_to_tensor(const std::vector<const synth::Image*>& images);

}  // namespace dal::cam
