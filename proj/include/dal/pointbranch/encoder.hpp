#pragma once

#include <string>
#include <vector>

#include "dal/tensorcore/nn.hpp"

namespace dal::pb {

struct SparseEncoderConfig {
  int base_channels = 16;
  std::vector<int> strides{1, 2};  // stage i has base_channels << i channels
  int blocks_per_stage = 1;

  int total_stride() const;
  int out_channels() const;
};

/// Pillar-collapsed volumetric encoder: the z slices arrive stacked in the
/// channel axis, each stage is a (strided) conv followed by residual blocks.
/// Convolutions carry no bias, so an empty grid maps to a constant field (zero
/// at initialisation).
class SparseEncoder {
 public:
  SparseEncoder() = default;
  SparseEncoder(tc::ParamStore<float>& store, const std::string& name, int in_channels, SparseEncoderConfig config);
  tc::Tensorf operator()(const tc::Tensorf& x);
  const SparseEncoderConfig& config() const { return config_; }
  std::vector<int> stage_widths() const;

 private:
  SparseEncoderConfig config_;
  std::vector<tc::ConvBnAct<float>> down_;
  std::vector<std::vector<tc::BasicBlock<float>>> blocks_;
};

struct DenseStage {
  int stride = 1, blocks = 1, channels = 32;
};

struct DenseEncoderConfig {
  std::vector<DenseStage> stages{{1, 2, 32}, {2, 2, 64}};
  int out_channels = 128;
};

/// SECOND-style BEV encoder: residual stages at increasing stride, then a
/// neck that brings every stage back to the input resolution and concatenates.
class DenseEncoder {
 public:
  DenseEncoder() = default;
  DenseEncoder(tc::ParamStore<float>& store, const std::string& name, int in_channels, DenseEncoderConfig config);
  tc::Tensorf operator()(const tc::Tensorf& x);
  /// Product of all stage strides; input extents must be divisible by it.
  int downsample() const;

 private:
  DenseEncoderConfig config_;
  std::vector<std::vector<tc::BasicBlock<float>>> stages_;
  std::vector<tc::ConvBnAct<float>> lateral_;
  std::vector<int> up_;
};

}  // namespace dal::pb
