#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dal/augment/augment.hpp"
#include "dal/camerabranch/calib.hpp"
#include "dal/camerabranch/image_encoder.hpp"
#include "dal/common/bev_grid.hpp"
#include "dal/common/json_util.hpp"
#include "dal/fusionhead/head.hpp"
#include "dal/losses/assign.hpp"
#include "dal/losses/losses.hpp"
#include "dal/pointbranch/encoder.hpp"
#include "dal/pointbranch/voxel.hpp"
#include "dal/tensorcore/optim.hpp"

namespace dal::pipe {

enum class ConfidenceMode { Classification, Heatmap, Product };
std::string to_string(ConfidenceMode m);
ConfidenceMode confidence_from_string(const std::string& s);

struct ModelConfig {
  std::string preset = "base";
  pb::VoxelGridSpec voxel;
  pb::SparseEncoderConfig sparse;
  pb::DenseEncoderConfig dense;
  cam::ImageEncoderConfig image;
  cam::DepthBins depth;
  fh::HeadConfig head;
  BevGrid grid;
  bool camera = true;  // false: LiDAR-only, zero image BEV and image features, no aux loss
  int aux_hidden = 64;
  ConfidenceMode confidence = ConfidenceMode::Classification;

  /// Cross-checks channel counts and grid geometry.
  void validate() const;
};

struct AugmentConfig {
  aug::ResizeConfig resize;
  aug::GlobalAugConfig global;
  aug::VelocityAugConfig velocity;
  bool cbgs = true;
};

struct OptimConfig {
  int epochs = 20;
  int batch_size = 8;
  double initial_lr = 2.0e-4;
  double peak_factor = 10, final_factor = 1e-4, up_fraction = 0.4;
  double momentum_lo = 0.85, momentum_hi = 0.95;
  double weight_decay = 0.0;
  double grad_clip = 35.0;
};

struct LossConfig {
  loss::FocalParams focal;
  loss::LossWeights weights;
  loss::MatchConfig match;
  loss::TargetConfig targets;
};

struct TrainConfig {
  ModelConfig model;
  AugmentConfig augment;
  OptimConfig optim;
  LossConfig loss;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // steps; 0 keeps only the final checkpoint
  int log_every = 1;
  int max_steps = 0;         // > 0 caps the run (the schedule still spans `epochs`)

  void validate() const;
};

/// Model presets echoing the tiny / base / large pipelines plus the
/// small-camera, large-LiDAR "recommended" combination.
ModelConfig model_preset(const std::string& name);
std::vector<std::string> preset_names();

Json to_json(const TrainConfig& c);
/// Starts from the preset named by `model.preset` (default "base") and
/// applies every given field. Unknown keys raise ConfigError.
TrainConfig config_from_json(const Json& j);
TrainConfig load_config(const std::string& path);

/// Named toggles used by the ablation harness: "camera=on|off",
/// "resize=narrow|wide", "velaug=on|off".
void apply_toggle(TrainConfig& c, const std::string& toggle);

}  // namespace dal::pipe
