#pragma once

#include <cstdint>
#include <vector>

#include "dal/camerabranch/lift_splat.hpp"
#include "dal/eval/latency.hpp"
#include "dal/pipeline/config.hpp"
#include "dal/synthio/dataset.hpp"

namespace dal::pipe {

/// One sample as the network sees it: voxels, network-input images and their
/// calibration, and the labels in the same (possibly augmented) frame.
struct Frame {
  std::uint64_t id = 0;
  pb::VoxelGrid voxels;
  std::vector<synth::Image> images;
  cam::Calibration calib;
  cam::Frustum frustum;
  std::vector<synth::Box3D> gt_boxes;  // centres inside the BEV grid
  std::vector<Vec3> gt_gravity;        // parallel to gt_boxes
  int velocity_augmented = 0;
};

/// Training applies velocity, global and resize augmentation drawn from
/// `aug_seed`; evaluation only the fixed eval resize. Camera inputs are
/// skipped when the model has no camera branch.
Frame prepare_frame(const synth::Sample& sample, const synth::CameraRig& rig, const TrainConfig& config, bool train,
                    std::uint64_t aug_seed);

struct ForwardOutput {
  int batch = 0, k = 0;
  tc::Tensorf point_bev, image_bev, image_feat;  // image tensors undefined without camera
  tc::Tensorf heatmap_logits;                    // (B, C, X, Y)
  std::vector<std::vector<fh::Proposal>> proposals;
  tc::Tensorf reg;  // (B*K, kCodeSize)
  tc::Tensorf cls;  // (B*K, C)
  std::vector<char> center_visible;  // per proposal row
};

struct LossBreakdown {
  tc::Tensorf total, heatmap, cls, reg, aux;
  int matched = 0, aux_visible = 0, aux_invisible = 0;
};

class DalModel {
 public:
  DalModel(const ModelConfig& config, std::uint64_t seed);
  DalModel(const DalModel&) = delete;
  DalModel& operator=(const DalModel&) = delete;

  tc::ParamStore<float>& store() { return store_; }
  const ModelConfig& config() const { return config_; }

  /// Stage marks go to `clock` when given: data transfer (tensor packing),
  /// LiDAR branch, camera branch, then the rest under "other".
  ForwardOutput forward(const std::vector<const Frame*>& batch, eval::StageClock* clock = nullptr);
  LossBreakdown losses(const ForwardOutput& out, const std::vector<const Frame*>& batch, const LossConfig& config);
  std::vector<fh::Detection> decode(const ForwardOutput& out, int sample) const;

  /// Aux logits at the gravity centres of the batch GTs that some view sees.
  tc::Tensorf aux_logits(const ForwardOutput& out, const std::vector<const Frame*>& batch, std::vector<int>& labels,
                         int& invisible);

  /// Parameter name prefixes of the two branches.
  static constexpr const char* kCameraPrefix = "camera.";
  static constexpr const char* kLidarPrefix = "lidar.";

 private:
  ModelConfig config_;
  tc::ParamStore<float> store_;
  pb::SparseEncoder sparse_;
  pb::DenseEncoder dense_;
  cam::ImageEncoder image_;
  cam::DepthHead depth_;
  fh::FusionHead head_;
  tc::Linear<float> aux0_, aux1_;
};

}  // namespace dal::pipe
