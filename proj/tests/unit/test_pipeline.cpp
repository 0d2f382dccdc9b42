#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "dal/pipeline/model.hpp"

namespace {

using namespace dal;
using namespace dal::pipe;

TrainConfig preset_config(const std::string& preset, bool camera = true) {
  auto c = config_from_json(Json{{"model", {{"preset", preset}, {"camera", camera}}}});
  c.augment.velocity.enabled = true;
  return c;
}

struct Batch {
  std::vector<Frame> frames;
  std::vector<const Frame*> ptrs() const {
    std::vector<const Frame*> p;
    for (const auto& f : frames) p.push_back(&f);
    return p;
  }
};

Batch make_batch(const TrainConfig& c, std::uint64_t seed, int n, bool train = true) {
  synth::WorldConfig world;
  const auto rig = synth::CameraRig::surround(world.rig);
  Batch b;
  for (int i = 0; i < n; ++i) {
    const auto s = synth::make_sample(world, synth::sample_seed(seed, i));
    b.frames.push_back(prepare_frame(s, rig, c, train, seed * 131 + i));
  }
  return b;
}

bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

bool any_nonzero(std::span<const float> g) {
  for (float v : g)
    if (v != 0) return true;
  return false;
}

TEST(Config, PresetsValidateAndRoundTrip) {
  for (const auto& name : preset_names()) {
    auto c = preset_config(name);
    EXPECT_NO_THROW(c.validate()) << name;
    const auto back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c)) << name;
  }
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(config_from_json(Json{{"modle", Json::object()}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"model", {{"preset", "tiny"}, {"wat", 1}}}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"model", {{"preset", "huge"}}}}), ConfigError);
}

TEST(Config, TogglesFlipTheAblationSwitches) {
  auto c = preset_config("tiny");
  apply_toggle(c, "camera=off");
  EXPECT_FALSE(c.model.camera);
  apply_toggle(c, "resize=narrow");
  EXPECT_EQ(c.augment.resize.range, aug::ResizeRange::narrow());
  apply_toggle(c, "resize=wide");
  EXPECT_EQ(c.augment.resize.range, aug::ResizeRange::wide());
  apply_toggle(c, "velaug=off");
  EXPECT_FALSE(c.augment.velocity.enabled);
  EXPECT_THROW(apply_toggle(c, "velaug=maybe"), ConfigError);
  EXPECT_THROW(apply_toggle(c, "lr=3"), ConfigError);
}

TEST(Frame, PreparationIsDeterministic) {
  const auto c = preset_config("tiny");
  const auto a = make_batch(c, 5, 2), b = make_batch(c, 5, 2);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(a.frames[i].voxels.features, b.frames[i].voxels.features);
    EXPECT_EQ(a.frames[i].images, b.frames[i].images);
    EXPECT_EQ(a.frames[i].gt_boxes, b.frames[i].gt_boxes);
  }
}

TEST(Frame, EvalFramesAreUnaugmented) {
  const auto c = preset_config("tiny");
  const auto f = make_batch(c, 9, 1, false).frames[0];
  EXPECT_EQ(f.velocity_augmented, 0);
  EXPECT_EQ(f.calib.bda, Mat3::identity());
  EXPECT_EQ(f.images.size(), 6u);
  EXPECT_EQ(f.images[0].height, c.augment.resize.input_height);
  EXPECT_EQ(f.images[0].width, c.augment.resize.input_width);
  for (const auto& b : f.gt_boxes) {
    EXPECT_GE(b.center.x, c.model.grid.x_min);
    EXPECT_LT(b.center.x, c.model.grid.x_min + c.model.grid.nx * c.model.grid.cell);
  }
}

TEST(Model, ForwardShapesAndFiniteLosses) {
  const auto c = preset_config("tiny");
  DalModel m(c.model, 1);
  const auto b = make_batch(c, 2, 2);
  const auto out = m.forward(b.ptrs());
  const int K = c.model.head.top_k, C = c.model.head.num_classes;
  EXPECT_EQ(out.heatmap_logits.shape(), (tc::Shape{2, C, c.model.grid.nx, c.model.grid.ny}));
  EXPECT_EQ(out.reg.shape(), (tc::Shape{2 * K, fh::kCodeSize}));
  EXPECT_EQ(out.cls.shape(), (tc::Shape{2 * K, C}));
  const auto l = m.losses(out, b.ptrs(), c.loss);
  for (const auto* t : {&l.total, &l.heatmap, &l.cls, &l.reg, &l.aux}) EXPECT_TRUE(std::isfinite(t->item()));
  EXPECT_GT(l.matched, 0);
  EXPECT_GT(l.aux_visible, 0);
  const double expect = l.aux.item() + ((l.heatmap.item() + l.cls.item()) + 0.25f * l.reg.item());
  EXPECT_NEAR(l.total.item(), expect, 1e-5 * std::abs(expect));
}

TEST(Model, DecodeYieldsTopKDetections) {
  auto c = preset_config("tiny");
  for (auto mode : {ConfidenceMode::Classification, ConfidenceMode::Heatmap, ConfidenceMode::Product}) {
    c.model.confidence = mode;
    DalModel m(c.model, 3);
    m.store().set_training(false);
    const auto b = make_batch(c, 4, 1, false);
    const auto out = m.forward(b.ptrs());
    const auto dets = m.decode(out, 0);
    ASSERT_EQ(static_cast<int>(dets.size()), c.model.head.top_k);
    for (const auto& d : dets) {
      EXPECT_GE(d.confidence, 0);
      EXPECT_LE(d.confidence, 1);
      EXPECT_GT(d.box.size.x, 0);
      EXPECT_LT(d.box.class_id, c.model.head.num_classes);
    }
  }
}

TEST(Model, RegressionGradientNeverReachesTheCamera) {
  const auto c = preset_config("tiny");
  DalModel m(c.model, 11);
  int cam_params = 0;
  for (const auto& [name, t] : m.store().params()) cam_params += starts_with(name, DalModel::kCameraPrefix);
  ASSERT_GT(cam_params, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto b = make_batch(c, 100 + trial, 2);
    const auto out = m.forward(b.ptrs());
    const auto l = m.losses(out, b.ptrs(), c.loss);
    ASSERT_GT(l.matched, 0);
    m.store().zero_grad();
    tc::backward(l.reg);
    bool lidar_touched = false;
    for (const auto& [name, t] : m.store().params()) {
      if (starts_with(name, DalModel::kCameraPrefix)) {
        for (float g : t.grad()) {
          std::uint32_t bits;
          std::memcpy(&bits, &g, 4);
          ASSERT_EQ(bits, 0u) << name;
        }
      }
      if (starts_with(name, DalModel::kLidarPrefix)) lidar_touched |= any_nonzero(t.grad());
    }
    EXPECT_TRUE(lidar_touched);

    m.store().zero_grad();
    tc::backward(l.heatmap);
    bool cam = false, lidar = false;
    for (const auto& [name, t] : m.store().params()) {
      if (starts_with(name, DalModel::kCameraPrefix)) cam |= any_nonzero(t.grad());
      if (starts_with(name, DalModel::kLidarPrefix)) lidar |= any_nonzero(t.grad());
    }
    EXPECT_TRUE(cam);
    EXPECT_TRUE(lidar);
  }
}

TEST(Model, ClassificationAndAuxTrainTheCamera) {
  const auto c = preset_config("tiny");
  DalModel m(c.model, 12);
  const auto b = make_batch(c, 40, 2);
  const auto out = m.forward(b.ptrs());
  const auto l = m.losses(out, b.ptrs(), c.loss);
  for (const auto* loss : {&l.cls, &l.aux}) {
    m.store().zero_grad();
    tc::backward(*loss);
    bool cam = false;
    for (const auto& [name, t] : m.store().params())
      if (starts_with(name, "camera.backbone")) cam |= any_nonzero(t.grad());
    EXPECT_TRUE(cam);
  }
}

TEST(Model, LidarOnlyHasNoCameraParametersOrAux) {
  const auto c = preset_config("tiny", false);
  DalModel m(c.model, 2);
  for (const auto& [name, t] : m.store().params()) {
    EXPECT_FALSE(starts_with(name, DalModel::kCameraPrefix)) << name;
    EXPECT_FALSE(starts_with(name, "aux.")) << name;
  }
  const auto b = make_batch(c, 3, 2);
  EXPECT_TRUE(b.frames[0].images.empty());
  const auto out = m.forward(b.ptrs());
  const auto l = m.losses(out, b.ptrs(), c.loss);
  EXPECT_EQ(l.aux.item(), 0.f);
  EXPECT_TRUE(std::isfinite(l.total.item()));
}

}  // namespace
