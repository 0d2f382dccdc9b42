#include "dal/pipeline/model.hpp"

#include <algorithm>
#include <cmath>

#include "dal/camerabranch/sample.hpp"
#include "dal/tensorcore/ops.hpp"

namespace dal::pipe {

Frame prepare_frame(const synth::Sample& sample, const synth::CameraRig& rig, const TrainConfig& config, bool train,
                    std::uint64_t aug_seed) {
  const auto& mc = config.model;
  Rng rng(aug_seed);
  Frame f;
  f.id = sample.seed;
  auto points = sample.sweeps.points;
  auto annotations = sample.annotations;
  Mat3 bda;
  if (train) {
    f.velocity_augmented = aug::velocity_aug_sample(config.augment.velocity, points, annotations, rng);
    bda = aug::draw_global(config.augment.global, rng).matrix();
    aug::global_aug(bda, points, annotations);
  }
  synth::PointCloudSweeps cloud;
  cloud.points = std::move(points);
  cloud.sweep_count = sample.sweeps.sweep_count;
  cloud.dt = sample.sweeps.dt;
  f.voxels = pb::voxelize(cloud, mc.voxel, rng.next());
  for (const auto& a : annotations) {
    const double fx = (a.box.center.x - mc.grid.x_min) / mc.grid.cell, fy = (a.box.center.y - mc.grid.y_min) / mc.grid.cell;
    if (fx < 0 || fy < 0 || fx >= mc.grid.nx || fy >= mc.grid.ny) continue;
    f.gt_boxes.push_back(a.box);
    f.gt_gravity.push_back(a.gravity_center);
  }
  f.calib.bda = bda;
  if (!mc.camera) return f;
  if (sample.images.size() != rig.views.size()) throw ShapeError("prepare_frame: image count differs from the rig");
  const auto& rc = config.augment.resize;
  const auto draw = aug::draw_resize(rc, sample.images[0].height, sample.images[0].width, train, rng);
  f.images.resize(rig.views.size());
  f.calib.views.resize(rig.views.size());
  for (std::size_t v = 0; v < rig.views.size(); ++v)
    aug::resize_view(sample.images[v], rig.views[v], draw, rc.input_height, rc.input_width, f.images[v], f.calib.views[v]);
  f.frustum = cam::build_frustum(f.calib, mc.grid, mc.depth, rc.input_height / cam::kFeatureStride,
                                 rc.input_width / cam::kFeatureStride, cam::kFeatureStride);
  return f;
}

DalModel::DalModel(const ModelConfig& config, std::uint64_t seed) : config_(config), store_(seed) {
  config_.validate();
  const int in = pb::kVoxelChannels * config_.voxel.nz();
  sparse_ = pb::SparseEncoder(store_, "lidar.sparse", in, config_.sparse);
  dense_ = pb::DenseEncoder(store_, "lidar.dense", config_.sparse.out_channels(), config_.dense);
  if (config_.camera) {
    image_ = cam::ImageEncoder(store_, "camera.backbone", config_.image);
    depth_ = cam::DepthHead(store_, "camera.depth", config_.image.out_channels, config_.depth.count);
  }
  head_ = fh::FusionHead(store_, "head", config_.head);
  if (config_.camera) {
    aux0_ = tc::Linear<float>(store_, "aux.fc0", config_.image.out_channels, config_.aux_hidden);
    aux1_ = tc::Linear<float>(store_, "aux.fc1", config_.aux_hidden, config_.head.num_classes);
    std::fill(aux1_.bias().data_mut().begin(), aux1_.bias().data_mut().end(),
              static_cast<float>(config_.head.heatmap_bias));
  }
}

namespace {

void mark(eval::StageClock* clock, eval::Stage s) {
  if (clock) clock->mark(s);
}

}  // namespace

ForwardOutput DalModel::forward(const std::vector<const Frame*>& batch, eval::StageClock* clock) {
  const auto& g = config_.grid;
  const int B = static_cast<int>(batch.size()), K = config_.head.top_k, C = config_.head.num_classes,
            F = config_.head.bev_channels;
  if (B == 0) throw ShapeError("forward: empty batch");
  ForwardOutput out;
  out.batch = B;
  out.k = K;

  std::vector<pb::VoxelGrid> grids;
  grids.reserve(B);
  for (const auto* f : batch) grids.push_back(f->voxels);
  auto voxels = pb::voxels_to_dense(grids);
  tc::Tensorf images;
  if (config_.camera) {
    std::vector<const synth::Image*> ptrs;
    for (const auto* f : batch)
      for (const auto& im : f->images) ptrs.push_back(&im);
    images = cam::images_to_tensor(ptrs);
  }
  mark(clock, eval::Stage::DataTransfer);

  out.point_bev = dense_(sparse_(voxels));
  mark(clock, eval::Stage::Lidar);

  if (config_.camera) {
    out.image_feat = image_(images);
    auto depth = depth_(out.image_feat);
    std::vector<cam::Frustum> frusta;
    frusta.reserve(B);
    for (const auto* f : batch) frusta.push_back(f->frustum);
    out.image_bev = cam::lift_splat(out.image_feat, depth, frusta);
  } else {
    out.image_bev = tc::Tensorf::zeros({B, F, g.nx, g.ny});
  }
  mark(clock, eval::Stage::Camera);

  out.heatmap_logits = head_.heatmap_logits(head_.fuse(out.point_bev, out.image_bev));
  const std::int64_t plane = static_cast<std::int64_t>(C) * g.nx * g.ny;
  std::vector<int> sample_of;
  std::vector<std::int64_t> cells;
  std::vector<float> scores(plane);
  for (int b = 0; b < B; ++b) {
    auto logits = out.heatmap_logits.data().subspan(b * plane, plane);
    for (std::int64_t i = 0; i < plane; ++i) scores[i] = 1.f / (1.f + std::exp(-logits[i]));
    out.proposals.push_back(fh::select_candidates(scores, C, g.nx, g.ny, K));
    for (const auto& p : out.proposals.back()) {
      sample_of.push_back(b);
      cells.push_back(static_cast<std::int64_t>(p.ix) * g.ny + p.iy);
    }
  }
  auto point_at_cell = fh::gather_cells(out.point_bev, sample_of, cells);
  out.reg = head_.regress(point_at_cell);

  const std::int64_t rows = static_cast<std::int64_t>(B) * K;
  tc::Tensorf image_at_center, image_at_cell, valid;
  out.center_visible.assign(rows, 0);
  if (config_.camera) {
    std::vector<Vec3> centers(rows);
    auto reg = out.reg.data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const auto& p = out.proposals[r / K][r % K];
      centers[r] = {g.x_min + (p.ix + reg[r * fh::kCodeSize]) * g.cell, g.y_min + (p.iy + reg[r * fh::kCodeSize + 1]) * g.cell,
                    reg[r * fh::kCodeSize + 2]};
    }
    std::vector<cam::Calibration> calibs;
    for (const auto* f : batch) calibs.push_back(f->calib);
    const auto vs = cam::project_points(centers, sample_of, calibs, cam::kFeatureStride);
    image_at_center = cam::sample_image_feature(out.image_feat, vs);
    image_at_cell = fh::gather_cells(out.image_bev, sample_of, cells);
    std::vector<float> flag(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
      out.center_visible[r] = vs.visible[r] > 0;
      flag[r] = out.center_visible[r] ? 1.f : 0.f;
    }
    valid = tc::Tensorf::from_data({rows, 1}, flag);
  } else {
    image_at_center = tc::Tensorf::zeros({rows, F});
    image_at_cell = tc::Tensorf::zeros({rows, F});
    valid = tc::Tensorf::zeros({rows, 1});
  }
  out.cls = head_.classify(image_at_center, image_at_cell, point_at_cell, valid);
  mark(clock, eval::Stage::Other);
  return out;
}

tc::Tensorf DalModel::aux_logits(const ForwardOutput& out, const std::vector<const Frame*>& batch,
                                 std::vector<int>& labels, int& invisible) {
  labels.clear();
  invisible = 0;
  if (!config_.camera) return {};
  std::vector<Vec3> points;
  std::vector<int> sample_of, cls;
  std::vector<cam::Calibration> calibs;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    calibs.push_back(batch[b]->calib);
    for (std::size_t i = 0; i < batch[b]->gt_boxes.size(); ++i) {
      points.push_back(batch[b]->gt_gravity[i]);
      sample_of.push_back(static_cast<int>(b));
      cls.push_back(batch[b]->gt_boxes[i].class_id);
    }
  }
  if (points.empty()) return {};
  const auto vs = cam::project_points(points, sample_of, calibs, cam::kFeatureStride);
  std::vector<std::int64_t> keep;
  for (std::size_t q = 0; q < points.size(); ++q) {
    if (vs.visible[q] > 0) {
      keep.push_back(static_cast<std::int64_t>(q));
      labels.push_back(cls[q]);
    } else {
      ++invisible;
    }
  }
  if (keep.empty()) return {};
  auto feats = tc::gather(cam::sample_image_feature(out.image_feat, vs), 0, keep);
  return aux1_(tc::relu(aux0_(feats)));
}

LossBreakdown DalModel::losses(const ForwardOutput& out, const std::vector<const Frame*>& batch, const LossConfig& lc) {
  const auto& g = config_.grid;
  const int B = out.batch, K = out.k, C = config_.head.num_classes;
  LossBreakdown l;
  std::vector<float> target;
  target.reserve(static_cast<std::size_t>(B) * C * g.nx * g.ny);
  loss::SparseTargets st;
  auto cls = out.cls.data();
  auto reg = out.reg.data();
  for (int b = 0; b < B; ++b) {
    const auto& gts = batch[b]->gt_boxes;
    const auto hm = loss::heatmap_targets(gts, g, C, lc.targets);
    target.insert(target.end(), hm.begin(), hm.end());
    const auto& props = out.proposals[b];
    const auto a = loss::match_proposals(props, cls.subspan(static_cast<std::size_t>(b) * K * C, K * C),
                                         reg.subspan(static_cast<std::size_t>(b) * K * fh::kCodeSize, K * fh::kCodeSize),
                                         C, gts, g, lc.match);
    loss::append_sparse_targets(st, static_cast<std::int64_t>(b) * K, props, a, gts, g);
  }
  l.matched = st.matched();
  l.heatmap = loss::heatmap_focal_loss<float>(out.heatmap_logits, target, lc.focal);
  l.cls = loss::sigmoid_focal_loss<float>(out.cls, st.labels, std::max(l.matched, 1), lc.focal);
  const std::vector<float> reg_target(st.reg_targets.begin(), st.reg_targets.end());
  l.reg = loss::weighted_l1<float>(tc::gather(out.reg, 0, st.matched_rows), reg_target, loss::kCodeWeights);
  std::vector<int> labels;
  auto aux = aux_logits(out, batch, labels, l.aux_invisible);
  l.aux_visible = static_cast<int>(labels.size());
  l.aux = labels.empty() ? tc::Tensorf::scalar(0.f) : loss::aux_loss<float>(aux, labels, lc.focal);
  l.total = loss::total_loss<float>(l.aux, l.heatmap, l.cls, l.reg, lc.weights);
  return l;
}

std::vector<fh::Detection> DalModel::decode(const ForwardOutput& out, int b) const {
  const int K = out.k, C = config_.head.num_classes;
  std::vector<fh::Detection> dets;
  auto cls = out.cls.data();
  auto reg = out.reg.data();
  for (int k = 0; k < K; ++k) {
    const std::size_t r = static_cast<std::size_t>(b) * K + k;
    const auto& p = out.proposals[b][k];
    int best = 0;
    for (int c = 1; c < C; ++c)
      if (cls[r * C + c] > cls[r * C + best]) best = c;
    const double cls_prob = 1 / (1 + std::exp(-static_cast<double>(cls[r * C + best])));
    int label = best;
    double conf = cls_prob;
    if (config_.confidence == ConfidenceMode::Heatmap) {
      label = p.class_id;
      conf = p.score;
    } else if (config_.confidence == ConfidenceMode::Product) {
      label = p.class_id;
      conf = p.score / (1 + std::exp(-static_cast<double>(cls[r * C + label])));
    }
    fh::BoxCode code;
    for (int c = 0; c < fh::kCodeSize; ++c) code[c] = reg[r * fh::kCodeSize + c];
    dets.push_back({fh::decode_box(code, p.ix, p.iy, config_.grid, label), conf});
  }
  return dets;
}

}  // namespace dal::pipe
