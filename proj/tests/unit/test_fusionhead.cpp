#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <tuple>

#include "dal/common/bytes.hpp"
#include "dal/common/rng.hpp"
#include "dal/fusionhead/head.hpp"
#include "dal/tensorcore/ops.hpp"

using namespace dal;
using namespace dal::fh;

namespace {

/// Independent top-K: max-pool style peak mask, then a full sort on a tuple key.
std::vector<Proposal> brute_top_k(const std::vector<float>& s, int C, int X, int Y, int K) {
  auto at = [&](int c, int i, int j) { return s[(c * X + i) * Y + j]; };
  std::vector<std::tuple<float, int, int, int>> keyed;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < X; ++i)
      for (int j = 0; j < Y; ++j) {
        float m = -1e30f;
        for (int a = std::max(0, i - 1); a <= std::min(X - 1, i + 1); ++a)
          for (int b = std::max(0, j - 1); b <= std::min(Y - 1, j + 1); ++b) m = std::max(m, at(c, a, b));
        const float v = at(c, i, j) == m ? at(c, i, j) : 0.f;
        keyed.emplace_back(-v, c, i, j);
      }
  std::sort(keyed.begin(), keyed.end());
  std::vector<Proposal> out;
  for (int k = 0; k < K; ++k) {
    auto [nv, c, i, j] = keyed[k];
    out.push_back({c, i, j, -nv});
  }
  return out;
}

tc::Tensorf random_tensor(Rng& rng, tc::Shape shape, double scale = 1.0, bool grad = false) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal(0, scale));
  return tc::Tensorf::from_data(std::move(shape), std::move(v), grad);
}

HeadConfig small_head() {
  HeadConfig c;
  c.bev_channels = 8;
  c.fuse_channels = 4;
  c.ffn_hidden = 6;
  c.top_k = 5;
  return c;
}

}  // namespace

TEST(BoxCoder, CellCentreOffsetArithmetic) {
  BevGrid g;
  g.cell = 0.375;
  BoxCode c{0.5, 0.5, 0, 0, 0, 0, 0, 1, 0, 0};
  auto b = decode_box(c, 0, 0, g, 1);
  EXPECT_DOUBLE_EQ(b.center.x, -23.8125);
  EXPECT_DOUBLE_EQ(b.center.y, -23.8125);
  EXPECT_DOUBLE_EQ(b.yaw, 0.0);
  EXPECT_EQ(b.vx, 0.0);
  EXPECT_EQ(b.vy, 0.0);
  EXPECT_DOUBLE_EQ(b.size.x, 1.0);
}

TEST(BoxCoder, DecodeEncodeIdentity) {
  Rng rng(3);
  BevGrid g;
  for (int t = 0; t < 500; ++t) {
    synth::Box3D b;
    b.center = {rng.uniform(-24, 24), rng.uniform(-24, 24), rng.uniform(-1, 3)};
    b.size = {rng.uniform(1, 3), rng.uniform(3, 9), rng.uniform(1, 4)};
    b.yaw = rng.uniform(-M_PI, M_PI);
    b.vx = rng.uniform(-10, 10);
    b.vy = rng.uniform(-10, 10);
    b.class_id = 2;
    const int ix = static_cast<int>(rng.randint(0, 47)), iy = static_cast<int>(rng.randint(0, 47));
    auto d = decode_box(encode_box(b, ix, iy, g), ix, iy, g, 2);
    EXPECT_NEAR(d.center.x, b.center.x, 1e-5);
    EXPECT_NEAR(d.center.y, b.center.y, 1e-5);
    EXPECT_NEAR(d.center.z, b.center.z, 1e-5);
    EXPECT_NEAR(d.size.x, b.size.x, 1e-5);
    EXPECT_NEAR(d.size.y, b.size.y, 1e-5);
    EXPECT_NEAR(d.size.z, b.size.z, 1e-5);
    EXPECT_NEAR(angle_diff(d.yaw, b.yaw), 0.0, 1e-5);
    EXPECT_NEAR(d.vx, b.vx, 1e-9);
    EXPECT_EQ(d.class_id, 2);
  }
}

TEST(BoxCoder, SizesStayPositive) {
  BevGrid g;
  BoxCode c{0, 0, 0, -40, -3, 5, 0.3, -0.2, 1, 2};
  auto b = decode_box(c, 3, 4, g, 0);
  EXPECT_GT(b.size.x, 0);
  EXPECT_GT(b.size.y, 0);
  EXPECT_GT(b.size.z, 0);
  EXPECT_NEAR(b.yaw, std::atan2(0.3, -0.2), 1e-12);
}

TEST(SelectCandidates, SingleSpike) {
  std::vector<float> s(2 * 5 * 6, 0.1f);
  s[(1 * 5 + 3) * 6 + 2] = 0.9f;
  auto p = select_candidates(s, 2, 5, 6, 1);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], (Proposal{1, 3, 2, 0.9f}));
}

TEST(SelectCandidates, EqualSpikesBreakTiesLexicographically) {
  std::vector<float> s(2 * 5 * 5, 0.0f);
  s[(1 * 5 + 0) * 5 + 0] = 0.7f;
  s[(0 * 5 + 4) * 5 + 4] = 0.7f;
  s[(0 * 5 + 4) * 5 + 1] = 0.7f;
  auto p = select_candidates(s, 2, 5, 5, 1);
  EXPECT_EQ(p[0], (Proposal{0, 4, 1, 0.7f}));
}

TEST(SelectCandidates, UniformMapYieldsLexicographicPrefix) {
  const int C = 2, X = 3, Y = 4;
  std::vector<float> s(C * X * Y, 0.25f);
  for (int K = 0; K <= C * X * Y; ++K) {
    auto p = select_candidates(s, C, X, Y, K);
    ASSERT_EQ(static_cast<int>(p.size()), K);
    for (int k = 0; k < K; ++k) EXPECT_EQ(p[k], (Proposal{k / (X * Y), (k / Y) % X, k % Y, 0.25f}));
  }
}

TEST(SelectCandidates, MatchesExhaustiveOracleOnTieHeavyMaps) {
  Rng rng(11);
  for (int t = 0; t < 300; ++t) {
    const int C = static_cast<int>(rng.randint(1, 3)), X = static_cast<int>(rng.randint(1, 6)),
              Y = static_cast<int>(rng.randint(1, 6));
    std::vector<float> s(C * X * Y);
    for (auto& v : s) v = static_cast<float>(rng.randint(0, 4)) / 4.f;
    const int K = static_cast<int>(rng.randint(0, C * X * Y));
    auto got = select_candidates(s, C, X, Y, K);
    EXPECT_EQ(got, brute_top_k(s, C, X, Y, K));
    for (std::size_t k = 1; k < got.size(); ++k) EXPECT_GE(got[k - 1].score, got[k].score);
    std::vector<std::tuple<int, int, int>> ids;
    for (auto& q : got) ids.emplace_back(q.class_id, q.ix, q.iy);
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
  }
}

TEST(SelectCandidates, RejectsOversizedK) {
  std::vector<float> s(8, 0.f);
  EXPECT_THROW(select_candidates(s, 2, 2, 2, 9), ShapeError);
  EXPECT_THROW(select_candidates(s, 2, 2, 3, 1), ShapeError);
}

TEST(GatherCells, PicksColumnsAndRoutesGradient) {
  Rng rng(5);
  auto bev = random_tensor(rng, {2, 3, 4, 5}, 1.0, true);
  std::vector<int> sample{1, 0, 1};
  std::vector<std::int64_t> cell{2 * 5 + 3, 0, 19};
  auto g = gather_cells(bev, sample, cell);
  ASSERT_EQ(g.shape(), (tc::Shape{3, 3}));
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < 3; ++c)
      EXPECT_EQ(g.at(k * 3 + c), bev.at((sample[k] * 3 + c) * 20 + cell[k]));
  tc::backward(tc::sum(g));
  int nonzero = 0;
  for (float v : bev.grad()) nonzero += v != 0.f;
  EXPECT_EQ(nonzero, 9);
  EXPECT_THROW(gather_cells(bev, std::vector<int>{2}, std::vector<std::int64_t>{0}), ShapeError);
}

TEST(FusionHead, ShapesAndDegradedPath) {
  tc::ParamStore<float> store(1);
  FusionHead head(store, "head", small_head());
  Rng rng(2);
  auto lidar = random_tensor(rng, {2, 8, 6, 7});
  auto image = tc::Tensorf::zeros({2, 8, 6, 7});
  auto fused = head.fuse(lidar, image);
  EXPECT_EQ(fused.shape(), (tc::Shape{2, 4, 6, 7}));
  auto hm = tc::sigmoid(head.heatmap_logits(fused));
  EXPECT_EQ(hm.shape(), (tc::Shape{2, 3, 6, 7}));
  for (float v : hm.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.f);
    EXPECT_LE(v, 1.f);
  }
  EXPECT_THROW(head.fuse(lidar, tc::Tensorf::zeros({2, 8, 6, 6})), ShapeError);
}

TEST(FusionHead, ZeroInputsGiveBiasLogits) {
  tc::ParamStore<float> store(1);
  FusionHead head(store, "head", small_head());
  auto z = tc::Tensorf::zeros({4, 8});
  auto logits = head.classify(z, z, z, tc::Tensorf::zeros({4, 1}));
  ASSERT_EQ(logits.shape(), (tc::Shape{4, 3}));
  auto bias = store.param("head.cls.fc1.bias");
  auto w = store.param("head.cls.fc1.weight");
  auto b0 = store.param("head.cls.fc0.bias");
  for (int k = 0; k < 4; ++k)
    for (int c = 0; c < 3; ++c) {
      double expect = bias.at(c);
      for (int h = 0; h < 6; ++h) expect += w.at(c * 6 + h) * std::max(0.f, b0.at(h));
      EXPECT_NEAR(logits.at(k * 3 + c), expect, 1e-6);
    }
}

TEST(FusionHead, HeatmapGradientMatchesFiniteDifferences) {
  tc::ParamStore<float> store(4);
  FusionHead head(store, "head", small_head());
  store.set_training(false);
  Rng rng(8);
  auto lidar = random_tensor(rng, {1, 8, 5, 5});
  auto image = random_tensor(rng, {1, 8, 5, 5});
  auto weights = random_tensor(rng, {1, 3, 5, 5});
  auto loss = [&] { return tc::sum(tc::mul(tc::sigmoid(head.heatmap_logits(head.fuse(lidar, image))), weights)); };
  store.zero_grad();
  tc::backward(loss());
  for (const char* name : {"head.heatmap.weight", "head.fuse.reduce.conv.weight", "head.fuse.block1.a.conv.weight"}) {
    auto p = store.param(name);
    for (std::int64_t i : {std::int64_t{0}, p.numel() / 2, p.numel() - 1}) {
      const float orig = p.data()[i];
      const float eps = 1e-3f;
      p.data_mut()[i] = orig + eps;
      const double up = loss().data()[0];
      p.data_mut()[i] = orig - eps;
      const double down = loss().data()[0];
      p.data_mut()[i] = orig;
      const double numeric = (up - down) / (2 * eps), analytic = p.grad()[i];
      EXPECT_NEAR(analytic, numeric, 2e-2 * std::max(1.0, std::abs(numeric))) << name << "[" << i << "]";
    }
  }
}

TEST(FusionHead, RegressionSeesLidarOnly) {
  tc::ParamStore<float> store(6);
  FusionHead head(store, "head", small_head());
  Rng rng(9);
  auto lidar = random_tensor(rng, {2, 8, 4, 4}, 1.0, true);
  auto image = random_tensor(rng, {2, 8, 4, 4}, 1.0, true);
  auto hm = head.heatmap_logits(head.fuse(lidar, image));
  (void)hm;
  std::vector<int> sample{0, 1};
  std::vector<std::int64_t> cell{3, 9};
  auto reg = head.regress(gather_cells(lidar, sample, cell));
  ASSERT_EQ(reg.shape(), (tc::Shape{2, kCodeSize}));
  store.zero_grad();
  tc::backward(tc::sum(tc::mul(reg, reg)));
  for (float v : image.grad()) EXPECT_EQ(v, 0.f);
  for (const auto& [name, p] : store.params()) {
    const bool reg_param = name.rfind("head.reg.", 0) == 0;
    double norm = 0;
    for (float v : p.grad()) norm += std::abs(v);
    if (reg_param)
      EXPECT_GT(norm, 0) << name;
    else
      EXPECT_EQ(norm, 0) << name;
  }
}

TEST(FusionHead, ClassificationLeavesRegressionUntouchedAndReachesImage) {
  tc::ParamStore<float> store(6);
  FusionHead head(store, "head", small_head());
  Rng rng(10);
  auto img_feat = random_tensor(rng, {3, 8}, 1.0, true);
  auto img_bev = random_tensor(rng, {3, 8}, 1.0, true);
  auto pts = random_tensor(rng, {3, 8});
  auto valid = tc::Tensorf::full({3, 1}, 1.f);
  store.zero_grad();
  tc::backward(tc::sum(head.classify(img_feat, img_bev, pts, valid)));
  for (const auto& [name, p] : store.params())
    if (name.rfind("head.reg.", 0) == 0)
      for (float v : p.grad()) EXPECT_EQ(v, 0.f);
  double n = 0;
  for (float v : img_feat.grad()) n += std::abs(v);
  EXPECT_GT(n, 0);
}

TEST(Detections, BinaryAndJsonRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "dal_det_test";
  std::filesystem::create_directories(dir);
  std::vector<FrameDetections> frames(3);
  Rng rng(1);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    frames[f].frame_id = 100 + f;
    for (std::size_t i = 0; i < f * 2; ++i) {
      Detection d;
      d.box.center = {rng.uniform(), rng.uniform(), rng.uniform()};
      d.box.size = {1, 2, 3};
      d.box.yaw = 0.5;
      d.box.class_id = static_cast<int>(i % 3);
      d.confidence = rng.uniform();
      frames[f].detections.push_back(d);
    }
  }
  write_detections(dir / "det", frames);
  EXPECT_EQ(read_detections(dir / "det"), frames);
  EXPECT_TRUE(std::filesystem::exists(dir / "det.json"));
  auto bytes = read_file(dir / "det.bin");
  bytes[20] ^= 1;
  write_file_atomic(dir / "det.bin", bytes);
  EXPECT_THROW(read_detections(dir / "det"), FormatError);
  std::filesystem::remove_all(dir);
}
