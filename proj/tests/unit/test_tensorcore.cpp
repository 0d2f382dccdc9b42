#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dal/common/error.hpp"
#include "dal/common/rng.hpp"
#include "dal/kernels/im2col.hpp"
#include "dal/tensorcore/checkpoint.hpp"
#include "dal/tensorcore/gradcheck.hpp"
#include "dal/tensorcore/nn.hpp"
#include "dal/tensorcore/ops.hpp"
#include "dal/tensorcore/optim.hpp"

using namespace dal;
using namespace dal::tc;

namespace {

Tensord random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1, bool grad = true) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensord::from_data(std::move(shape), std::move(v), grad);
}

/// Values bounded away from zero so relu/clamp kinks are not straddled by the
/// finite-difference stencil.
Tensord away_from_zero(Rng& rng, Shape shape) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(0.1, 1.0) * (rng.bernoulli(0.5) ? 1 : -1);
  return Tensord::from_data(std::move(shape), std::move(v), true);
}

constexpr double kTol = 1e-4;

}  // namespace

TEST(TensorCore, ReluExample) {
  auto x = Tensorf::from_data({3}, {-1.f, 0.f, 2.f});
  auto y = relu(x);
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{0, 0, 2}));
}

TEST(TensorCore, SoftmaxOfEqualLogitsIsUniform) {
  auto y = softmax(Tensord::full({2, 5}, 3.0), 1);
  for (double v : y.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(TensorCore, IdentityOneByOneConvLeavesInputUnchanged) {
  Rng rng(1);
  auto x = random_tensor(rng, {2, 3, 4, 5}, -1, 1, false);
  std::vector<double> w(9, 0.0);
  for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  auto y = conv2d(x, Tensord::from_data({3, 3, 1, 1}, w), Tensord(), 1, 0);
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(TensorCore, SumBackwardIsAllOnes) {
  Rng rng(2);
  auto x = random_tensor(rng, {3, 4});
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(TensorCore, GatherBackwardMarksGatheredPositions) {
  auto x = Tensord::from_data({5}, {1, 2, 3, 4, 5}, true);
  const std::vector<std::int64_t> idx{1, 3};
  backward(sum(gather(x, 0, idx)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 1, 0, 1, 0}));
}

TEST(TensorCore, LeafUsedKTimesAccumulatesKContributions) {
  auto x = Tensord::from_data({2}, {0.5, -1.5}, true);
  auto y = x;
  for (int k = 1; k < 4; ++k) y = add(y, x);
  backward(sum(y));
  for (double g : x.grad()) EXPECT_EQ(g, 4.0);
}

TEST(TensorCore, BackwardRejectsNonScalar) {
  auto x = Tensord::from_data({2}, {1, 2}, true);
  EXPECT_THROW(backward(relu(x)), ShapeError);
}

TEST(TensorCore, ShapeErrorsNameOpAndShapes) {
  auto a = Tensorf::zeros({2, 3});
  auto b = Tensorf::zeros({3, 2});
  try {
    add(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos);
    EXPECT_NE(msg.find("(3, 2)"), std::string::npos);
  }
}

TEST(TensorCore, NoGradGuardSkipsRecording) {
  auto x = Tensorf::from_data({2}, {1, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(relu(x).requires_grad());
}

// Finite-difference checks at 64-bit for every registered op.
TEST(GradCheck, Elementwise) {
  Rng rng(10);
  auto a = away_from_zero(rng, {3, 4});
  auto b = away_from_zero(rng, {3, 4});
  auto pos = random_tensor(rng, {3, 4}, 0.2, 2.0);
  EXPECT_LT(grad_check([](auto& in) { return add(in[0], in[1]); }, {a, b}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return sub(in[0], in[1]); }, {a, b}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return mul(in[0], in[1]); }, {a, b}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return scale(in[0], 2.5); }, {a}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return add_scalar(in[0], 2.5); }, {a}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return relu(in[0]); }, {a}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return sigmoid(in[0]); }, {a}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return exp(in[0]); }, {a}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return log(in[0]); }, {pos}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return clamp(in[0], -0.5, 0.5); }, {a}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return mean(in[0]); }, {a}).max_rel_error, kTol);
}

TEST(GradCheck, LayoutOps) {
  Rng rng(11);
  auto x = random_tensor(rng, {2, 3, 4});
  auto y = random_tensor(rng, {2, 2, 4});
  const std::vector<std::int64_t> idx{2, 0, 2};
  EXPECT_LT(grad_check([](auto& in) { return permute(in[0], {2, 0, 1}); }, {x}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return concat<double>({in[0], in[1]}, 1); }, {x, y}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return narrow(in[0], 1, 1, 2); }, {x}).max_rel_error, kTol);
  EXPECT_LT(grad_check([&](auto& in) { return gather(in[0], 1, idx); }, {x}).max_rel_error, kTol);
  EXPECT_LT(grad_check([&](auto& in) { return scatter_add(in[0], 1, idx, 5); }, {x}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return in[0].reshape({6, 4}); }, {x}).max_rel_error, kTol);
}

TEST(GradCheck, Linear) {
  Rng rng(12);
  auto x = random_tensor(rng, {4, 5});
  auto w = random_tensor(rng, {3, 5});
  auto b = random_tensor(rng, {3});
  EXPECT_LT(grad_check([](auto& in) { return linear(in[0], in[1], in[2]); }, {x, w, b}).max_rel_error, kTol);
}

TEST(GradCheck, Conv2d) {
  Rng rng(13);
  auto x = random_tensor(rng, {2, 3, 6, 5});
  auto w = random_tensor(rng, {4, 3, 3, 3});
  auto b = random_tensor(rng, {4});
  for (int stride : {1, 2})
    for (int pad : {0, 1}) {
      auto r = grad_check([=](auto& in) { return conv2d(in[0], in[1], in[2], stride, pad); }, {x, w, b});
      EXPECT_LT(r.max_rel_error, kTol) << "stride " << stride << " pad " << pad;
    }
  auto w1 = random_tensor(rng, {4, 3, 1, 1});
  EXPECT_LT(grad_check([](auto& in) { return conv2d(in[0], in[1], Tensord(), 1, 0); }, {x, w1}).max_rel_error, kTol);
}

TEST(GradCheck, BatchNormBothModes) {
  Rng rng(14);
  auto x = random_tensor(rng, {2, 3, 3, 3});
  auto g = random_tensor(rng, {3}, 0.5, 1.5);
  auto b = random_tensor(rng, {3});
  for (bool training : {true, false}) {
    auto r = grad_check(
        [training](auto& in) {
          auto rm = Tensord::full({3}, 0.1);
          auto rv = Tensord::full({3}, 0.7);
          return batch_norm2d(in[0], in[1], in[2], rm, rv, training);
        },
        {x, g, b});
    EXPECT_LT(r.max_rel_error, kTol) << (training ? "train" : "eval");
  }
}

TEST(GradCheck, PoolingSoftmaxUpsample) {
  Rng rng(15);
  // Distinct values keep the max-pool argmax stable under perturbation.
  std::vector<double> v(2 * 2 * 4 * 4);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>((i * 37) % v.size());
  auto x = Tensord::from_data({2, 2, 4, 4}, v, true);
  EXPECT_LT(grad_check([](auto& in) { return max_pool2d(in[0], 2, 2, 0); }, {x}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return max_pool2d(in[0], 3, 1, 1); }, {x}).max_rel_error, kTol);
  auto s = random_tensor(rng, {2, 3, 4});
  EXPECT_LT(grad_check([](auto& in) { return softmax(in[0], 1); }, {s}).max_rel_error, kTol);
  EXPECT_LT(grad_check([](auto& in) { return softmax(in[0], -1); }, {s}).max_rel_error, kTol);
  auto u = random_tensor(rng, {1, 2, 3, 2});
  EXPECT_LT(grad_check([](auto& in) { return upsample_nearest2d(in[0], 2); }, {u}).max_rel_error, kTol);
}

TEST(GradCheck, BilinearSampleAwayFromGridLines) {
  Rng rng(16);
  auto map = random_tensor(rng, {2, 3, 4, 5});
  std::vector<double> c;
  std::vector<int> images;
  for (int p = 0; p < 6; ++p) {
    // Fractional parts in [0.2, 0.8]; some samples straddle the border.
    c.push_back(rng.randint(-1, 4) + rng.uniform(0.2, 0.8));
    c.push_back(rng.randint(-1, 3) + rng.uniform(0.2, 0.8));
    images.push_back(p % 2);
  }
  auto coords = Tensord::from_data({6, 2}, c, true);
  auto r = grad_check([&](auto& in) { return bilinear_sample(in[0], images, in[1]); }, {map, coords});
  EXPECT_LT(r.max_rel_error, kTol);
}

TEST(TensorCore, BilinearAtCellCentreIsExact) {
  Rng rng(17);
  auto map = random_tensor(rng, {1, 2, 3, 3}, -1, 1, false);
  const std::vector<int> images{0};
  auto y = bilinear_sample(map, images, Tensord::from_data({1, 2}, {2.0, 1.0}));
  EXPECT_EQ(y.at(0), map.at(0 * 9 + 1 * 3 + 2));
  EXPECT_EQ(y.at(1), map.at(1 * 9 + 1 * 3 + 2));
}

TEST(Kernels, Im2colParallelMatchesSerial) {
  Rng rng(18);
  const kernels::ConvGeometry g{5, 9, 7, 3, 2, 1};
  std::vector<float> img(5 * 9 * 7);
  for (auto& v : img) v = static_cast<float>(rng.uniform(-1, 1));
  const std::size_t n = 5 * 9 * g.out_height() * g.out_width();
  std::vector<float> a(n), b(n);
  kernels::im2col(img.data(), g, a.data(), kernels::Exec::Serial);
  kernels::im2col(img.data(), g, b.data(), kernels::Exec::Parallel);
  EXPECT_EQ(a, b);
  std::vector<float> ia(img.size(), 0.f), ib(img.size(), 0.f);
  kernels::col2im(a.data(), g, ia.data(), kernels::Exec::Serial);
  kernels::col2im(a.data(), g, ib.data(), kernels::Exec::Parallel);
  EXPECT_EQ(ia, ib);
}

TEST(Schedule, StartsAtInitialPeaksAtBoundaryThenDecays) {
  OneCycleSchedule s;
  s.total_steps = 1000;
  EXPECT_DOUBLE_EQ(s.lr(0), 2.0e-4);
  const auto up = s.up_steps();
  EXPECT_EQ(up, 400);
  // Brute-force scan of the whole schedule.
  std::int64_t argmax = 0;
  for (std::int64_t i = 0; i < s.total_steps; ++i) {
    EXPECT_GT(s.lr(i), 0.0);
    if (s.lr(i) > s.lr(argmax)) argmax = i;
    if (i > 0 && i < up) EXPECT_GT(s.lr(i), s.lr(i - 1));
    if (i > up) EXPECT_LT(s.lr(i), s.lr(i - 1));
  }
  EXPECT_EQ(argmax, up);
  EXPECT_NEAR(s.lr(up), 2.0e-3, 1e-15);
  EXPECT_NEAR(s.momentum(0), 0.95, 1e-12);
  EXPECT_NEAR(s.momentum(up), 0.85, 1e-12);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore<float> store(3);
  Linear<float> layer(store, "fc", 4, 3);
  std::vector<float> before(layer.weight().data().begin(), layer.weight().data().end());
  OneCycleSchedule s;
  s.total_steps = 10;
  Adam<float> opt(store, s);
  for (int i = 0; i < 10; ++i) {
    for (auto& [n, p] : store.params()) {
      auto t = p;
      t.grad_mut();  // zero-filled gradient
    }
    opt.step();
  }
  EXPECT_EQ(before, std::vector<float>(layer.weight().data().begin(), layer.weight().data().end()));
}

TEST(Adam, NonFiniteGradientAbortsWithParameterName) {
  ParamStore<float> store(3);
  Linear<float> layer(store, "fc", 2, 2);
  OneCycleSchedule s;
  s.total_steps = 4;
  Adam<float> opt(store, s);
  layer.weight().grad_mut()[1] = std::nanf("");
  try {
    opt.step();
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("fc.weight"), std::string::npos);
  }
}

TEST(Adam, DescendsOnQuadratic) {
  ParamStore<double> store(4);
  auto p = store.add_param("p", {2}, {3.0, -2.0});
  OneCycleSchedule s;
  s.initial_lr = 0.05;
  s.total_steps = 400;
  Adam<double> opt(store, s);
  for (int i = 0; i < 400; ++i) {
    store.zero_grad();
    backward(sum(mul(p, p)));
    opt.step();
  }
  EXPECT_LT(std::abs(p.at(0)), 0.05);
  EXPECT_LT(std::abs(p.at(1)), 0.05);
}

TEST(Checkpoint, ExactRoundTripAndResumeState) {
  const auto path = std::filesystem::temp_directory_path() / "dal_ckpt_test.bin";
  ParamStore<float> a(5);
  BasicBlock<float> block_a(a, "blk", 3, 4, 2);
  OneCycleSchedule s;
  s.total_steps = 10;
  Adam<float> opt_a(a, s);
  Rng rng(6);
  for (auto& [n, p] : a.params()) {
    auto t = p;
    for (auto& g : t.grad_mut()) g = static_cast<float>(rng.normal());
  }
  opt_a.step();
  save_checkpoint(path, a, &opt_a, {opt_a.step_count(), opt_a.beta1_power(), opt_a.beta2_power(), "{\"k\":1}"});

  ParamStore<float> b(99);
  BasicBlock<float> block_b(b, "blk", 3, 4, 2);
  Adam<float> opt_b(b, s);
  const auto meta = load_checkpoint(path, b, &opt_b);
  EXPECT_EQ(meta.step, 1);
  EXPECT_EQ(opt_b.step_count(), 1);
  EXPECT_EQ(meta.config_json, "{\"k\":1}");
  for (std::size_t k = 0; k < a.params().size(); ++k) {
    const auto x = a.params()[k].second.data();
    const auto y = b.params()[k].second.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    EXPECT_EQ(opt_a.first_moments()[k], opt_b.first_moments()[k]);
  }
  ParamStore<float> c(1);
  Linear<float> other(c, "fc", 2, 2);
  EXPECT_THROW(load_checkpoint(path, c, nullptr), FormatError);
  std::filesystem::remove(path);
}
