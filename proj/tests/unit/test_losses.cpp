#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dal/common/rng.hpp"
#include "dal/losses/assign.hpp"
#include "dal/losses/losses.hpp"
#include "dal/tensorcore/gradcheck.hpp"
#include "dal/tensorcore/ops.hpp"

using namespace dal;
using namespace dal::loss;
using tc::Tensord;

namespace {

double sig(double x) { return 1 / (1 + std::exp(-x)); }

/// Direct evaluation of the penalty-reduced focal formula.
double focal_oracle(const std::vector<double>& logits, const std::vector<double>& target) {
  double s = 0;
  int pos = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = std::clamp(sig(logits[i]), 1e-4, 1 - 1e-4);
    if (target[i] == 1) {
      s += -std::log(p) * (1 - p) * (1 - p);
      ++pos;
    } else {
      s += -std::log(1 - p) * p * p * std::pow(1 - target[i], 4);
    }
  }
  return s / std::max(pos, 1);
}

double brute_min(const std::vector<double>& cost, int n, int m, std::vector<int>* best = nullptr) {
  std::vector<int> cols(m);
  std::iota(cols.begin(), cols.end(), 0);
  double result = std::numeric_limits<double>::infinity();
  // every injective map rows -> cols appears as the prefix of some permutation
  do {
    double c = 0;
    for (int i = 0; i < n; ++i) c += cost[i * m + cols[i]];
    if (c < result) {
      result = c;
      if (best) best->assign(cols.begin(), cols.begin() + n);
    }
  } while (std::next_permutation(cols.begin(), cols.end()));
  return result;
}

Tensord rand_tensor(Rng& rng, tc::Shape shape, double lo, double hi) {
  std::vector<double> v(tc::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensord::from_data(std::move(shape), std::move(v), true);
}

synth::Box3D box_at(double x, double y, int cls, double w = 1.9, double l = 4.5) {
  synth::Box3D b;
  b.center = {x, y, 0.8};
  b.size = {w, l, 1.6};
  b.class_id = cls;
  return b;
}

}  // namespace

TEST(HeatmapTargets, RadiusGrowsWithFootprint) {
  double prev = 0;
  for (double s = 0.5; s <= 20; s += 0.25) {
    const double r = gaussian_radius(s, s, 0.1);
    EXPECT_GE(r, prev);
    prev = r;
    EXPECT_GE(gaussian_radius(s + 1, s, 0.1), r);
    EXPECT_GE(gaussian_radius(s, s + 1, 0.1), r);
  }
}

TEST(HeatmapTargets, SinglePeakAtCentreCell) {
  BevGrid g;
  std::vector<synth::Box3D> boxes{box_at(3.3, -7.6, 1)};
  auto hm = heatmap_targets(boxes, g, 3);
  const auto it = std::max_element(hm.begin(), hm.end());
  EXPECT_EQ(*it, 1.f);
  EXPECT_EQ(it - hm.begin(), (1 * 48 + 27) * 48 + 16);
  EXPECT_EQ(std::count(hm.begin(), hm.end(), 1.f), 1);
  for (float v : hm) {
    EXPECT_GE(v, 0.f);
    EXPECT_LE(v, 1.f);
  }
}

TEST(HeatmapTargets, DistantBoxesGiveTwoPeaksAndOverlapsUseMax) {
  BevGrid g;
  std::vector<synth::Box3D> two{box_at(-10.5, 0.5, 0), box_at(10.5, 0.5, 0)};
  auto hm = heatmap_targets(two, g, 3);
  EXPECT_EQ(std::count(hm.begin(), hm.end(), 1.f), 2);
  std::vector<synth::Box3D> close{box_at(0.5, 0.5, 2), box_at(2.5, 0.5, 2)};
  auto both = heatmap_targets(close, g, 3);
  auto a = heatmap_targets(std::span(close).subspan(0, 1), g, 3);
  auto b = heatmap_targets(std::span(close).subspan(1, 1), g, 3);
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_EQ(both[i], std::max(a[i], b[i]));
}

TEST(FocalLoss, HandValueOnTwoByTwo) {
  const std::vector<double> logits{0, 0, 0, 0}, target{1, 0.5, 0, 0};
  auto x = Tensord::from_data({1, 1, 2, 2}, logits);
  const double got = heatmap_focal_loss<double>(x, target).item();
  // 0.25 ln2 (positive) + 0.25 ln2 / 16 (t = 0.5) + 2 * 0.25 ln2 (negatives)
  const double hand = std::log(2.0) * (0.25 + 0.25 / 16 + 0.5);
  EXPECT_NEAR(got, hand, 1e-12);
  EXPECT_NEAR(got, focal_oracle(logits, target), 1e-12);
}

TEST(FocalLoss, PerfectPredictionLimit) {
  const std::vector<double> target{1, 0, 0, 1, 0, 0};
  std::vector<double> logits;
  for (double t : target) logits.push_back(t == 1 ? 30 : -30);
  auto x = Tensord::from_data({6}, logits);
  EXPECT_LT(heatmap_focal_loss<double>(x, target).item(), 1e-7);
}

TEST(FocalLoss, MatchesOracleAndGradChecks) {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    auto x = rand_tensor(rng, {2, 3, 4}, -3, 3);
    std::vector<double> target(24);
    for (auto& v : target) v = rng.bernoulli(0.2) ? 1.0 : rng.uniform(0, 0.99);
    std::vector<double> xv(x.data().begin(), x.data().end());
    EXPECT_NEAR(heatmap_focal_loss<double>(x, target).item(), focal_oracle(xv, target), 1e-12);
    auto rep = tc::grad_check([&](const std::vector<Tensord>& in) { return heatmap_focal_loss<double>(in[0], target); }, {x});
    EXPECT_LE(rep.max_rel_error, 1e-4);
  }
}

TEST(SigmoidFocal, ValuesAndGradients) {
  Rng rng(8);
  auto x = rand_tensor(rng, {5, 3}, -4, 4);
  std::vector<int> labels{0, -1, 2, 1, -1};
  double oracle = 0;
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < 3; ++c) {
      const double p = sig(x.at(i * 3 + c));
      if (labels[i] == c)
        oracle += -0.25 * (1 - p) * (1 - p) * std::log(p);
      else
        oracle += -0.75 * p * p * std::log(1 - p);
    }
  EXPECT_NEAR(sigmoid_focal_loss<double>(x, labels, 3.0).item(), oracle / 3, 1e-12);
  auto rep = tc::grad_check([&](const std::vector<Tensord>& in) { return sigmoid_focal_loss<double>(in[0], labels, 3.0); }, {x});
  EXPECT_LE(rep.max_rel_error, 1e-4);
  auto extreme = Tensord::from_data({1, 2}, {80.0, -80.0});
  EXPECT_TRUE(std::isfinite(sigmoid_focal_loss<double>(extreme, std::vector<int>{1}, 1.0).item()));
}

TEST(AuxLoss, EmptyIsZeroAndPerfectIsNearZero) {
  auto none = Tensord::zeros({0, 3});
  EXPECT_EQ(aux_loss<double>(none, std::vector<int>{}).item(), 0.0);
  auto good = Tensord::from_data({2, 3}, {30, -30, -30, -30, -30, 30});
  EXPECT_LT(aux_loss<double>(good, std::vector<int>{0, 2}).item(), 1e-9);
  Rng rng(2);
  auto x = rand_tensor(rng, {4, 3}, -2, 2);
  std::vector<int> labels{2, 0, 0, 1};
  auto rep = tc::grad_check([&](const std::vector<Tensord>& in) { return aux_loss<double>(in[0], labels); }, {x});
  EXPECT_LE(rep.max_rel_error, 1e-4);
}

TEST(WeightedL1, MeanAbsoluteErrorAndGradient) {
  const std::vector<double> w(kCodeWeights.begin(), kCodeWeights.end());
  std::vector<double> target(10, 0.0);
  auto pred = Tensord::from_data({1, 10}, {0.5, -0.25, 1, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(weighted_l1<double>(pred, target, w).item(), 1.75 / 10);
  auto zero = Tensord::zeros({0, 10});
  EXPECT_EQ(weighted_l1<double>(zero, std::vector<double>{}, w).item(), 0.0);
  Rng rng(4);
  auto x = rand_tensor(rng, {3, 10}, 0.1, 1);
  std::vector<double> t(30);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (i % 2 ? 1.5 : -0.5);
  auto rep = tc::grad_check([&](const std::vector<Tensord>& in) { return weighted_l1<double>(in[0], t, w); }, {x});
  EXPECT_LE(rep.max_rel_error, 1e-4);
}

TEST(TotalLoss, UnitAuxCoefficientIsExact) {
  // dyadic values keep every sum exact
  auto make = [](double v) { return Tensord::from_data({}, {v}, true); };
  const double aux = 0.6875, hm = 1.25, cls = 0.375, reg = 2.5, delta = 0.140625;
  auto base = total_loss<double>(make(aux), make(hm), make(cls), make(reg));
  EXPECT_EQ(base.item(), aux + hm + cls + 0.25 * reg);
  auto shifted = total_loss<double>(make(aux + delta), make(hm), make(cls), make(reg));
  EXPECT_EQ(shifted.item() - base.item(), delta);
  auto doubled = total_loss<double>(make(2 * aux), make(hm), make(cls), make(reg));
  EXPECT_EQ(doubled.item() - base.item(), aux);
  EXPECT_EQ(total_loss<double>(make(0), make(hm), make(cls), make(reg)).item(), hm + cls + 0.25 * reg);
  EXPECT_EQ(total_loss<double>(make(0), make(0), make(0), make(0)).item(), 0.0);
  auto a = make(aux);
  tc::backward(total_loss<double>(a, make(hm), make(cls), make(reg)));
  EXPECT_EQ(a.grad()[0], 1.0);
}

TEST(TotalLoss, NonFiniteComponentIsNamed) {
  auto ok = Tensord::scalar(1.0);
  auto bad = Tensord::scalar(std::numeric_limits<double>::quiet_NaN());
  try {
    total_loss<double>(ok, ok, bad, ok);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("L_cls"), std::string::npos);
  }
  EXPECT_THROW(total_loss<double>(ok, ok, ok, Tensord::scalar(INFINITY)), NumericError);
}

TEST(Hungarian, EqualsBruteForceOnRandomInstances) {
  Rng rng(99);
  for (int t = 0; t < 1000; ++t) {
    const int m = static_cast<int>(rng.randint(1, 6)), n = static_cast<int>(rng.randint(1, m));
    std::vector<double> cost(n * m);
    for (auto& c : cost) c = t % 3 == 0 ? static_cast<double>(rng.randint(0, 3)) : rng.uniform(0, 10);
    auto col = hungarian(cost, n, m);
    double got = 0;
    for (int i = 0; i < n; ++i) got += cost[i * m + col[i]];
    auto sorted = col;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
    EXPECT_NEAR(got, brute_min(cost, n, m), 1e-9);
  }
}

TEST(Hungarian, TiesGoToLowestProposal) {
  EXPECT_EQ(hungarian({2, 2, 2, 2}, 1, 4), std::vector<int>{0});
  EXPECT_EQ(hungarian({5, 1, 1, 1}, 1, 4), std::vector<int>{1});
}

TEST(MatchProposals, SingleAndOversubscribed) {
  BevGrid g;
  std::vector<fh::Proposal> props{{0, 24, 24, 0.5f}};
  std::vector<float> logits{0, 0, 0}, codes(10, 0.f);
  std::vector<synth::Box3D> gts{box_at(0.5, 0.5, 1)};
  auto a = match_proposals(props, logits, codes, 3, gts, g);
  EXPECT_EQ(a.proposal_of_gt, std::vector<int>{0});
  EXPECT_EQ(a.gt_of_proposal, std::vector<int>{0});
  gts.push_back(box_at(5, 5, 0));
  EXPECT_THROW(match_proposals(props, logits, codes, 3, gts, g), ConfigError);
}

TEST(MatchProposals, IdenticalProposalsPickLowestIndex) {
  BevGrid g;
  std::vector<fh::Proposal> props(4, fh::Proposal{0, 10, 10, 0.3f});
  std::vector<float> logits(12, 0.f), codes(40, 0.f);
  std::vector<synth::Box3D> gts{box_at(-13.5, -13.5, 0)};
  auto a = match_proposals(props, logits, codes, 3, gts, g);
  EXPECT_EQ(a.proposal_of_gt[0], 0);
}

TEST(SparseLosses, PerfectRegressionAndEmptyScenes) {
  BevGrid g;
  std::vector<fh::Proposal> props{{0, 24, 24, 0.9f}, {1, 3, 3, 0.2f}, {2, 40, 7, 0.1f}};
  std::vector<synth::Box3D> gts{box_at(0.7, 0.2, 0)};
  std::vector<float> logits(9, 0.f), codes(30, 0.f);
  auto code = fh::encode_box(gts[0], 24, 24, g);
  for (int c = 0; c < 10; ++c) codes[c] = static_cast<float>(code[c]);
  auto a = match_proposals(props, logits, codes, 3, gts, g);
  SparseTargets st;
  append_sparse_targets(st, 0, props, a, gts, g);
  EXPECT_EQ(st.labels, (std::vector<int>{0, -1, -1}));
  ASSERT_EQ(st.matched(), 1);
  const std::vector<double> w(kCodeWeights.begin(), kCodeWeights.end());
  std::vector<double> reg(30);
  for (int i = 0; i < 30; ++i) reg[i] = codes[i];
  auto reg_t = Tensord::from_data({3, 10}, reg, true);
  auto l_reg = weighted_l1<double>(tc::gather(reg_t, 0, st.matched_rows), st.reg_targets, w);
  EXPECT_NEAR(l_reg.item(), 0.0, 1e-7);
  // perturbing unmatched rows leaves L_reg unchanged
  for (int i = 10; i < 30; ++i) reg[i] += 3.0;
  auto reg_t2 = Tensord::from_data({3, 10}, reg, true);
  EXPECT_EQ(weighted_l1<double>(tc::gather(reg_t2, 0, st.matched_rows), st.reg_targets, w).item(), l_reg.item());

  SparseTargets none;
  auto empty = match_proposals(props, logits, codes, 3, std::span<const synth::Box3D>{}, g);
  append_sparse_targets(none, 0, props, empty, {}, g);
  EXPECT_EQ(none.matched(), 0);
  auto lg = Tensord::from_data({3, 3}, std::vector<double>(9, -1.0));
  const double neg = -0.75 * sig(-1) * sig(-1) * std::log(1 - sig(-1));
  EXPECT_NEAR(sigmoid_focal_loss<double>(lg, none.labels, 1.0).item(), 9 * neg, 1e-12);
}

TEST(SparseLosses, SinglePairOffsetsGiveMeanAbsoluteError) {
  BevGrid g;
  std::vector<fh::Proposal> props{{1, 20, 30, 0.9f}};
  std::vector<synth::Box3D> gts{box_at(-3.4, 6.6, 1)};
  auto code = fh::encode_box(gts[0], 20, 30, g);
  std::vector<double> pred(code.begin(), code.end());
  const double offsets[8] = {0.1, -0.2, 0.05, 0.3, -0.1, 0.2, 0.15, -0.05};
  double hand = 0;
  for (int c = 0; c < 8; ++c) {
    pred[c] += offsets[c];
    hand += std::abs(offsets[c]);
  }
  std::vector<float> logits{0, 0, 0}, codes(pred.begin(), pred.end());
  auto a = match_proposals(props, logits, codes, 3, gts, g);
  SparseTargets st;
  append_sparse_targets(st, 0, props, a, gts, g);
  const std::vector<double> w(kCodeWeights.begin(), kCodeWeights.end());
  auto l = weighted_l1<double>(Tensord::from_data({1, 10}, pred), st.reg_targets, w);
  EXPECT_NEAR(l.item(), hand / 10, 1e-12);
}
