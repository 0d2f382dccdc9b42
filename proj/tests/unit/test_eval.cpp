#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "dal/common/rng.hpp"
#include "dal/eval/latency.hpp"
#include "dal/eval/metrics.hpp"

using namespace dal;
using namespace dal::eval;
using synth::Box3D;

namespace {

const std::vector<std::string> kNames{"car", "van", "truck"};

Box3D box(double x, double y, int cls, double yaw = 0, double vx = 0, double vy = 0) {
  Box3D b;
  b.center = {x, y, 0.8};
  b.size = {1.9, 4.5, 1.6};
  b.yaw = yaw;
  b.vx = vx;
  b.vy = vy;
  b.class_id = cls;
  return b;
}

fh::Detection det(const Box3D& b, double conf) { return {b, conf}; }

/// Straightforward evaluator: repeated argmax instead of sorting, linear
/// interpolation by scanning.
struct Brute {
  static double np_interp(double x, const std::vector<double>& xp, const std::vector<double>& fp) {
    if (x < xp[0]) return fp[0];
    int j = -1;
    for (std::size_t i = 0; i < xp.size(); ++i)
      if (xp[i] <= x) j = static_cast<int>(i);
    if (j == static_cast<int>(xp.size()) - 1) return x == xp[j] ? fp[j] : 0.0;
    return fp[j] + (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]) * (x - xp[j]);
  }

  static double map(const std::vector<fh::FrameDetections>& preds, const std::vector<std::vector<Box3D>>& gts, int C,
                    std::vector<double>* ate) {
    double total = 0;
    for (int c = 0; c < C; ++c) {
      for (double thr : kDistanceThresholds) {
        std::vector<std::pair<std::size_t, std::size_t>> ids;
        for (std::size_t f = 0; f < preds.size(); ++f)
          for (std::size_t i = 0; i < preds[f].detections.size(); ++i)
            if (preds[f].detections[i].box.class_id == c) ids.emplace_back(f, i);
        int npos = 0;
        for (auto& g : gts)
          for (auto& b : g) npos += b.class_id == c;
        std::vector<char> done(ids.size(), 0);
        std::vector<std::vector<char>> taken;
        for (auto& g : gts) taken.emplace_back(g.size(), 0);
        std::vector<double> prec, rec;
        double tp = 0, fp = 0, ate_sum = 0;
        for (std::size_t step = 0; step < ids.size(); ++step) {
          int pick = -1;
          for (std::size_t k = 0; k < ids.size(); ++k)
            if (!done[k] && (pick < 0 || preds[ids[k].first].detections[ids[k].second].confidence >
                                             preds[ids[pick].first].detections[ids[pick].second].confidence))
              pick = static_cast<int>(k);
          done[pick] = 1;
          const auto [f, i] = ids[pick];
          const auto& p = preds[f].detections[i].box;
          int best = -1;
          double bd = 1e300;
          for (std::size_t j = 0; j < gts[f].size(); ++j) {
            if (gts[f][j].class_id != c || taken[f][j]) continue;
            const double d = std::hypot(p.center.x - gts[f][j].center.x, p.center.y - gts[f][j].center.y);
            if (d < bd) {
              bd = d;
              best = static_cast<int>(j);
            }
          }
          if (best >= 0 && bd < thr) {
            taken[f][best] = 1;
            tp += 1;
            ate_sum += bd;
          } else {
            fp += 1;
          }
          prec.push_back(tp / (tp + fp));
          rec.push_back(npos ? tp / npos : 0);
        }
        if (thr == kTpThreshold && ate) ate->push_back(tp > 0 ? ate_sum / tp : 1.0);
        if (npos == 0 || ids.empty()) continue;
        double s = 0;
        for (int k = 11; k <= 100; ++k) s += std::max(np_interp(k == 100 ? 1.0 : k * 0.01, rec, prec) - 0.1, 0.0);
        total += s / 90 / 0.9;
      }
    }
    return total / (C * kDistanceThresholds.size());
  }
};

std::vector<std::vector<Box3D>> random_gts(Rng& rng, int frames) {
  std::vector<std::vector<Box3D>> g(frames);
  for (auto& f : g) {
    const int n = static_cast<int>(rng.randint(0, 5));
    for (int i = 0; i < n; ++i)
      f.push_back(box(rng.uniform(-20, 20), rng.uniform(-20, 20), static_cast<int>(rng.randint(0, 2)),
                      rng.uniform(-3, 3), rng.uniform(-2, 2), rng.uniform(-2, 2)));
  }
  return g;
}

std::vector<fh::FrameDetections> noisy_preds(Rng& rng, const std::vector<std::vector<Box3D>>& gts, bool ties) {
  std::vector<fh::FrameDetections> p(gts.size());
  for (std::size_t f = 0; f < gts.size(); ++f) {
    p[f].frame_id = f;
    for (const auto& g : gts[f]) {
      if (rng.bernoulli(0.2)) continue;
      Box3D b = g;
      b.center.x += rng.normal(0, 1.2);
      b.center.y += rng.normal(0, 1.2);
      b.vx += rng.normal(0, 0.5);
      if (rng.bernoulli(0.1)) b.class_id = (b.class_id + 1) % 3;
      p[f].detections.push_back(det(b, ties ? rng.randint(1, 3) / 4.0 : rng.uniform()));
    }
    const int extra = static_cast<int>(rng.randint(0, 3));
    for (int i = 0; i < extra; ++i)
      p[f].detections.push_back(det(box(rng.uniform(-20, 20), rng.uniform(-20, 20), static_cast<int>(rng.randint(0, 2))),
                                    ties ? rng.randint(1, 3) / 4.0 : rng.uniform()));
  }
  return p;
}

}  // namespace

TEST(Evaluator, PerfectPredictionsScoreOne) {
  Rng rng(1);
  auto gts = random_gts(rng, 6);
  gts[0].push_back(box(1, 1, 0));
  gts[1].push_back(box(2, 2, 1));
  gts[2].push_back(box(3, 3, 2));
  std::vector<fh::FrameDetections> preds(gts.size());
  for (std::size_t f = 0; f < gts.size(); ++f)
    for (const auto& g : gts[f]) preds[f].detections.push_back(det(g, 0.9));
  auto r = evaluate(preds, gts, kNames);
  EXPECT_DOUBLE_EQ(r.mAP, 1.0);
  EXPECT_DOUBLE_EQ(r.nds, 1.0);
  EXPECT_EQ(r.raw.translation, 0.0);
  EXPECT_NEAR(r.raw.scale, 0.0, 1e-15);
  EXPECT_EQ(r.raw.velocity, 0.0);
  EXPECT_FALSE(r.missing_tp);
}

TEST(Evaluator, EmptyPredictionsScoreZero) {
  std::vector<std::vector<Box3D>> gts{{box(0, 0, 0), box(5, 5, 1), box(-5, 5, 2)}};
  std::vector<fh::FrameDetections> preds(1);
  auto r = evaluate(preds, gts, kNames);
  EXPECT_EQ(r.mAP, 0.0);
  EXPECT_TRUE(r.missing_tp);
  EXPECT_EQ(r.nds, 0.0);
}

TEST(Evaluator, GreedyMatchPrefersHigherConfidence) {
  std::vector<std::vector<Box3D>> gts{{box(0, 0, 0)}};
  std::vector<fh::FrameDetections> preds(1);
  preds[0].detections = {det(box(0.3, 0, 0), 0.4), det(box(0.1, 0, 0), 0.8)};
  auto m = match_class(preds, gts, 0, 0.5);
  EXPECT_EQ(m.confidence, (std::vector<double>{0.8, 0.4}));
  EXPECT_EQ(m.tp, (std::vector<char>{1, 0}));
}

TEST(Evaluator, HandIntegratedAveragePrecision) {
  ClassMatch m;
  m.num_gt = 2;
  m.confidence = {0.9, 0.8, 0.7};
  m.tp = {1, 0, 1};
  EXPECT_NEAR(average_precision(m), 59.75 / 81, 1e-9);
  ClassMatch late;
  late.num_gt = 1;
  late.confidence = {0.9, 0.8};
  late.tp = {0, 1};
  EXPECT_NEAR(average_precision(late), 0.2, 1e-9);
  ClassMatch half;
  half.num_gt = 2;
  half.confidence = {0.5};
  half.tp = {1};
  // precision 1 up to recall 0.5, 0 beyond
  EXPECT_NEAR(average_precision(half), 39 * 0.9 / 81 + 0.9 / 81, 1e-9);
}

TEST(Evaluator, InterpFollowsNumpySemantics) {
  const std::vector<double> xp{0.5, 0.5, 1.0}, fp{1.0, 0.5, 2.0 / 3};
  EXPECT_EQ(interp(0.2, xp, fp, 0), 1.0);
  EXPECT_EQ(interp(0.5, xp, fp, 0), 0.5);
  EXPECT_NEAR(interp(0.75, xp, fp, 0), 0.5 + 0.25 / 0.5 * (1.0 / 6), 1e-15);
  EXPECT_EQ(interp(1.0, xp, fp, 0), 2.0 / 3);
  EXPECT_EQ(interp(1.0, {0.0, 0.5}, {1.0, 1.0}, 0), 0.0);
}

TEST(Evaluator, TranslationAndVelocityErrors) {
  std::vector<std::vector<Box3D>> gts{{box(0, 0, 0)}};
  std::vector<fh::FrameDetections> preds(1);
  preds[0].detections = {det(box(1, 0, 0, 0, 1, 0), 0.9)};
  auto r = evaluate(preds, gts, {"car"});
  EXPECT_DOUBLE_EQ(r.raw.translation, 1.0);
  EXPECT_DOUBLE_EQ(r.raw.velocity, 1.0);
  EXPECT_DOUBLE_EQ(r.raw.orientation, 0.0);
  Box3D big = box(0, 0, 0);
  big.size = {3.8, 4.5, 1.6};
  EXPECT_NEAR(scale_error(big, box(0, 0, 0)), 0.5, 1e-12);
  EXPECT_NEAR(yaw_error(box(0, 0, 0, 3.0), box(0, 0, 0, -3.0)), 2 * M_PI - 6, 1e-12);
}

TEST(Evaluator, NdsComposite) {
  EXPECT_EQ(nds(1.0, {0, 0, 0, 0}), 1.0);
  EXPECT_EQ(nds(0.0, {1, 1, 1, 1}), 0.0);
  EXPECT_NEAR(nds(0.5, {0.2, 0.3, 0.5, 0.1}), 5.4 / 9, 1e-15);
  auto n = normalize({0.5, 0.25, M_PI / 2, 3.0});
  EXPECT_DOUBLE_EQ(n.translation, 0.5);
  EXPECT_DOUBLE_EQ(n.scale, 0.25);
  EXPECT_DOUBLE_EQ(n.orientation, 0.5);
  EXPECT_DOUBLE_EQ(n.velocity, 1.0);
}

TEST(Evaluator, AgreesWithBruteForce) {
  Rng rng(5);
  for (int t = 0; t < 60; ++t) {
    auto gts = random_gts(rng, 4);
    auto preds = noisy_preds(rng, gts, t % 2 == 0);
    std::vector<double> ate;
    const double bm = Brute::map(preds, gts, 3, &ate);
    auto r = evaluate(preds, gts, kNames);
    EXPECT_NEAR(r.mAP, bm, 1e-12);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.class_tp[c].translation, ate[c], 1e-12);
  }
}

TEST(Evaluator, ReorderingAtDistinctConfidencesIsInvariant) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    auto gts = random_gts(rng, 3);
    auto preds = noisy_preds(rng, gts, false);
    auto a = evaluate(preds, gts, kNames);
    for (auto& f : preds) std::reverse(f.detections.begin(), f.detections.end());
    auto b = evaluate(preds, gts, kNames);
    EXPECT_EQ(a.mAP, b.mAP);
    EXPECT_EQ(a.nds, b.nds);
  }
}

TEST(Evaluator, LowerConfidenceDuplicateNeverRaisesMap) {
  Rng rng(7);
  for (int t = 0; t < 40; ++t) {
    auto gts = random_gts(rng, 3);
    auto preds = noisy_preds(rng, gts, false);
    const double before = evaluate(preds, gts, kNames).mAP;
    for (std::size_t f = 0; f < preds.size(); ++f)
      if (!preds[f].detections.empty()) {
        auto d = preds[f].detections[0];
        d.confidence *= 0.5;
        preds[f].detections.push_back(d);
        break;
      }
    EXPECT_LE(evaluate(preds, gts, kNames).mAP, before + 1e-15);
  }
}

TEST(Evaluator, ReportsHaveTableColumns) {
  std::vector<std::vector<Box3D>> gts{{box(0, 0, 0)}};
  std::vector<fh::FrameDetections> preds(1);
  preds[0].detections = {det(box(0.2, 0, 0), 0.9)};
  auto r = evaluate(preds, gts, kNames);
  const auto text = r.to_text();
  for (const char* col : {"mATE", "mASE", "mAOE", "mAVE", "mAP", "NDS'"}) EXPECT_NE(text.find(col), std::string::npos);
  const auto j = r.to_json();
  EXPECT_TRUE(j.contains("nds_formula"));
  EXPECT_EQ(j["classes"].size(), 3u);
}

TEST(Latency, StageSumTracksTotal) {
  auto spin = [](double ms) {
    const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double, std::milli>(ms);
    while (std::chrono::steady_clock::now() < end) {
    }
  };
  auto run = [&](std::size_t) {
    StageClock clk;
    spin(0.5);
    clk.mark(Stage::DataTransfer);
    spin(3);
    clk.mark(Stage::Lidar);
    spin(1);
    clk.mark(Stage::Camera);
    spin(0.5);
    clk.mark(Stage::Other);
    return StageTimes{clk.stages(), clk.total()};
  };
  auto r = latency_profile(run, 2, 2, 15);
  EXPECT_LT(r.sum_gap(), 0.05);
  EXPECT_GT(r.share(Stage::Lidar), r.share(Stage::Camera));
  EXPECT_GE(r.p90[1], r.median[1]);
  EXPECT_EQ(r.to_json()["stages"].size(), 4u);
  EXPECT_THROW(latency_profile(run, 2, 0, 0), ConfigError);
  EXPECT_THROW(latency_profile(run, 0, 0, 3), ConfigError);
}

TEST(Latency, Percentile) {
  EXPECT_EQ(percentile({3, 1, 2}, 50), 2.0);
  EXPECT_NEAR(percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 90), 9.1, 1e-12);
}
