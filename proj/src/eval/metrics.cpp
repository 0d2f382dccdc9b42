#include "dal/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace dal::eval {

double center_distance(const synth::Box3D& a, const synth::Box3D& b) {
  return std::hypot(a.center.x - b.center.x, a.center.y - b.center.y);
}

double scale_error(const synth::Box3D& p, const synth::Box3D& g) {
  const double inter = std::min(p.size.x, g.size.x) * std::min(p.size.y, g.size.y) * std::min(p.size.z, g.size.z);
  const double va = p.size.x * p.size.y * p.size.z, vb = g.size.x * g.size.y * g.size.z;
  return 1 - inter / (va + vb - inter);
}

double yaw_error(const synth::Box3D& p, const synth::Box3D& g) { return angle_diff(p.yaw, g.yaw); }

double velocity_error(const synth::Box3D& p, const synth::Box3D& g) { return std::hypot(p.vx - g.vx, p.vy - g.vy); }

ClassMatch match_class(const std::vector<fh::FrameDetections>& preds,
                       const std::vector<std::vector<synth::Box3D>>& gts, int class_id, double threshold) {
  if (preds.size() != gts.size()) throw ShapeError("match: prediction and ground-truth frame counts differ");
  struct Ref {
    double conf;
    std::size_t frame, index;
  };
  std::vector<Ref> order;
  ClassMatch m;
  std::vector<std::vector<char>> taken(gts.size());
  for (std::size_t f = 0; f < preds.size(); ++f) {
    for (std::size_t i = 0; i < preds[f].detections.size(); ++i)
      if (preds[f].detections[i].box.class_id == class_id) order.push_back({preds[f].detections[i].confidence, f, i});
    taken[f].assign(gts[f].size(), 0);
    for (const auto& g : gts[f]) m.num_gt += g.class_id == class_id;
  }
  std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) { return a.conf > b.conf; });
  for (const auto& r : order) {
    const auto& pb = preds[r.frame].detections[r.index].box;
    double best = std::numeric_limits<double>::infinity();
    int best_j = -1;
    for (std::size_t j = 0; j < gts[r.frame].size(); ++j) {
      const auto& g = gts[r.frame][j];
      if (g.class_id != class_id || taken[r.frame][j]) continue;
      const double d = center_distance(pb, g);
      if (d < best) {
        best = d;
        best_j = static_cast<int>(j);
      }
    }
    const bool hit = best_j >= 0 && best < threshold;
    m.confidence.push_back(r.conf);
    m.tp.push_back(hit);
    if (hit) {
      taken[r.frame][best_j] = 1;
      const auto& g = gts[r.frame][best_j];
      m.errors.push_back({best, scale_error(pb, g), yaw_error(pb, g), velocity_error(pb, g)});
    }
  }
  return m;
}

double interp(double x, const std::vector<double>& xp, const std::vector<double>& fp, double right) {
  const auto it = std::upper_bound(xp.begin(), xp.end(), x);
  if (it == xp.begin()) return fp.front();
  const std::size_t j = static_cast<std::size_t>(it - xp.begin()) - 1;
  if (j + 1 == xp.size()) return x == xp[j] ? fp[j] : right;
  const double slope = (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
  return slope * (x - xp[j]) + fp[j];
}

double average_precision(const ClassMatch& m, double min_recall, double min_precision) {
  if (m.num_gt == 0 || m.confidence.empty()) return 0;
  std::vector<double> prec, rec;
  double tp = 0, fp = 0;
  for (char t : m.tp) {
    tp += t;
    fp += !t;
    prec.push_back(tp / (tp + fp));
    rec.push_back(tp / m.num_gt);
  }
  constexpr int kPoints = 101;
  const int first = static_cast<int>(std::lround(100 * min_recall)) + 1;
  double sum = 0;
  for (int i = first; i < kPoints; ++i) {
    const double r = i == kPoints - 1 ? 1.0 : i * 0.01;
    sum += std::max(interp(r, rec, prec, 0.0) - min_precision, 0.0);
  }
  return sum / (kPoints - first) / (1 - min_precision);
}

TpError normalize(const TpError& raw) {
  return {std::min(1.0, raw.translation / 1.0), std::min(1.0, raw.scale), std::min(1.0, raw.orientation / M_PI),
          std::min(1.0, raw.velocity / 1.0)};
}

double nds(double map, const TpError& n) {
  return (5 * map + (1 - std::min(1.0, n.translation)) + (1 - std::min(1.0, n.scale)) +
          (1 - std::min(1.0, n.orientation)) + (1 - std::min(1.0, n.velocity))) /
         9;
}

MetricsReport evaluate(const std::vector<fh::FrameDetections>& preds, const std::vector<std::vector<synth::Box3D>>& gts,
                       const std::vector<std::string>& class_names) {
  MetricsReport r;
  const int C = static_cast<int>(class_names.size());
  r.num_classes = C;
  r.class_names = class_names;
  r.frames = static_cast<int>(gts.size());
  r.velocity_error_hist.assign(11, 0);
  for (int c = 0; c < C; ++c) {
    std::vector<double> aps;
    TpError mean;
    int count = 0;
    for (double thr : kDistanceThresholds) {
      const auto m = match_class(preds, gts, c, thr);
      aps.push_back(average_precision(m));
      if (thr != kTpThreshold) continue;
      for (const auto& e : m.errors) {
        mean.translation += e.translation;
        mean.scale += e.scale;
        mean.orientation += e.orientation;
        mean.velocity += e.velocity;
        r.velocity_error_hist[std::min<std::size_t>(10, static_cast<std::size_t>(e.velocity / 0.5))]++;
      }
      count = static_cast<int>(m.errors.size());
    }
    if (count > 0) {
      mean.translation /= count;
      mean.scale /= count;
      mean.orientation /= count;
      mean.velocity /= count;
    } else {
      mean = {1.0, 1.0, M_PI, 1.0};  // saturates every normalized error
      r.missing_tp = true;
    }
    r.ap.push_back(aps);
    r.class_ap.push_back(std::accumulate(aps.begin(), aps.end(), 0.0) / aps.size());
    r.class_tp.push_back(mean);
    r.class_tp_count.push_back(count);
  }
  if (C > 0) {
    r.mAP = std::accumulate(r.class_ap.begin(), r.class_ap.end(), 0.0) / C;
    for (const auto& e : r.class_tp) {
      r.raw.translation += e.translation / C;
      r.raw.scale += e.scale / C;
      r.raw.orientation += e.orientation / C;
      r.raw.velocity += e.velocity / C;
    }
  }
  r.normalized = normalize(r.raw);
  r.nds = nds(r.mAP, r.normalized);
  return r;
}

Json MetricsReport::to_json() const {
  auto tp_json = [](const TpError& e) {
    return Json{{"ATE", e.translation}, {"ASE", e.scale}, {"AOE", e.orientation}, {"AVE", e.velocity}};
  };
  Json classes = Json::object();
  for (int c = 0; c < num_classes; ++c)
    classes[class_names[c]] = {{"AP", class_ap[c]},
                               {"AP_by_threshold", ap[c]},
                               {"tp_count", class_tp_count[c]},
                               {"tp_errors", tp_json(class_tp[c])}};
  return Json{{"nds_formula", kNdsFormula},
              {"distance_thresholds", kDistanceThresholds},
              {"tp_threshold", kTpThreshold},
              {"frames", frames},
              {"mAP", mAP},
              {"NDS", nds},
              {"mATE", raw.translation},
              {"mASE", raw.scale},
              {"mAOE", raw.orientation},
              {"mAVE", raw.velocity},
              {"normalized", tp_json(normalized)},
              {"missing_tp", missing_tp},
              {"velocity_error_hist", {{"bin_width", 0.5}, {"counts", velocity_error_hist}}},
              {"classes", classes}};
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  char line[256];
  os << "# " << kNdsFormula << "\n";
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s %8s %8s\n", "", "mATE", "mASE", "mAOE", "mAVE", "mAP", "NDS'");
  os << line;
  std::snprintf(line, sizeof line, "%-10s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", "all", raw.translation, raw.scale,
                raw.orientation, raw.velocity, mAP, nds);
  os << line;
  for (int c = 0; c < num_classes; ++c) {
    const auto& e = class_tp[c];
    std::snprintf(line, sizeof line, "%-10s %8.4f %8.4f %8.4f %8.4f %8.4f %8s\n", class_names[c].c_str(),
                  e.translation, e.scale, e.orientation, e.velocity, class_ap[c], "-");
    os << line;
  }
  if (missing_tp) os << "# some class had no true positive at 2 m; its TP errors are reported as saturated\n";
  return os.str();
}

}  // namespace dal::eval
