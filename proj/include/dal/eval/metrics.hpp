#pragma once

#include <array>
#include <string>
#include <vector>

#include "dal/common/json_util.hpp"
#include "dal/fusionhead/head.hpp"

namespace dal::eval {

inline const std::vector<double> kDistanceThresholds{0.5, 1.0, 2.0, 4.0};
inline constexpr double kTpThreshold = 2.0;

struct TpError {
  double translation = 0, scale = 0, orientation = 0, velocity = 0;
};

/// Greedy matching of one class at one threshold.
struct ClassMatch {
  std::vector<double> confidence;  // descending
  std::vector<char> tp;            // parallel to confidence
  std::vector<TpError> errors;     // one per TP, in order
  int num_gt = 0;
};

/// Predictions of `class_id` across all frames, ordered by descending
/// confidence (ties keep frame order, then list order), each matched to the
/// nearest untaken same-class GT of its frame with centre distance < thr.
ClassMatch match_class(const std::vector<fh::FrameDetections>& preds,
                       const std::vector<std::vector<synth::Box3D>>& gts, int class_id, double threshold);

double center_distance(const synth::Box3D& a, const synth::Box3D& b);
/// 1 - IoU of the two boxes after aligning centres and headings.
double scale_error(const synth::Box3D& pred, const synth::Box3D& gt);
double yaw_error(const synth::Box3D& pred, const synth::Box3D& gt);
double velocity_error(const synth::Box3D& pred, const synth::Box3D& gt);

/// Linear interpolation with numpy.interp semantics: left of the first
/// sample gives fp[0], right of the last gives `right`; repeated xp values
/// resolve to the last of them.
double interp(double x, const std::vector<double>& xp, const std::vector<double>& fp, double right);

/// Precision sampled at recall 0, 0.01, ..., 1, then the mean of
/// max(precision - 0.1, 0) over recall > 0.1, divided by 0.9.
double average_precision(const ClassMatch& m, double min_recall = 0.1, double min_precision = 0.1);

struct MetricsReport {
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<std::vector<double>> ap;  // [class][threshold]
  std::vector<double> class_ap;         // mean over thresholds
  std::vector<TpError> class_tp;        // mean TP errors per class at 2 m
  std::vector<int> class_tp_count;
  double mAP = 0;
  TpError raw;         // mATE, mASE, mAOE, mAVE
  TpError normalized;  // min(1, raw / normalizer)
  bool missing_tp = false;  // some class had no TP; its errors count as 1
  double nds = 0;
  std::vector<std::int64_t> velocity_error_hist;  // TP velocity errors, 0.5 m/s bins, last bin open
  int frames = 0;

  Json to_json() const;
  /// Aligned table with columns mATE mASE mAOE mAVE mAP NDS' and a header
  /// documenting the composite.
  std::string to_text() const;
};

inline constexpr const char* kNdsFormula =
    "NDS' = (5 mAP + sum over {ATE/1m, ASE, AOE/pi, AVE/1m/s} of (1 - min(1, err))) / 9; no attribute term";

/// NDS' from mAP and normalized TP errors.
double nds(double map, const TpError& normalized);
TpError normalize(const TpError& raw);

MetricsReport evaluate(const std::vector<fh::FrameDetections>& preds, const std::vector<std::vector<synth::Box3D>>& gts,
                       const std::vector<std::string>& class_names);

}  // namespace dal::eval
