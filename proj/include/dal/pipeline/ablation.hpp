#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dal/pipeline/trainer.hpp"

namespace dal::pipe {

/// One ablation configuration: toggles applied on top of the base config.
struct AblationRow {
  std::string name;
  std::string description;
  std::vector<std::string> toggles;
};

/// A: LiDAR only. F: camera with narrow resize. G: wide resize. H: G plus
/// velocity augmentation.
std::vector<AblationRow> ablation_rows();

struct AblationRun {
  std::string row;
  std::uint64_t seed = 0;
  double map = 0, mave = 0, nds = 0, seconds = 0;
};

struct AblationCheck {
  std::string name, rule;
  double lhs = 0, rhs = 0;
  bool pass = false;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<std::string> rows;
  std::vector<std::array<double, 3>> medians;  // per row: mAP, mAVE, NDS'
  std::vector<AblationCheck> checks;
  double seconds = 0;

  const std::array<double, 3>& median(const std::string& row) const;
  bool pass() const;
  Json to_json() const;
  std::string to_text() const;
};

/// Median-of-seeds comparisons: G mAP > F mAP, H mAVE <= 0.85 G mAVE,
/// F NDS' >= A NDS'.
std::vector<AblationCheck> ablation_checks(const AblationResult& r);

/// Trains and evaluates every row for every seed. Each run is written under
/// `out_dir/<row>_seed<k>` when `out_dir` is set.
AblationResult run_ablation(const TrainConfig& base, const Dataset& train, const Dataset& val,
                            const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir,
                            const std::function<void(const std::string&)>& progress = {});

}  // namespace dal::pipe
