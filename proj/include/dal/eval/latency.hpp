#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <string>

#include "dal/common/json_util.hpp"

namespace dal::eval {

enum class Stage { DataTransfer = 0, Lidar = 1, Camera = 2, Other = 3 };
inline constexpr std::array<const char*, 4> kStageNames{"data transfer", "lidar branch", "camera branch", "other"};

/// Wall time of one forward pass split into stages. `mark(s)` charges the
/// time since the previous mark (or start) to stage s.
class StageClock {
 public:
  using clock = std::chrono::steady_clock;
  StageClock() : start_(clock::now()), last_(start_) {}
  void mark(Stage s) {
    const auto now = clock::now();
    ms_[static_cast<int>(s)] += std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
  }
  const std::array<double, 4>& stages() const { return ms_; }
  double total() const { return std::chrono::duration<double, std::milli>(clock::now() - start_).count(); }

 private:
  clock::time_point start_, last_;
  std::array<double, 4> ms_{};
};

struct StageTimes {
  std::array<double, 4> ms{};
  double total_ms = 0;
};

struct LatencyReport {
  std::array<double, 4> median{}, p90{};
  double total_median = 0, total_p90 = 0;
  double stage_sum = 0;  // sum of stage medians
  int iters = 0, warmup = 0;
  /// |stage_sum - total_median| / total_median
  double sum_gap() const;
  double share(Stage s) const { return stage_sum > 0 ? median[static_cast<int>(s)] / stage_sum : 0; }
  Json to_json() const;
  std::string to_text() const;
};

/// Runs `run(frame)` for `warmup` unrecorded and `iters` recorded passes over
/// frames 0..frames-1 cyclically. Throws ConfigError on zero iterations or
/// frames.
LatencyReport latency_profile(const std::function<StageTimes(std::size_t)>& run, std::size_t frames, int warmup,
                              int iters);

/// Linear-interpolated percentile (q in [0, 100]).
double percentile(std::vector<double> v, double q);

}  // namespace dal::eval
