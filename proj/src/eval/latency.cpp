#include "dal/eval/latency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "dal/common/error.hpp"

namespace dal::eval {

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const double pos = q / 100 * (v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - lo);
}

double LatencyReport::sum_gap() const {
  return total_median > 0 ? std::abs(stage_sum - total_median) / total_median : 0;
}

LatencyReport latency_profile(const std::function<StageTimes(std::size_t)>& run, std::size_t frames, int warmup,
                              int iters) {
  if (iters <= 0) throw ConfigError("latency_profile: need at least one iteration");
  if (frames == 0) throw ConfigError("latency_profile: no frames to run");
  for (int i = 0; i < warmup; ++i) run(static_cast<std::size_t>(i) % frames);
  std::array<std::vector<double>, 4> stage;
  std::vector<double> total;
  for (int i = 0; i < iters; ++i) {
    const auto t = run(static_cast<std::size_t>(i) % frames);
    for (int s = 0; s < 4; ++s) stage[s].push_back(t.ms[s]);
    total.push_back(t.total_ms);
  }
  LatencyReport r;
  r.iters = iters;
  r.warmup = warmup;
  for (int s = 0; s < 4; ++s) {
    r.median[s] = percentile(stage[s], 50);
    r.p90[s] = percentile(stage[s], 90);
    r.stage_sum += r.median[s];
  }
  r.total_median = percentile(total, 50);
  r.total_p90 = percentile(total, 90);
  return r;
}

Json LatencyReport::to_json() const {
  Json stages = Json::array();
  for (int s = 0; s < 4; ++s)
    stages.push_back({{"stage", kStageNames[s]}, {"median_ms", median[s]}, {"p90_ms", p90[s]},
                      {"share", share(static_cast<Stage>(s))}});
  return Json{{"stages", stages},    {"total_median_ms", total_median}, {"total_p90_ms", total_p90},
              {"stage_sum_ms", stage_sum}, {"sum_gap", sum_gap()},       {"iters", iters},
              {"warmup", warmup}};
}

std::string LatencyReport::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %10s %10s %7s\n", "stage", "median ms", "p90 ms", "share");
  os << line;
  for (int s = 0; s < 4; ++s) {
    std::snprintf(line, sizeof line, "%-14s %10.3f %10.3f %6.1f%%\n", kStageNames[s], median[s], p90[s],
                  100 * share(static_cast<Stage>(s)));
    os << line;
  }
  std::snprintf(line, sizeof line, "%-14s %10.3f %10.3f\n", "total", total_median, total_p90);
  os << line;
  std::snprintf(line, sizeof line, "stage sum %.3f ms, gap to total %.2f%%\n", stage_sum, 100 * sum_gap());
  os << line;
  return os.str();
}

}  // namespace dal::eval
