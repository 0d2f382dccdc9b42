#include "dal/pipeline/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

namespace dal::pipe {

std::vector<AblationRow> ablation_rows() {
  return {{"A", "LiDAR only", {"camera=off", "resize=narrow", "velaug=off"}},
          {"F", "camera + aux, narrow resize", {"camera=on", "resize=narrow", "velaug=off"}},
          {"G", "camera + aux, wide resize", {"camera=on", "resize=wide", "velaug=off"}},
          {"H", "G + velocity augmentation", {"camera=on", "resize=wide", "velaug=on"}}};
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

const std::array<double, 3>& AblationResult::median(const std::string& row) const {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i] == row) return medians[i];
  throw ConfigError("ablation: no row '" + row + "'");
}

bool AblationResult::pass() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

std::vector<AblationCheck> ablation_checks(const AblationResult& r) {
  const auto &a = r.median("A"), &f = r.median("F"), &g = r.median("G"), &h = r.median("H");
  return {{"wide_resize_map", "mAP(G) > mAP(F)", g[0], f[0], g[0] > f[0]},
          {"velocity_aug_mave", "mAVE(H) <= 0.85 * mAVE(G)", h[1], 0.85 * g[1], h[1] <= 0.85 * g[1]},
          {"fusion_nds", "NDS'(F) >= NDS'(A)", f[2], a[2], f[2] >= a[2]}};
}

Json AblationResult::to_json() const {
  Json j;
  j["seconds"] = seconds;
  for (const auto& run : runs)
    j["runs"].push_back(
        {{"row", run.row}, {"seed", run.seed}, {"mAP", run.map}, {"mAVE", run.mave}, {"NDS'", run.nds}, {"seconds", run.seconds}});
  for (std::size_t i = 0; i < rows.size(); ++i)
    j["medians"][rows[i]] = {{"mAP", medians[i][0]}, {"mAVE", medians[i][1]}, {"NDS'", medians[i][2]}};
  for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"rule", c.rule}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"pass", c.pass}});
  j["pass"] = pass();
  return j;
}

std::string AblationResult::to_text() const {
  std::ostringstream os;
  char line[160];
  os << "row  mAP      mAVE     NDS'   (median over seeds)\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(line, sizeof line, "%-4s %.4f   %.4f   %.4f\n", rows[i].c_str(), medians[i][0], medians[i][1], medians[i][2]);
    os << line;
  }
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%s %-28s %.4f vs %.4f\n", c.pass ? "PASS" : "FAIL", c.rule.c_str(), c.lhs, c.rhs);
    os << line;
  }
  return os.str();
}

AblationResult run_ablation(const TrainConfig& base, const Dataset& train, const Dataset& val,
                            const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir,
                            const std::function<void(const std::string&)>& progress) {
  if (seeds.empty()) throw ConfigError("ablation: no seeds");
  const auto t0 = std::chrono::steady_clock::now();
  AblationResult result;
  for (const auto& row : ablation_rows()) {
    std::vector<double> maps, maves, ndss;
    for (auto seed : seeds) {
      auto c = base;
      c.seed = seed;
      for (const auto& t : row.toggles) apply_toggle(c, t);
      c.validate();
      const auto ts = std::chrono::steady_clock::now();
      DalModel model(c.model, seed);
      TrainOptions opt;
      if (!out_dir.empty()) {
        opt.out_dir = out_dir / (row.name + "_seed" + std::to_string(seed));
        opt.force = true;
      }
      train_model(model, c, train, opt);
      const auto ev = evaluate_model(model, c, val);
      if (!opt.out_dir.empty()) write_eval(ev, opt.out_dir / "eval");
      AblationRun run{row.name, seed, ev.report.mAP, ev.report.raw.velocity, ev.report.nds,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - ts).count()};
      result.runs.push_back(run);
      maps.push_back(run.map);
      maves.push_back(run.mave);
      ndss.push_back(run.nds);
      if (progress) {
        char line[160];
        std::snprintf(line, sizeof line, "%s seed %llu: mAP %.4f mAVE %.4f NDS' %.4f (%.0f s)", row.name.c_str(),
                      static_cast<unsigned long long>(seed), run.map, run.mave, run.nds, run.seconds);
        progress(line);
      }
    }
    result.rows.push_back(row.name);
    result.medians.push_back({median(maps), median(maves), median(ndss)});
  }
  result.checks = ablation_checks(result);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace dal::pipe
