#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dal/common/bytes.hpp"
#include "dal/pipeline/ablation.hpp"
#include "dal/pipeline/trainer.hpp"

namespace {

using namespace dal;
using namespace dal::pipe;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dal_trainer_" + name);
  fs::remove_all(p);
  return p;
}

TrainConfig small_config() {
  auto c = config_from_json(Json{{"model", {{"preset", "tiny"}}}});
  c.optim.batch_size = 2;
  c.optim.epochs = 1;
  c.augment.velocity.enabled = true;
  c.seed = 3;
  return c;
}

const Dataset& small_data() {
  static const Dataset d = Dataset::generate({}, 77, 6);
  return d;
}

std::vector<float> flat_params(DalModel& m) {
  std::vector<float> v;
  for (const auto& [n, t] : m.store().params()) v.insert(v.end(), t.data().begin(), t.data().end());
  for (const auto& [n, t] : m.store().buffers()) v.insert(v.end(), t.data().begin(), t.data().end());
  return v;
}

TEST(Trainer, EpochOrderIsSeededAndCoversTheBalancedList) {
  auto c = small_config();
  const auto& d = small_data();
  const auto a = epoch_order(c, d, 0), b = epoch_order(c, d, 0), e1 = epoch_order(c, d, 1);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, e1);
  auto sa = a, se = e1;
  std::sort(sa.begin(), sa.end());
  std::sort(se.begin(), se.end());
  EXPECT_EQ(sa, se);
  c.augment.cbgs = false;
  auto plain = epoch_order(c, d, 0);
  std::sort(plain.begin(), plain.end());
  EXPECT_EQ(plain, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Trainer, StepsProduceFiniteLossesAndMoveParameters) {
  auto c = small_config();
  c.max_steps = 2;
  DalModel m(c.model, c.seed);
  const auto before = flat_params(m);
  std::vector<Json> logs;
  TrainOptions opt;
  opt.on_log = [&](const Json& j) { logs.push_back(j); };
  const auto s = train_model(m, c, small_data(), opt);
  EXPECT_EQ(s.steps, 2);
  ASSERT_GE(logs.size(), 4u);
  EXPECT_EQ(logs.front().at("event"), "start");
  EXPECT_EQ(logs.front().at("per_module_lr"), false);
  EXPECT_EQ(logs.front().at("pretrained_backbone"), false);
  for (const auto& key : {"total", "heatmap", "cls", "reg", "aux"})
    EXPECT_TRUE(std::isfinite(s.last.at("loss").at(key).get<double>())) << key;
  EXPECT_NE(flat_params(m), before);
}

TEST(Trainer, ResumeRejectsADifferentConfig) {
  auto c = small_config();
  c.max_steps = 2;
  const auto dir = scratch("mismatch");
  {
    DalModel m(c.model, c.seed);
    train_model(m, c, small_data(), {dir, false, false, {}});
  }
  auto other = c;
  other.loss.weights.reg = 0.5;
  DalModel m(other.model, other.seed);
  EXPECT_THROW(train_model(m, other, small_data(), {dir, true, false, {}}), ConfigError);
  EXPECT_THROW(train_model(m, c, small_data(), {scratch("missing"), true, false, {}}), ConfigError);
}

TEST(Trainer, ResumeFromCheckpointMatchesUninterruptedRun) {
  auto c = small_config();
  c.optim.epochs = 2;
  c.checkpoint_every = 3;
  const auto& d = small_data();
  DalModel straight(c.model, c.seed);
  const auto dir_a = scratch("ckpt_a");
  train_model(straight, c, d, {dir_a, false, false, {}});

  // A second run dies after step 4; its last checkpoint is from step 3.
  const auto dir_b = scratch("ckpt_b");
  {
    DalModel m(c.model, c.seed);
    TrainOptions opt{dir_b, false, false, {}};
    struct Stop {};
    opt.on_log = [&](const Json& j) {
      if (j.contains("step") && !j.contains("event") && j.at("step") == 4) throw Stop{};
    };
    try {
      train_model(m, c, d, opt);
    } catch (const Stop&) {
    }
  }
  DalModel resumed(c.model, c.seed);
  const auto s = train_model(resumed, c, d, {dir_b, true, false, {}});
  EXPECT_EQ(s.start_step, 3);
  EXPECT_EQ(flat_params(resumed), flat_params(straight));
  EXPECT_EQ(read_file(dir_a / kCheckpointFile), read_file(dir_b / kCheckpointFile));
}

TEST(Trainer, RefusesNonEmptyOutputWithoutForce) {
  const auto dir = scratch("occupied");
  fs::create_directories(dir);
  std::ofstream(dir / "x") << "x";
  auto c = small_config();
  c.max_steps = 1;
  DalModel m(c.model, c.seed);
  EXPECT_THROW(train_model(m, c, small_data(), {dir, false, false, {}}), ConfigError);
  EXPECT_NO_THROW(train_model(m, c, small_data(), {dir, false, true, {}}));
}

TEST(Evaluate, WritesReportsAndReloadsTheModel) {
  auto c = small_config();
  c.max_steps = 1;
  const auto dir = scratch("eval");
  {
    DalModel m(c.model, c.seed);
    train_model(m, c, small_data(), {dir, false, false, {}});
  }
  TrainConfig loaded;
  auto m = load_model(dir / kCheckpointFile, &loaded);
  EXPECT_EQ(to_json(loaded), to_json(c));
  const auto a = evaluate_model(*m, loaded, small_data(), 4);
  const auto b = evaluate_model(*m, loaded, small_data(), 1);
  EXPECT_EQ(a.detections.size(), small_data().samples.size());
  EXPECT_EQ(a.report.to_json(), b.report.to_json());
  write_eval(a, dir / "eval");
  EXPECT_EQ(fh::read_detections(dir / "eval" / "detections"), a.detections);
  EXPECT_TRUE(fs::exists(dir / "eval" / "metrics.txt"));
}

TEST(Ablation, RowsAndChecks) {
  const auto rows = ablation_rows();
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].name, "A");
  AblationResult r;
  r.rows = {"A", "F", "G", "H"};
  r.medians = {{0.5, 1.0, 0.50}, {0.6, 1.0, 0.55}, {0.7, 1.0, 0.56}, {0.7, 0.8, 0.6}};
  auto checks = ablation_checks(r);
  ASSERT_EQ(checks.size(), 3u);
  EXPECT_TRUE(checks[0].pass);
  EXPECT_TRUE(checks[1].pass);  // 0.8 <= 0.85
  EXPECT_TRUE(checks[2].pass);
  r.medians[3][1] = 0.86;
  EXPECT_FALSE(ablation_checks(r)[1].pass);
  r.medians[2][0] = 0.6;
  EXPECT_FALSE(ablation_checks(r)[0].pass);  // ties do not count as a margin
}

}  // namespace
