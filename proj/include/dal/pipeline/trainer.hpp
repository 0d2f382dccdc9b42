#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dal/eval/metrics.hpp"
#include "dal/pipeline/model.hpp"

namespace dal::pipe {

/// Samples held in memory together with the world they were drawn from.
struct Dataset {
  synth::WorldConfig world;
  synth::CameraRig rig;
  std::vector<synth::Sample> samples;

  static Dataset load(const std::filesystem::path& dir);
  /// Generates `count` samples without touching the disk.
  static Dataset generate(const synth::WorldConfig& world, std::uint64_t base_seed, int count);
  std::vector<std::string> class_names() const;
  std::vector<std::vector<int>> class_counts() const;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  bool resume = false;
  bool force = false;
  std::function<void(const Json&)> on_log;  // receives every log record
};

struct TrainSummary {
  std::int64_t steps = 0, total_steps = 0, start_step = 0;
  double seconds = 0;
  Json last;  // final step record
};

inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kTrainLogFile = "train_log.jsonl";

/// Epoch sample order for `epoch`: the (optionally class-balanced) base list
/// shuffled by a stream derived from (seed, epoch).
std::vector<std::size_t> epoch_order(const TrainConfig& config, const Dataset& data, int epoch);
std::int64_t steps_per_epoch(const TrainConfig& config, const Dataset& data);

/// Trains `model` in place. Every random draw of step s depends only on
/// (seed, s), so a resumed run continues exactly where the checkpoint left off.
TrainSummary train_model(DalModel& model, const TrainConfig& config, const Dataset& data, const TrainOptions& options);

struct EvalOutput {
  eval::MetricsReport report;
  std::vector<fh::FrameDetections> detections;
};

/// Inference over every sample (eval-mode batch norm, fixed eval resize).
EvalOutput evaluate_model(DalModel& model, const TrainConfig& config, const Dataset& data, int batch_size = 4);
/// detections.{bin,json}, metrics.json and metrics.txt under `dir`.
void write_eval(const EvalOutput& out, const std::filesystem::path& dir);

/// Rebuilds the model recorded in a checkpoint; `config` receives its config.
std::unique_ptr<DalModel> load_model(const std::filesystem::path& checkpoint, TrainConfig* config);

/// Per-frame stage timing of single-sample inference, preprocessing included
/// in the data-transfer stage.
eval::LatencyReport profile_latency(DalModel& model, const TrainConfig& config, const Dataset& data, int warmup,
                                    int iters);

/// Refuses to reuse a non-empty directory unless `force`; creates it.
void prepare_out_dir(const std::filesystem::path& dir, bool force);

}  // namespace dal::pipe
