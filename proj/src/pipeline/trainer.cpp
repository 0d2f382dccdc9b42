#include "dal/pipeline/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dal/common/bytes.hpp"
#include "dal/tensorcore/checkpoint.hpp"

namespace dal::pipe {

namespace fs = std::filesystem;

Dataset Dataset::load(const fs::path& dir) {
  Dataset d;
  synth::DatasetManifest manifest;
  d.samples = synth::read_dataset(dir, &manifest);
  d.world = manifest.world;
  d.rig = synth::CameraRig::surround(d.world.rig);
  return d;
}

Dataset Dataset::generate(const synth::WorldConfig& world, std::uint64_t base_seed, int count) {
  Dataset d;
  d.world = world;
  d.rig = synth::CameraRig::surround(world.rig);
  d.samples.resize(count);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) d.samples[i] = synth::make_sample(world, synth::sample_seed(base_seed, i));
  return d;
}

std::vector<std::string> Dataset::class_names() const {
  std::vector<std::string> names;
  for (const auto& c : world.scene.classes) names.push_back(c.name);
  return names;
}

std::vector<std::vector<int>> Dataset::class_counts() const {
  std::vector<std::vector<int>> counts;
  for (const auto& s : samples) {
    std::vector<int> c(world.scene.num_classes(), 0);
    for (const auto& a : s.annotations) ++c[a.box.class_id];
    counts.push_back(std::move(c));
  }
  return counts;
}

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  Rng r(seed);
  return r.fork(a).fork(b).next();
}

// Streams of the derive() tree.
constexpr std::uint64_t kEpochStream = 1, kStepStream = 2, kCbgsStream = 3;

std::vector<const Frame*> pointers(const std::vector<Frame>& frames) {
  std::vector<const Frame*> p;
  for (const auto& f : frames) p.push_back(&f);
  return p;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

std::vector<std::size_t> epoch_order(const TrainConfig& config, const Dataset& data, int epoch) {
  std::vector<std::size_t> order;
  if (config.augment.cbgs) {
    order = aug::cbgs_resample(data.class_counts(), data.world.scene.num_classes(),
                               derive(config.seed, kCbgsStream, 0))
                .indices;
  } else {
    order.resize(data.samples.size());
    std::iota(order.begin(), order.end(), 0);
  }
  Rng rng(derive(config.seed, kEpochStream, epoch));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.randint(0, i - 1)]);
  return order;
}

std::int64_t steps_per_epoch(const TrainConfig& config, const Dataset& data) {
  const auto n = static_cast<std::int64_t>(epoch_order(config, data, 0).size());
  return (n + config.optim.batch_size - 1) / config.optim.batch_size;
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ConfigError(dir.string() + " is not empty (pass --force to overwrite)");
  fs::create_directories(dir);
}

TrainSummary train_model(DalModel& model, const TrainConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  if (data.samples.empty()) throw ConfigError("train: empty dataset");
  if (data.world.scene.num_classes() != config.model.head.num_classes)
    throw ConfigError("train: dataset has " + std::to_string(data.world.scene.num_classes()) + " classes, model " +
                      std::to_string(config.model.head.num_classes));
  const auto& oc = config.optim;
  const std::int64_t spe = steps_per_epoch(config, data);
  tc::OneCycleSchedule schedule{oc.initial_lr, oc.peak_factor, oc.final_factor, oc.up_fraction,
                                oc.momentum_lo, oc.momentum_hi, spe * oc.epochs};
  tc::Adam<float> adam(model.store(), schedule, {0.999, 1e-8, oc.weight_decay, oc.grad_clip});
  const std::string config_text = to_json(config).dump();
  const bool writing = !options.out_dir.empty();
  const fs::path ckpt = options.out_dir / kCheckpointFile;

  TrainSummary summary;
  summary.total_steps = schedule.total_steps;
  if (options.resume) {
    if (!writing || !fs::exists(ckpt)) throw ConfigError("resume: no checkpoint in " + options.out_dir.string());
    const auto meta = tc::load_checkpoint(ckpt, model.store(), &adam);
    if (meta.config_json != config_text) throw ConfigError("resume: checkpoint was written with a different config");
    summary.start_step = meta.step;
  } else if (writing) {
    prepare_out_dir(options.out_dir, options.force);
  }

  std::ofstream log;
  if (writing) log.open(options.out_dir / kTrainLogFile, options.resume ? std::ios::app : std::ios::trunc);
  auto emit = [&](const Json& j) {
    if (log) log << j.dump() << '\n' << std::flush;
    if (options.on_log) options.on_log(j);
  };
  auto save = [&](std::int64_t step) {
    if (writing) tc::save_checkpoint(ckpt, model.store(), &adam, {step, adam.beta1_power(), adam.beta2_power(), config_text});
  };

  std::int64_t end = schedule.total_steps;
  if (config.max_steps > 0) end = std::min<std::int64_t>(end, config.max_steps);
  emit({{"event", summary.start_step > 0 ? "resume" : "start"},
        {"step", summary.start_step},
        {"total_steps", schedule.total_steps},
        {"run_steps", end},
        {"steps_per_epoch", spe},
        {"parameters", model.store().parameter_count()},
        {"per_module_lr", false},
        {"pretrained_backbone", false},
        {"config", to_json(config)}});

  model.store().set_training(true);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order;
  int order_epoch = -1;
  for (std::int64_t step = summary.start_step; step < end; ++step) {
    const auto ts = std::chrono::steady_clock::now();
    const int epoch = static_cast<int>(step / spe);
    if (epoch != order_epoch) {
      order = epoch_order(config, data, epoch);
      order_epoch = epoch;
    }
    const std::size_t first = static_cast<std::size_t>(step % spe) * oc.batch_size;
    const std::size_t last = std::min(order.size(), first + oc.batch_size);
    std::vector<Frame> frames;
    int vel_aug = 0;
    for (std::size_t i = first; i < last; ++i) {
      frames.push_back(prepare_frame(data.samples[order[i]], data.rig, config, true,
                                     derive(config.seed, kStepStream, static_cast<std::uint64_t>(step) * 4096 + (i - first))));
      vel_aug += frames.back().velocity_augmented;
    }
    const auto batch = pointers(frames);
    const auto out = model.forward(batch);
    const auto l = model.losses(out, batch, config.loss);
    model.store().zero_grad();
    tc::backward(l.total);
    const double lr = adam.current_lr();
    adam.step();
    summary.last = {{"step", step + 1},
                    {"epoch", epoch},
                    {"lr", lr},
                    {"loss",
                     {{"total", l.total.item()},
                      {"heatmap", l.heatmap.item()},
                      {"cls", l.cls.item()},
                      {"reg", l.reg.item()},
                      {"aux", l.aux.item()}}},
                    {"matched", l.matched},
                    {"aux_visible", l.aux_visible},
                    {"aux_invisible", l.aux_invisible},
                    {"velocity_augmented", vel_aug},
                    {"seconds", seconds_since(ts)}};
    if (config.log_every > 0 && ((step + 1) % config.log_every == 0 || step + 1 == end)) emit(summary.last);
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 && step + 1 != end) save(step + 1);
  }
  summary.steps = end;
  save(end);
  summary.seconds = seconds_since(t0);
  emit({{"event", "done"}, {"step", end}, {"seconds", summary.seconds}});
  return summary;
}

EvalOutput evaluate_model(DalModel& model, const TrainConfig& config, const Dataset& data, int batch_size) {
  if (batch_size < 1) throw ConfigError("evaluate: batch size must be positive");
  tc::NoGradGuard no_grad;
  const bool was_training = model.store().training();
  model.store().set_training(false);
  EvalOutput out;
  std::vector<std::vector<synth::Box3D>> gts;
  for (std::size_t first = 0; first < data.samples.size(); first += batch_size) {
    const std::size_t last = std::min(data.samples.size(), first + batch_size);
    std::vector<Frame> frames;
    for (std::size_t i = first; i < last; ++i)
      frames.push_back(prepare_frame(data.samples[i], data.rig, config, false, data.samples[i].seed));
    const auto fwd = model.forward(pointers(frames));
    for (std::size_t b = 0; b < frames.size(); ++b) {
      out.detections.push_back({frames[b].id, model.decode(fwd, static_cast<int>(b))});
      gts.push_back(frames[b].gt_boxes);
    }
  }
  model.store().set_training(was_training);
  out.report = eval::evaluate(out.detections, gts, data.class_names());
  return out;
}

void write_eval(const EvalOutput& out, const fs::path& dir) {
  fs::create_directories(dir);
  fh::write_detections(dir / "detections", out.detections);
  write_text_atomic(dir / "metrics.json", out.report.to_json().dump(2) + "\n");
  write_text_atomic(dir / "metrics.txt", out.report.to_text());
}

std::unique_ptr<DalModel> load_model(const fs::path& checkpoint, TrainConfig* config) {
  const auto meta = tc::read_checkpoint_meta(checkpoint);
  Json j;
  try {
    j = Json::parse(meta.config_json);
  } catch (const Json::exception& e) {
    throw FormatError(checkpoint.string() + ": unreadable config: " + e.what());
  }
  auto c = config_from_json(j);
  auto model = std::make_unique<DalModel>(c.model, c.seed);
  tc::load_checkpoint(checkpoint, model->store(), nullptr);
  if (config) *config = c;
  return model;
}

eval::LatencyReport profile_latency(DalModel& model, const TrainConfig& config, const Dataset& data, int warmup,
                                    int iters) {
  tc::NoGradGuard no_grad;
  const bool was_training = model.store().training();
  model.store().set_training(false);
  auto run = [&](std::size_t i) {
    eval::StageClock clock;
    const auto frame = prepare_frame(data.samples[i], data.rig, config, false, data.samples[i].seed);
    const std::vector<const Frame*> batch{&frame};
    const auto out = model.forward(batch, &clock);
    const auto dets = model.decode(out, 0);
    clock.mark(eval::Stage::Other);
    return eval::StageTimes{clock.stages(), clock.total()};
  };
  auto report = eval::latency_profile(run, data.samples.size(), warmup, iters);
  model.store().set_training(was_training);
  return report;
}

}  // namespace dal::pipe
