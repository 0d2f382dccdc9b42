// dal: data generation, training, evaluation, ablation and latency profiling.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "dal/common/bytes.hpp"
#include "dal/kernels/exec.hpp"
#include "dal/pipeline/ablation.hpp"
#include "dal/pipeline/trainer.hpp"

namespace fs = std::filesystem;
using namespace dal;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config;
  std::string preset;
  std::int64_t seed = -1;
  int threads = 0;
  std::vector<std::string> toggles;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON training config")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "model preset when no config is given (tiny, base, large, recommended, ablation)");
  app->add_option("--seed", c.seed, "overrides the config seed");
  app->add_option("--set", c.toggles, "toggle such as camera=off, resize=wide, velaug=on");
}

pipe::TrainConfig build_config(const Common& c) {
  pipe::TrainConfig cfg;
  if (!c.config.empty()) {
    cfg = pipe::load_config(c.config);
    if (!c.preset.empty()) throw ConfigError("--preset and --config are exclusive");
  } else {
    cfg = pipe::config_from_json(Json{{"model", {{"preset", c.preset.empty() ? "base" : c.preset}}}});
  }
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  for (const auto& t : c.toggles) pipe::apply_toggle(cfg, t);
  cfg.validate();
  return cfg;
}

synth::WorldConfig load_world(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return synth::world_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void print_line(const Json& j) {
  if (j.contains("event")) {
    std::cout << j.at("event").get<std::string>() << " at step " << j.at("step") << "\n";
    return;
  }
  const auto& l = j.at("loss");
  std::printf("step %6lld  lr %.2e  loss %.4f  hm %.4f  cls %.4f  reg %.4f  aux %.4f  (%.2f s)\n",
              static_cast<long long>(j.at("step").get<std::int64_t>()), j.at("lr").get<double>(),
              l.at("total").get<double>(), l.at("heatmap").get<double>(), l.at("cls").get<double>(),
              l.at("reg").get<double>(), l.at("aux").get<double>(), j.at("seconds").get<double>());
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale camera-LiDAR detector: data, training, evaluation and profiling"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 keeps the runtime default)")->check(CLI::NonNegativeNumber);
  bool serial = false;
  app.add_flag("--serial", serial, "use the serial reference kernels");

  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  std::string gen_out, gen_world;
  int gen_scenes = 64;
  std::uint64_t gen_seed = 0;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--scenes", gen_scenes, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_option("--world", gen_world, "JSON world config")->check(CLI::ExistingFile);
  gen->add_flag("--force", gen_force, "overwrite a non-empty directory");

  auto* train = app.add_subcommand("train", "train a model");
  Common tc_opts;
  add_common(train, tc_opts);
  std::string train_data, train_out;
  bool train_force = false, train_resume = false, quiet = false;
  int max_steps = -1, epochs = -1;
  train->add_option("--data", train_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--max-steps", max_steps, "cap on optimizer steps");
  train->add_option("--epochs", epochs, "overrides the config epochs");
  train->add_flag("--force", train_force, "overwrite a non-empty run directory");
  train->add_flag("--resume", train_resume, "continue from the run directory checkpoint");
  train->add_flag("--quiet", quiet, "no per-step output");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_out;
  int ev_batch = 4;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", ev_out, "report directory")->required();
  ev->add_option("--batch", ev_batch, "inference batch size")->check(CLI::PositiveNumber);

  auto* ab = app.add_subcommand("ablate", "A/F/G/H ablation over several seeds");
  Common ab_opts;
  add_common(ab, ab_opts);
  std::string ab_train, ab_val, ab_out;
  int ab_seeds = 3;
  bool ab_force = false;
  ab->add_option("--train-data", ab_train, "training dataset directory")->required()->check(CLI::ExistingDirectory);
  ab->add_option("--val-data", ab_val, "validation dataset directory")->required()->check(CLI::ExistingDirectory);
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--seeds", ab_seeds, "seeds per row")->check(CLI::PositiveNumber);
  ab->add_flag("--force", ab_force, "overwrite a non-empty directory");

  auto* bench = app.add_subcommand("bench", "per-stage inference latency");
  Common bench_opts;
  add_common(bench, bench_opts);
  std::string bench_ckpt, bench_data, bench_out;
  int bench_iters = 50, bench_warmup = 5, bench_scenes = 8;
  bench->add_option("--checkpoint", bench_ckpt, "trained weights (default: fresh initialisation)")->check(CLI::ExistingFile);
  bench->add_option("--data", bench_data, "dataset directory (default: generated in memory)")->check(CLI::ExistingDirectory);
  bench->add_option("--scenes", bench_scenes, "in-memory samples when --data is absent")->check(CLI::PositiveNumber);
  bench->add_option("--iters", bench_iters, "recorded passes")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_warmup, "unrecorded passes")->check(CLI::NonNegativeNumber);
  bench->add_option("--out", bench_out, "directory for latency.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (threads > 0) kernels::set_num_threads(threads);
    if (serial) kernels::set_default_exec(kernels::Exec::Serial);

    if (*gen) {
      const auto world = load_world(gen_world);
      const auto m = synth::generate_dataset(gen_out, world, gen_seed, gen_scenes, gen_force);
      std::cout << "wrote " << m.samples.size() << " samples to " << gen_out << "\n";
    } else if (*train) {
      auto cfg = build_config(tc_opts);
      if (max_steps >= 0) cfg.max_steps = max_steps;
      if (epochs > 0) cfg.optim.epochs = epochs;
      cfg.validate();
      const auto data = pipe::Dataset::load(train_data);
      pipe::DalModel model(cfg.model, cfg.seed);
      pipe::TrainOptions opt{train_out, train_resume, train_force, {}};
      if (!quiet) opt.on_log = print_line;
      const auto s = pipe::train_model(model, cfg, data, opt);
      std::cout << "trained " << s.steps - s.start_step << " steps in " << s.seconds << " s; checkpoint "
                << (fs::path(train_out) / pipe::kCheckpointFile).string() << "\n";
    } else if (*ev) {
      pipe::TrainConfig cfg;
      auto model = pipe::load_model(ev_ckpt, &cfg);
      const auto data = pipe::Dataset::load(ev_data);
      const auto out = pipe::evaluate_model(*model, cfg, data, ev_batch);
      pipe::write_eval(out, ev_out);
      std::cout << out.report.to_text();
    } else if (*ab) {
      const auto cfg = build_config(ab_opts);
      pipe::prepare_out_dir(ab_out, ab_force);
      const auto train_set = pipe::Dataset::load(ab_train), val_set = pipe::Dataset::load(ab_val);
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < ab_seeds; ++i) seeds.push_back(cfg.seed + i);
      const auto r = pipe::run_ablation(cfg, train_set, val_set, seeds, ab_out,
                                        [](const std::string& s) { std::cout << s << std::endl; });
      write_text_atomic(fs::path(ab_out) / "ablation.json", r.to_json().dump(2) + "\n");
      write_text_atomic(fs::path(ab_out) / "ablation.txt", r.to_text());
      std::cout << r.to_text();
    } else if (*bench) {
      pipe::TrainConfig cfg;
      std::unique_ptr<pipe::DalModel> model;
      if (!bench_ckpt.empty()) {
        model = pipe::load_model(bench_ckpt, &cfg);
      } else {
        cfg = build_config(bench_opts);
        model = std::make_unique<pipe::DalModel>(cfg.model, cfg.seed);
      }
      const auto data = bench_data.empty() ? pipe::Dataset::generate({}, 7, bench_scenes) : pipe::Dataset::load(bench_data);
      const auto r = pipe::profile_latency(*model, cfg, data, bench_warmup, bench_iters);
      std::cout << r.to_text();
      if (!bench_out.empty()) {
        fs::create_directories(bench_out);
        write_text_atomic(fs::path(bench_out) / "latency.json", r.to_json().dump(2) + "\n");
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
