#include "dal/pipeline/config.hpp"

#include <fstream>
#include <sstream>

namespace dal::pipe {

std::string to_string(ConfidenceMode m) {
  switch (m) {
    case ConfidenceMode::Classification: return "classification";
    case ConfidenceMode::Heatmap: return "heatmap";
    case ConfidenceMode::Product: return "product";
  }
  return "classification";
}

ConfidenceMode confidence_from_string(const std::string& s) {
  if (s == "classification") return ConfidenceMode::Classification;
  if (s == "heatmap") return ConfidenceMode::Heatmap;
  if (s == "product") return ConfidenceMode::Product;
  throw ConfigError("unknown confidence mode '" + s + "' (classification|heatmap|product)");
}

void ModelConfig::validate() const {
  voxel.validate();
  depth.validate();
  const int s = sparse.total_stride();
  if (voxel.nx() % s != 0 || voxel.ny() % s != 0 || voxel.nx() / s != grid.nx || voxel.ny() / s != grid.ny)
    throw ConfigError("model: voxel grid " + std::to_string(voxel.nx()) + "x" + std::to_string(voxel.ny()) +
                      " at sparse stride " + std::to_string(s) + " does not give the BEV grid " +
                      std::to_string(grid.nx) + "x" + std::to_string(grid.ny));
  if (std::abs(voxel.x_min - grid.x_min) > 1e-9 || std::abs(voxel.y_min - grid.y_min) > 1e-9 ||
      std::abs(voxel.voxel_xy * s - grid.cell) > 1e-9)
    throw ConfigError("model: voxel range and BEV grid disagree");
  if (dense.out_channels != head.bev_channels || image.out_channels != head.bev_channels)
    throw ConfigError("model: LiDAR BEV, image and head channels must all equal head.bev_channels");
  if (head.num_classes < 1 || head.top_k < 1 || aux_hidden < 1) throw ConfigError("model: bad head sizes");
}

void TrainConfig::validate() const {
  model.validate();
  augment.resize.range.validate();
  const int s = cam::ImageEncoderConfig::total_stride();
  if (augment.resize.input_height % s || augment.resize.input_width % s)
    throw ConfigError("augment.resize: input size must be divisible by " + std::to_string(s));
  if (!(augment.resize.eval_scale > 0)) throw ConfigError("augment.resize.eval_scale must be positive");
  if (augment.velocity.probability < 0 || augment.velocity.probability > 1 || augment.velocity.max_speed < 0)
    throw ConfigError("augment.velocity: probability in [0, 1] and max_speed >= 0");
  if (optim.epochs < 1 || optim.batch_size < 1) throw ConfigError("optim: epochs and batch_size must be >= 1");
  if (!(optim.initial_lr > 0)) throw ConfigError("optim.initial_lr must be positive");
  if (checkpoint_every < 0 || log_every < 1 || max_steps < 0) throw ConfigError("bad checkpoint/log/max_steps");
}

ModelConfig model_preset(const std::string& name) {
  ModelConfig m;
  m.preset = name;
  if (name == "base") {
    m.image.widths = {8, 16, 32, 64};
    m.sparse.base_channels = 24;
    m.dense.stages = {{1, 2, 64}, {2, 2, 128}};
  } else if (name == "tiny") {
    m.image.widths = {8, 16, 32, 64};
    m.image.out_channels = 64;
    m.sparse.base_channels = 16;
    m.dense.stages = {{1, 1, 32}, {2, 1, 64}};
    m.dense.out_channels = 64;
    m.head.bev_channels = 64;
  } else if (name == "ablation") {
    m.image.widths = {16, 32, 64, 128};
    m.sparse.base_channels = 16;
    m.dense.stages = {{1, 1, 64}, {2, 1, 128}};
  } else if (name == "large" || name == "recommended") {
    m.image.widths = name == "large" ? std::vector<int>{16, 32, 64, 128} : std::vector<int>{8, 16, 32, 64};
    m.image.blocks = name == "large" ? 2 : 1;
    m.voxel.voxel_xy = 0.25;
    m.voxel.max_points = 5;
    m.sparse.base_channels = 32;
    m.sparse.strides = {1, 2, 2};
    m.dense.stages = {{1, 3, 128}, {2, 3, 256}};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return m;
}

std::vector<std::string> preset_names() { return {"tiny", "base", "large", "recommended", "ablation"}; }

namespace {

aug::ResizeConfig resize_preset(const std::string& name) {
  aug::ResizeConfig r;
  if (name == "tiny" || name == "recommended") {
    r.input_height = 48;
    r.input_width = 128;
    r.eval_scale = 128.0 / 352;
  } else if (name == "large") {
    r.input_height = 96;
    r.input_width = 272;
    r.eval_scale = 272.0 / 352;
  }
  return r;
}

Json stages_json(const std::vector<pb::DenseStage>& s) {
  Json a = Json::array();
  for (const auto& d : s) a.push_back({d.stride, d.blocks, d.channels});
  return a;
}

}  // namespace

Json to_json(const TrainConfig& c) {
  const auto& m = c.model;
  const auto& a = c.augment;
  const auto& o = c.optim;
  const auto& l = c.loss;
  return Json{
      {"model",
       {{"preset", m.preset},
        {"voxel",
         {{"x_min", m.voxel.x_min}, {"x_max", m.voxel.x_max}, {"y_min", m.voxel.y_min}, {"y_max", m.voxel.y_max},
          {"z_min", m.voxel.z_min}, {"z_max", m.voxel.z_max}, {"voxel_xy", m.voxel.voxel_xy},
          {"voxel_z", m.voxel.voxel_z}, {"max_points", m.voxel.max_points}, {"max_lag", m.voxel.max_lag}}},
        {"sparse", {{"base_channels", m.sparse.base_channels}, {"strides", m.sparse.strides},
                    {"blocks_per_stage", m.sparse.blocks_per_stage}}},
        {"dense", {{"stages", stages_json(m.dense.stages)}, {"out_channels", m.dense.out_channels}}},
        {"image", {{"widths", m.image.widths}, {"blocks", m.image.blocks}, {"out_channels", m.image.out_channels},
                   {"smooth", m.image.smooth}}},
        {"depth", {{"count", m.depth.count}, {"d_min", m.depth.d_min}, {"d_max", m.depth.d_max}}},
        {"head", {{"num_classes", m.head.num_classes}, {"bev_channels", m.head.bev_channels},
                  {"fuse_channels", m.head.fuse_channels}, {"ffn_hidden", m.head.ffn_hidden},
                  {"top_k", m.head.top_k}, {"heatmap_bias", m.head.heatmap_bias}}},
        {"grid", {{"x_min", m.grid.x_min}, {"y_min", m.grid.y_min}, {"cell", m.grid.cell}, {"nx", m.grid.nx},
                  {"ny", m.grid.ny}, {"z_min", m.grid.z_min}, {"z_max", m.grid.z_max}}},
        {"camera", m.camera},
        {"aux_hidden", m.aux_hidden},
        {"confidence", to_string(m.confidence)}}},
      {"augment",
       {{"resize", {{"lo", a.resize.range.lo}, {"hi", a.resize.range.hi}, {"input_height", a.resize.input_height},
                    {"input_width", a.resize.input_width}, {"eval_scale", a.resize.eval_scale}}},
        {"global", {{"enabled", a.global.enabled}, {"rot_range", a.global.rot_range}, {"scale_lo", a.global.scale_lo},
                    {"scale_hi", a.global.scale_hi}, {"flip_x_prob", a.global.flip_x_prob},
                    {"flip_y_prob", a.global.flip_y_prob}}},
        {"velocity", {{"enabled", a.velocity.enabled}, {"probability", a.velocity.probability},
                      {"max_speed", a.velocity.max_speed}}},
        {"cbgs", a.cbgs}}},
      {"optim", {{"epochs", o.epochs}, {"batch_size", o.batch_size}, {"initial_lr", o.initial_lr},
                 {"peak_factor", o.peak_factor}, {"final_factor", o.final_factor}, {"up_fraction", o.up_fraction},
                 {"momentum_lo", o.momentum_lo}, {"momentum_hi", o.momentum_hi}, {"weight_decay", o.weight_decay},
                 {"grad_clip", o.grad_clip}}},
      {"loss", {{"heatmap_alpha", l.focal.heatmap_alpha}, {"heatmap_beta", l.focal.heatmap_beta},
                {"cls_gamma", l.focal.cls_gamma}, {"cls_alpha", l.focal.cls_alpha}, {"reg_weight", l.weights.reg},
                {"match_cls_weight", l.match.cls_weight}, {"match_reg_weight", l.match.reg_weight},
                {"min_overlap", l.targets.min_overlap}, {"min_radius", l.targets.min_radius}}},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpoint_every},
      {"log_every", c.log_every},
      {"max_steps", c.max_steps}};
}

TrainConfig config_from_json(const Json& j) {
  TrainConfig c;
  StrictObject top(j, "config");
  std::string preset = "base";
  if (top.has("model") && top.child("model").contains("preset")) preset = top.child("model").at("preset").get<std::string>();
  c.model = model_preset(preset);
  c.augment.resize = resize_preset(preset);
  if (top.has("model")) {
    StrictObject o(top.child("model"), "config.model");
    auto& m = c.model;
    o.get("preset", m.preset);
    if (o.has("voxel")) {
      StrictObject v(o.child("voxel"), "config.model.voxel");
      v.get("x_min", m.voxel.x_min);
      v.get("x_max", m.voxel.x_max);
      v.get("y_min", m.voxel.y_min);
      v.get("y_max", m.voxel.y_max);
      v.get("z_min", m.voxel.z_min);
      v.get("z_max", m.voxel.z_max);
      v.get("voxel_xy", m.voxel.voxel_xy);
      v.get("voxel_z", m.voxel.voxel_z);
      v.get("max_points", m.voxel.max_points);
      v.get("max_lag", m.voxel.max_lag);
      v.finish();
    }
    if (o.has("sparse")) {
      StrictObject v(o.child("sparse"), "config.model.sparse");
      v.get("base_channels", m.sparse.base_channels);
      v.get("strides", m.sparse.strides);
      v.get("blocks_per_stage", m.sparse.blocks_per_stage);
      v.finish();
    }
    if (o.has("dense")) {
      StrictObject v(o.child("dense"), "config.model.dense");
      if (v.has("stages")) {
        m.dense.stages.clear();
        for (const auto& s : v.child("stages")) {
          if (!s.is_array() || s.size() != 3) throw ConfigError("config.model.dense.stages: entries are [stride, blocks, channels]");
          m.dense.stages.push_back({s[0].get<int>(), s[1].get<int>(), s[2].get<int>()});
        }
      }
      v.get("out_channels", m.dense.out_channels);
      v.finish();
    }
    if (o.has("image")) {
      StrictObject v(o.child("image"), "config.model.image");
      v.get("widths", m.image.widths);
      v.get("blocks", m.image.blocks);
      v.get("out_channels", m.image.out_channels);
      v.get("smooth", m.image.smooth);
      v.finish();
    }
    if (o.has("depth")) {
      StrictObject v(o.child("depth"), "config.model.depth");
      v.get("count", m.depth.count);
      v.get("d_min", m.depth.d_min);
      v.get("d_max", m.depth.d_max);
      v.finish();
    }
    if (o.has("head")) {
      StrictObject v(o.child("head"), "config.model.head");
      v.get("num_classes", m.head.num_classes);
      v.get("bev_channels", m.head.bev_channels);
      v.get("fuse_channels", m.head.fuse_channels);
      v.get("ffn_hidden", m.head.ffn_hidden);
      v.get("top_k", m.head.top_k);
      v.get("heatmap_bias", m.head.heatmap_bias);
      v.finish();
    }
    if (o.has("grid")) {
      StrictObject v(o.child("grid"), "config.model.grid");
      v.get("x_min", m.grid.x_min);
      v.get("y_min", m.grid.y_min);
      v.get("cell", m.grid.cell);
      v.get("nx", m.grid.nx);
      v.get("ny", m.grid.ny);
      v.get("z_min", m.grid.z_min);
      v.get("z_max", m.grid.z_max);
      v.finish();
    }
    o.get("camera", m.camera);
    o.get("aux_hidden", m.aux_hidden);
    std::string conf = to_string(m.confidence);
    o.get("confidence", conf);
    m.confidence = confidence_from_string(conf);
    o.finish();
  }
  if (top.has("augment")) {
    StrictObject o(top.child("augment"), "config.augment");
    auto& a = c.augment;
    if (o.has("resize")) {
      StrictObject v(o.child("resize"), "config.augment.resize");
      v.get("lo", a.resize.range.lo);
      v.get("hi", a.resize.range.hi);
      v.get("input_height", a.resize.input_height);
      v.get("input_width", a.resize.input_width);
      v.get("eval_scale", a.resize.eval_scale);
      v.finish();
    }
    if (o.has("global")) {
      StrictObject v(o.child("global"), "config.augment.global");
      v.get("enabled", a.global.enabled);
      v.get("rot_range", a.global.rot_range);
      v.get("scale_lo", a.global.scale_lo);
      v.get("scale_hi", a.global.scale_hi);
      v.get("flip_x_prob", a.global.flip_x_prob);
      v.get("flip_y_prob", a.global.flip_y_prob);
      v.finish();
    }
    if (o.has("velocity")) {
      StrictObject v(o.child("velocity"), "config.augment.velocity");
      v.get("enabled", a.velocity.enabled);
      v.get("probability", a.velocity.probability);
      v.get("max_speed", a.velocity.max_speed);
      v.finish();
    }
    o.get("cbgs", a.cbgs);
    o.finish();
  }
  if (top.has("optim")) {
    StrictObject v(top.child("optim"), "config.optim");
    auto& p = c.optim;
    v.get("epochs", p.epochs);
    v.get("batch_size", p.batch_size);
    v.get("initial_lr", p.initial_lr);
    v.get("peak_factor", p.peak_factor);
    v.get("final_factor", p.final_factor);
    v.get("up_fraction", p.up_fraction);
    v.get("momentum_lo", p.momentum_lo);
    v.get("momentum_hi", p.momentum_hi);
    v.get("weight_decay", p.weight_decay);
    v.get("grad_clip", p.grad_clip);
    v.finish();
  }
  if (top.has("loss")) {
    StrictObject v(top.child("loss"), "config.loss");
    auto& l = c.loss;
    v.get("heatmap_alpha", l.focal.heatmap_alpha);
    v.get("heatmap_beta", l.focal.heatmap_beta);
    v.get("cls_gamma", l.focal.cls_gamma);
    v.get("cls_alpha", l.focal.cls_alpha);
    v.get("reg_weight", l.weights.reg);
    v.get("match_cls_weight", l.match.cls_weight);
    v.get("match_reg_weight", l.match.reg_weight);
    v.get("min_overlap", l.targets.min_overlap);
    v.get("min_radius", l.targets.min_radius);
    v.finish();
  }
  top.get("seed", c.seed);
  top.get("checkpoint_every", c.checkpoint_every);
  top.get("log_every", c.log_every);
  top.get("max_steps", c.max_steps);
  top.finish();
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_toggle(TrainConfig& c, const std::string& toggle) {
  const auto eq = toggle.find('=');
  if (eq == std::string::npos) throw ConfigError("toggle '" + toggle + "' is not key=value");
  const std::string key = toggle.substr(0, eq), value = toggle.substr(eq + 1);
  auto on_off = [&](bool& field) {
    if (value != "on" && value != "off") throw ConfigError("toggle '" + toggle + "': expected on|off");
    field = value == "on";
  };
  if (key == "camera") {
    on_off(c.model.camera);
  } else if (key == "velaug") {
    on_off(c.augment.velocity.enabled);
  } else if (key == "resize") {
    if (value == "wide")
      c.augment.resize.range = aug::ResizeRange::wide();
    else if (value == "narrow")
      c.augment.resize.range = aug::ResizeRange::narrow();
    else
      throw ConfigError("toggle '" + toggle + "': expected narrow|wide");
  } else {
    throw ConfigError("unknown toggle '" + key + "'");
  }
}

}  // namespace dal::pipe
