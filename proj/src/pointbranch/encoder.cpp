#include "dal/pointbranch/encoder.hpp"

namespace dal::pb {

int SparseEncoderConfig::total_stride() const {
  int s = 1;
  for (int v : strides) s *= v;
  return s;
}

int SparseEncoderConfig::out_channels() const { return base_channels << (strides.size() - 1); }

SparseEncoder::SparseEncoder(tc::ParamStore<float>& store, const std::string& name, int in_channels,
                             SparseEncoderConfig config)
    : config_(std::move(config)) {
  if (config_.strides.empty() || config_.base_channels < 1 || config_.blocks_per_stage < 0)
    throw ConfigError("sparse encoder: invalid configuration");
  int in = in_channels;
  const auto widths = stage_widths();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string stage = name + ".stage" + std::to_string(i);
    down_.emplace_back(store, stage + ".down", in, widths[i], 3, config_.strides[i]);
    blocks_.emplace_back();
    for (int b = 0; b < config_.blocks_per_stage; ++b)
      blocks_.back().emplace_back(store, stage + ".block" + std::to_string(b), widths[i], widths[i]);
    in = widths[i];
  }
}

std::vector<int> SparseEncoder::stage_widths() const {
  std::vector<int> w;
  for (std::size_t i = 0; i < config_.strides.size(); ++i) w.push_back(config_.base_channels << i);
  return w;
}

tc::Tensorf SparseEncoder::operator()(const tc::Tensorf& x) {
  auto y = x;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    y = down_[i](y);
    for (auto& b : blocks_[i]) y = b(y);
  }
  return y;
}

DenseEncoder::DenseEncoder(tc::ParamStore<float>& store, const std::string& name, int in_channels,
                           DenseEncoderConfig config)
    : config_(std::move(config)) {
  const int n = static_cast<int>(config_.stages.size());
  if (n < 1 || config_.out_channels % n != 0)
    throw ConfigError("dense encoder: output channels must split evenly over the stages");
  int in = in_channels, stride = 1;
  for (int i = 0; i < n; ++i) {
    const auto& st = config_.stages[i];
    if (st.blocks < 1 || st.channels < 1 || st.stride < 1) throw ConfigError("dense encoder: invalid stage");
    const std::string stage = name + ".stage" + std::to_string(i);
    stages_.emplace_back();
    for (int b = 0; b < st.blocks; ++b)
      stages_.back().emplace_back(store, stage + ".block" + std::to_string(b), b == 0 ? in : st.channels, st.channels,
                                  b == 0 ? st.stride : 1);
    stride *= st.stride;
    lateral_.emplace_back(store, name + ".neck" + std::to_string(i), st.channels, config_.out_channels / n, 1);
    up_.push_back(stride);
    in = st.channels;
  }
}

int DenseEncoder::downsample() const { return up_.back(); }

tc::Tensorf DenseEncoder::operator()(const tc::Tensorf& x) {
  if (x.dim(2) % downsample() != 0 || x.dim(3) % downsample() != 0)
    throw ShapeError("dense encoder: BEV extent " + tc::to_string(x.shape()) + " not divisible by stride " +
                     std::to_string(downsample()));
  std::vector<tc::Tensorf> outs;
  auto y = x;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    for (auto& b : stages_[i]) y = b(y);
    auto l = lateral_[i](y);
    outs.push_back(up_[i] > 1 ? tc::upsample_nearest2d(l, up_[i]) : l);
  }
  return outs.size() == 1 ? outs.front() : tc::concat(outs, 1);
}

}  // namespace dal::pb
