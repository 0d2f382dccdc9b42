#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dal/common/error.hpp"
#include "dal/common/rng.hpp"
#include "dal/tensorcore/ops.hpp"

namespace dal::tc {

/// Owns every named parameter and buffer of a model, plus the train/eval flag.
/// Layers keep shallow copies of their tensors, so updates through the store
/// are visible to them.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<T> add_param(const std::string& name, Shape shape, std::vector<T> init) {
    check_new(name);
    auto t = Tensor<T>::from_data(std::move(shape), std::move(init), true);
    params_.emplace_back(name, t);
    return t;
  }
  Tensor<T> add_buffer(const std::string& name, Shape shape, T value) {
    check_new(name);
    auto t = Tensor<T>::full(std::move(shape), value, false);
    buffers_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& params() const { return params_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& buffers() const { return buffers_; }

  Tensor<T> param(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) return t;
    throw ConfigError("no parameter named '" + name + "'");
  }

  void zero_grad() {
    for (auto& [n, t] : params_) t.zero_grad();
  }
  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
  }

  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }
  Rng& rng() { return rng_; }

 private:
  void check_new(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) throw ConfigError("duplicate parameter '" + name + "'");
    for (const auto& [n, t] : buffers_)
      if (n == name) throw ConfigError("duplicate buffer '" + name + "'");
  }

  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<std::pair<std::string, Tensor<T>>> buffers_;
  bool training_ = true;
  Rng rng_;
};

template <class T>
std::vector<T> kaiming_normal(Rng& rng, std::int64_t count, std::int64_t fan_in) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<T> v(count);
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, std));
  return v;
}

template <class T>
std::vector<T> uniform_init(Rng& rng, std::int64_t count, double bound) {
  std::vector<T> v(count);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return v;
}

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int in, int out, int kernel, int stride = 1,
         int pad = -1, bool bias = false)
      : stride_(stride), pad_(pad < 0 ? kernel / 2 : pad) {
    const std::int64_t fan_in = static_cast<std::int64_t>(in) * kernel * kernel;
    weight_ = store.add_param(name + ".weight", {out, in, kernel, kernel},
                              kaiming_normal<T>(store.rng(), out * fan_in, fan_in));
    if (bias) bias_ = store.add_param(name + ".bias", {out}, std::vector<T>(out, T(0)));
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_, bias_;
  int stride_ = 1, pad_ = 0;
};

template <class T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& store, const std::string& name, int channels) : store_(&store) {
    gamma_ = store.add_param(name + ".gamma", {channels}, std::vector<T>(channels, T(1)));
    beta_ = store.add_param(name + ".beta", {channels}, std::vector<T>(channels, T(0)));
    mean_ = store.add_buffer(name + ".running_mean", {channels}, T(0));
    var_ = store.add_buffer(name + ".running_var", {channels}, T(1));
  }
  Tensor<T> operator()(const Tensor<T>& x) {
    return batch_norm2d(x, gamma_, beta_, mean_, var_, store_->training(), T(0.1), T(1e-5));
  }

 private:
  ParamStore<T>* store_ = nullptr;
  Tensor<T> gamma_, beta_, mean_, var_;
};

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, int in, int out, bool bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = store.add_param(name + ".weight", {out, in}, uniform_init<T>(store.rng(), static_cast<std::int64_t>(out) * in, bound));
    if (bias) bias_ = store.add_param(name + ".bias", {out}, uniform_init<T>(store.rng(), out, bound));
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight_, bias_); }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_, bias_;
};

/// conv -> batch-norm -> optional ReLU.
template <class T>
class ConvBnAct {
 public:
  ConvBnAct() = default;
  ConvBnAct(ParamStore<T>& store, const std::string& name, int in, int out, int kernel, int stride = 1,
            bool act = true)
      : conv_(store, name + ".conv", in, out, kernel, stride), bn_(store, name + ".bn", out), act_(act) {}
  Tensor<T> operator()(const Tensor<T>& x) {
    auto y = bn_(conv_(x));
    return act_ ? relu(y) : y;
  }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  bool act_ = true;
};

/// ResNet basic block: two 3x3 conv-bn pairs with an identity or projected
/// shortcut.
template <class T>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(ParamStore<T>& store, const std::string& name, int in, int out, int stride = 1)
      : a_(store, name + ".a", in, out, 3, stride, true), b_(store, name + ".b", out, out, 3, 1, false) {
    if (in != out || stride != 1) {
      proj_ = ConvBnAct<T>(store, name + ".proj", in, out, 1, stride, false);
      has_proj_ = true;
    }
  }
  Tensor<T> operator()(const Tensor<T>& x) {
    auto y = b_(a_(x));
    return relu(add(y, has_proj_ ? proj_(x) : x));
  }

 private:
  ConvBnAct<T> a_, b_, proj_;
  bool has_proj_ = false;
};

}  // namespace dal::tc
