#include "dal/losses/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dal/common/error.hpp"
#include "dal/tensorcore/ops.hpp"

namespace dal::loss {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

template <class T>
tc::Tensor<T> heatmap_focal_loss(const tc::Tensor<T>& logits, std::span<const T> target, const FocalParams& p) {
  const std::int64_t n = logits.numel();
  if (static_cast<std::int64_t>(target.size()) != n)
    throw ShapeError("heatmap_focal_loss: target size does not match logits " + tc::to_string(logits.shape()));
  const double lo = p.heatmap_clamp, hi = 1 - p.heatmap_clamp, a = p.heatmap_alpha, b = p.heatmap_beta;
  auto x = logits.data();
  double total = 0;
  std::int64_t pos = 0;
  std::vector<T> dldx(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double s = 1 / (1 + std::exp(-static_cast<double>(x[i])));
    const bool clamped = s < lo || s > hi;
    const double q = std::clamp(s, lo, hi);
    const double t = target[i];
    double dq;
    if (t == 1) {
      ++pos;
      total += -std::log(q) * std::pow(1 - q, a);
      dq = -std::pow(1 - q, a) / q + a * std::pow(1 - q, a - 1) * std::log(q);
    } else {
      const double w = std::pow(1 - t, b);
      total += -std::log(1 - q) * std::pow(q, a) * w;
      dq = w * (std::pow(q, a) / (1 - q) - a * std::pow(q, a - 1) * std::log(1 - q));
    }
    dldx[i] = clamped ? T(0) : static_cast<T>(dq * s * (1 - s));
  }
  const double norm = std::max<std::int64_t>(pos, 1);
  for (auto& g : dldx) g = static_cast<T>(g / norm);
  return tc::make_op<T>("heatmap_focal_loss", {}, {static_cast<T>(total / norm)}, {logits},
                        [dldx = std::move(dldx)](tc::detail::Node<T>& self) {
                          auto& g = self.parents[0]->grad_buffer();
                          const T up = self.grad[0];
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * dldx[i];
                        });
}

template <class T>
tc::Tensor<T> sigmoid_focal_loss(const tc::Tensor<T>& logits, std::span<const int> labels, double normalizer,
                                 const FocalParams& p) {
  if (logits.ndim() != 2 || logits.dim(0) != static_cast<std::int64_t>(labels.size()))
    throw ShapeError("sigmoid_focal_loss: logits " + tc::to_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  if (!(normalizer > 0)) throw ConfigError("sigmoid_focal_loss: normalizer must be positive");
  const std::int64_t N = logits.dim(0), C = logits.dim(1);
  const double g = p.cls_gamma, al = p.cls_alpha;
  auto x = logits.data();
  double total = 0;
  std::vector<T> dldx(N * C);
  for (std::int64_t i = 0; i < N; ++i) {
    if (labels[i] < -1 || labels[i] >= C) throw ShapeError("sigmoid_focal_loss: label out of range");
    for (std::int64_t c = 0; c < C; ++c) {
      const double v = x[i * C + c];
      const double s = 1 / (1 + std::exp(-v));
      const double log_s = -softplus(-v), log_1s = -softplus(v);
      double l, d;
      if (labels[i] == c) {
        l = -al * std::pow(1 - s, g) * log_s;
        d = al * std::pow(1 - s, g) * (g * s * log_s - (1 - s));
      } else {
        l = -(1 - al) * std::pow(s, g) * log_1s;
        d = (1 - al) * std::pow(s, g) * (s - g * (1 - s) * log_1s);
      }
      total += l;
      dldx[i * C + c] = static_cast<T>(d / normalizer);
    }
  }
  return tc::make_op<T>("sigmoid_focal_loss", {}, {static_cast<T>(total / normalizer)}, {logits},
                        [dldx = std::move(dldx)](tc::detail::Node<T>& self) {
                          auto& gb = self.parents[0]->grad_buffer();
                          const T up = self.grad[0];
                          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += up * dldx[i];
                        });
}

template <class T>
tc::Tensor<T> aux_loss(const tc::Tensor<T>& logits, std::span<const int> labels, const FocalParams& p) {
  if (labels.empty()) return tc::Tensor<T>::scalar(T(0));
  return sigmoid_focal_loss(logits, labels, static_cast<double>(labels.size()), p);
}

template <class T>
tc::Tensor<T> weighted_l1(const tc::Tensor<T>& pred, std::span<const T> target, std::span<const double> weights) {
  if (pred.ndim() != 2 || pred.dim(1) != static_cast<std::int64_t>(weights.size()) ||
      pred.numel() != static_cast<std::int64_t>(target.size()))
    throw ShapeError("weighted_l1: pred " + tc::to_string(pred.shape()) + " does not match target/weights");
  const std::int64_t N = pred.dim(0), D = pred.dim(1);
  const double norm = std::max<double>(static_cast<double>(N * D), 1);
  auto x = pred.data();
  double total = 0;
  std::vector<T> dldx(N * D);
  for (std::int64_t i = 0; i < N * D; ++i) {
    const double diff = static_cast<double>(x[i]) - target[i], w = weights[i % D];
    total += w * std::abs(diff);
    dldx[i] = static_cast<T>(w * ((diff > 0) - (diff < 0)) / norm);
  }
  return tc::make_op<T>("weighted_l1", {}, {static_cast<T>(total / norm)}, {pred},
                        [dldx = std::move(dldx)](tc::detail::Node<T>& self) {
                          auto& g = self.parents[0]->grad_buffer();
                          const T up = self.grad[0];
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * dldx[i];
                        });
}

template <class T>
tc::Tensor<T> total_loss(const tc::Tensor<T>& aux, const tc::Tensor<T>& heatmap, const tc::Tensor<T>& cls,
                         const tc::Tensor<T>& reg, const LossWeights& w) {
  const std::pair<const char*, const tc::Tensor<T>*> parts[] = {
      {"L_aux", &aux}, {"L_heatmap", &heatmap}, {"L_cls", &cls}, {"L_reg", &reg}};
  for (const auto& [name, t] : parts) {
    if (!t->defined() || t->numel() != 1) throw ShapeError(std::string("total_loss: ") + name + " is not a scalar");
    if (!std::isfinite(static_cast<double>(t->data()[0])))
      throw NumericError(std::string("total_loss: ") + name + " is not finite");
  }
  auto transfusion = tc::add(tc::add(heatmap, cls), tc::scale(reg, static_cast<T>(w.reg)));
  return tc::add(aux, transfusion);
}

#define DAL_INSTANTIATE(T)                                                                                       \
  template tc::Tensor<T> heatmap_focal_loss(const tc::Tensor<T>&, std::span<const T>, const FocalParams&);       \
  template tc::Tensor<T> sigmoid_focal_loss(const tc::Tensor<T>&, std::span<const int>, double, const FocalParams&); \
  template tc::Tensor<T> aux_loss(const tc::Tensor<T>&, std::span<const int>, const FocalParams&);              \
  template tc::Tensor<T> weighted_l1(const tc::Tensor<T>&, std::span<const T>, std::span<const double>);         \
  template tc::Tensor<T> total_loss(const tc::Tensor<T>&, const tc::Tensor<T>&, const tc::Tensor<T>&,            \
                                    const tc::Tensor<T>&, const LossWeights&);
DAL_INSTANTIATE(float)
DAL_INSTANTIATE(double)
#undef DAL_INSTANTIATE

}  // namespace dal::loss
