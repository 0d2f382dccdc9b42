#include "dal/tensorcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dal/common/error.hpp"
#include "dal/kernels/im2col.hpp"

namespace dal::tc {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<RowMat<T>>;
template <class T>
using CMapM = Eigen::Map<const RowMat<T>>;

template <class T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

int norm_axis(int axis, int ndim, const char* op) {
  if (axis < 0) axis += ndim;
  require(axis >= 0 && axis < ndim, op, "axis out of range");
  return axis;
}

struct AxisSplit {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class T, class F, class G>
Tensor<T> unary(const char* name, const Tensor<T>& x, F f, G dfdx_from_xy) {
  const auto xs = x.data();
  std::vector<T> y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) y[i] = f(xs[i]);
  return make_op<T>(name, x.shape(), std::move(y), {x}, [dfdx_from_xy](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * dfdx_from_xy(p.value[i], self.value[i]);
  });
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("add", a, b);
  std::vector<T> y(a.data().begin(), a.data().end());
  const auto bs = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bs[i];
  return make_op<T>("add", a.shape(), std::move(y), {a, b}, [](detail::Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("sub", a, b);
  std::vector<T> y(a.data().begin(), a.data().end());
  const auto bs = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bs[i];
  return make_op<T>("sub", a.shape(), std::move(y), {a, b}, [](detail::Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      const T sign = k == 0 ? T(1) : T(-1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("mul", a, b);
  std::vector<T> y(a.data().begin(), a.data().end());
  const auto bs = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bs[i];
  return make_op<T>("mul", a.shape(), std::move(y), {a, b}, [](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>("scale", a, [factor](T v) { return v * factor; },
                  [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary<T>("add_scalar", a, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                  [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>("sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                  [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  return unary<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary<T>("clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
                  [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return make_op<T>("sum", {}, {s}, {x}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto n = static_cast<T>(std::max<std::int64_t>(x.numel(), 1));
  return scale(sum(x), T(1) / n);
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& dims) {
  const int nd = x.ndim();
  require(static_cast<int>(dims.size()) == nd, "permute", "rank mismatch for " + to_string(x.shape()));
  std::vector<int> seen(nd, 0);
  for (int d : dims) {
    require(d >= 0 && d < nd && !seen[d], "permute", "invalid permutation");
    seen[d] = 1;
  }
  const Shape& in = x.shape();
  Shape out(nd);
  std::vector<std::int64_t> in_stride(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in[i + 1];
  for (int i = 0; i < nd; ++i) out[i] = in[dims[i]];
  // Source offset for every destination element.
  const std::int64_t total = x.numel();
  std::vector<std::int64_t> src(total);
  std::vector<std::int64_t> idx(nd, 0);
  for (std::int64_t flat = 0; flat < total; ++flat) {
    std::int64_t off = 0;
    for (int i = 0; i < nd; ++i) off += idx[i] * in_stride[dims[i]];
    src[flat] = off;
    for (int i = nd - 1; i >= 0; --i) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<T> y(total);
  const auto xs = x.data();
  for (std::int64_t i = 0; i < total; ++i) y[i] = xs[src[i]];
  return make_op<T>("permute", out, std::move(y), {x}, [src = std::move(src)](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
  });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  require(!xs.empty(), "concat", "no inputs");
  const int nd = xs[0].ndim();
  axis = norm_axis(axis, nd, "concat");
  Shape out = xs[0].shape();
  out[axis] = 0;
  for (const auto& t : xs) {
    require(t.ndim() == nd, "concat", "rank mismatch " + to_string(t.shape()));
    for (int i = 0; i < nd; ++i)
      if (i != axis)
        require(t.shape()[i] == xs[0].shape()[i], "concat",
                "shape mismatch " + to_string(xs[0].shape()) + " vs " + to_string(t.shape()));
    out[axis] += t.shape()[axis];
  }
  const auto sp = split_at(out, axis);
  std::vector<T> y(numel(out));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    const auto ts = split_at(t.shape(), axis);
    const auto d = t.data();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      std::copy_n(d.begin() + o * ts.n * ts.inner, ts.n * ts.inner,
                  y.begin() + (o * sp.n + off) * sp.inner);
    off += ts.n;
  }
  return make_op<T>("concat", out, std::move(y), xs, [sp, offsets](detail::Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      const std::int64_t chunk = static_cast<std::int64_t>(g.size()) / sp.outer;
      for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t i = 0; i < chunk; ++i)
          g[o * chunk + i] += self.grad[(o * sp.n + offsets[k]) * sp.inner + i];
    }
  });
}

template <class T>
Tensor<T> narrow(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length) {
  axis = norm_axis(axis, x.ndim(), "narrow");
  const auto sp = split_at(x.shape(), axis);
  require(start >= 0 && length >= 0 && start + length <= sp.n, "narrow",
          "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
              ") outside " + to_string(x.shape()));
  Shape out = x.shape();
  out[axis] = length;
  std::vector<T> y(numel(out));
  const auto d = x.data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    std::copy_n(d.begin() + (o * sp.n + start) * sp.inner, length * sp.inner,
                y.begin() + o * length * sp.inner);
  return make_op<T>("narrow", out, std::move(y), {x}, [sp, start, length](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t i = 0; i < length * sp.inner; ++i)
        g[(o * sp.n + start) * sp.inner + i] += self.grad[o * length * sp.inner + i];
  });
}

template <class T>
Tensor<T> gather(const Tensor<T>& x, int axis, std::span<const std::int64_t> indices) {
  axis = norm_axis(axis, x.ndim(), "gather");
  const auto sp = split_at(x.shape(), axis);
  for (auto i : indices)
    require(i >= 0 && i < sp.n, "gather",
            "index " + std::to_string(i) + " out of range for " + to_string(x.shape()));
  Shape out = x.shape();
  const auto m = static_cast<std::int64_t>(indices.size());
  out[axis] = m;
  std::vector<T> y(numel(out));
  const auto d = x.data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t j = 0; j < m; ++j)
      std::copy_n(d.begin() + (o * sp.n + indices[j]) * sp.inner, sp.inner,
                  y.begin() + (o * m + j) * sp.inner);
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  return make_op<T>("gather", out, std::move(y), {x}, [sp, idx = std::move(idx)](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto m = static_cast<std::int64_t>(idx.size());
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t j = 0; j < m; ++j)
        for (std::int64_t i = 0; i < sp.inner; ++i)
          g[(o * sp.n + idx[j]) * sp.inner + i] += self.grad[(o * m + j) * sp.inner + i];
  });
}

template <class T>
Tensor<T> scatter_add(const Tensor<T>& src, int axis, std::span<const std::int64_t> indices,
                      std::int64_t size) {
  axis = norm_axis(axis, src.ndim(), "scatter_add");
  const auto sp = split_at(src.shape(), axis);
  require(static_cast<std::int64_t>(indices.size()) == sp.n, "scatter_add",
          "index count does not match " + to_string(src.shape()));
  for (auto i : indices)
    require(i >= 0 && i < size, "scatter_add", "index " + std::to_string(i) + " out of range");
  Shape out = src.shape();
  out[axis] = size;
  std::vector<T> y(numel(out), T(0));
  const auto d = src.data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t j = 0; j < sp.n; ++j)
      for (std::int64_t i = 0; i < sp.inner; ++i)
        y[(o * size + indices[j]) * sp.inner + i] += d[(o * sp.n + j) * sp.inner + i];
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  return make_op<T>("scatter_add", out, std::move(y), {src},
                    [sp, size, idx = std::move(idx)](detail::Node<T>& self) {
                      auto& g = self.parents[0]->grad_buffer();
                      for (std::int64_t o = 0; o < sp.outer; ++o)
                        for (std::int64_t j = 0; j < sp.n; ++j)
                          for (std::int64_t i = 0; i < sp.inner; ++i)
                            g[(o * sp.n + j) * sp.inner + i] +=
                                self.grad[(o * size + idx[j]) * sp.inner + i];
                    });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require(x.ndim() == 2 && weight.ndim() == 2 && x.dim(1) == weight.dim(1), "linear",
          "x " + to_string(x.shape()) + " incompatible with weight " + to_string(weight.shape()));
  const auto n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (bias.defined())
    require(bias.ndim() == 1 && bias.dim(0) == out, "linear", "bias shape " + to_string(bias.shape()));
  std::vector<T> y(n * out);
  MapM<T> ym(y.data(), n, out);
  CMapM<T> xm(x.data().data(), n, in);
  CMapM<T> wm(weight.data().data(), out, in);
  ym.noalias() = xm * wm.transpose();
  if (bias.defined())
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < out; ++j) ym(i, j) += bias.data()[j];
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op<T>("linear", {n, out}, std::move(y), inputs, [n, in, out](detail::Node<T>& self) {
    CMapM<T> gy(self.grad.data(), n, out);
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) {
      MapM<T> gx(px.grad_buffer().data(), n, in);
      gx.noalias() += gy * CMapM<T>(pw.value.data(), out, in);
    }
    if (pw.requires_grad) {
      MapM<T> gw(pw.grad_buffer().data(), out, in);
      gw.noalias() += gy.transpose() * CMapM<T>(px.value.data(), n, in);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& gb = self.parents[2]->grad_buffer();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < out; ++j) gb[j] += gy(i, j);
    }
  });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad) {
  require(x.ndim() == 4 && weight.ndim() == 4 && weight.dim(1) == x.dim(1) &&
              weight.dim(2) == weight.dim(3),
          "conv2d", "input " + to_string(x.shape()) + " incompatible with weight " + to_string(weight.shape()));
  require(stride >= 1 && pad >= 0, "conv2d", "invalid stride/pad");
  const int n = static_cast<int>(x.dim(0)), c = static_cast<int>(x.dim(1));
  const int h = static_cast<int>(x.dim(2)), w = static_cast<int>(x.dim(3));
  const int o = static_cast<int>(weight.dim(0)), k = static_cast<int>(weight.dim(2));
  const kernels::ConvGeometry geo{c, h, w, k, stride, pad};
  const int ho = geo.out_height(), wo = geo.out_width();
  require(ho > 0 && wo > 0, "conv2d", "empty output for input " + to_string(x.shape()));
  if (bias.defined())
    require(bias.ndim() == 1 && bias.dim(0) == o, "conv2d", "bias shape " + to_string(bias.shape()));
  const bool direct = (k == 1 && stride == 1 && pad == 0);
  const std::int64_t ckk = static_cast<std::int64_t>(c) * k * k, hw = static_cast<std::int64_t>(ho) * wo;
  const auto exec = kernels::default_exec();

  std::vector<T> y(static_cast<std::int64_t>(n) * o * hw);
  std::vector<T> col(direct ? 0 : ckk * hw);
  CMapM<T> wm(weight.data().data(), o, ckk);
  for (int b = 0; b < n; ++b) {
    const T* xb = x.data().data() + static_cast<std::int64_t>(b) * c * h * w;
    const T* src = xb;
    if (!direct) {
      kernels::im2col(xb, geo, col.data(), exec);
      src = col.data();
    }
    MapM<T> yb(y.data() + static_cast<std::int64_t>(b) * o * hw, o, hw);
    yb.noalias() = wm * CMapM<T>(src, ckk, hw);
    if (bias.defined())
      for (int oc = 0; oc < o; ++oc) yb.row(oc).array() += bias.data()[oc];
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op<T>(
      "conv2d", {n, o, ho, wo}, std::move(y), inputs,
      [geo, n, o, ckk, hw, direct, exec](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const bool has_bias = self.parents.size() > 2 && self.parents[2]->requires_grad;
        const std::int64_t in_size = static_cast<std::int64_t>(geo.channels) * geo.height * geo.width;
        std::vector<T> col(direct ? 0 : ckk * hw);
        std::vector<T> dcol(direct ? 0 : ckk * hw);
        CMapM<T> wm(pw.value.data(), o, ckk);
        for (int b = 0; b < n; ++b) {
          CMapM<T> gy(self.grad.data() + static_cast<std::int64_t>(b) * o * hw, o, hw);
          const T* xb = px.value.data() + b * in_size;
          if (pw.requires_grad) {
            const T* src = xb;
            if (!direct) {
              kernels::im2col(xb, geo, col.data(), exec);
              src = col.data();
            }
            MapM<T> gw(pw.grad_buffer().data(), o, ckk);
            gw.noalias() += gy * CMapM<T>(src, ckk, hw).transpose();
          }
          if (has_bias) {
            auto& gb = self.parents[2]->grad_buffer();
            // Plain loop: Eigen's vectorised sum depends on the row's address
            // alignment, which would make runs differ bitwise.
            for (int oc = 0; oc < o; ++oc) {
              const T* row = self.grad.data() + (static_cast<std::int64_t>(b) * o + oc) * hw;
              T s = 0;
              for (std::int64_t i = 0; i < hw; ++i) s += row[i];
              gb[oc] += s;
            }
          }
          if (px.requires_grad) {
            T* gx = px.grad_buffer().data() + b * in_size;
            if (direct) {
              MapM<T>(gx, ckk, hw).noalias() += wm.transpose() * gy;
            } else {
              MapM<T>(dcol.data(), ckk, hw).noalias() = wm.transpose() * gy;
              kernels::col2im(dcol.data(), geo, gx, exec);
            }
          }
        }
      });
}

template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, bool training, T momentum,
                       T eps) {
  require(x.ndim() == 4, "batch_norm2d", "expected NCHW input, got " + to_string(x.shape()));
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(gamma.numel() == c && beta.numel() == c && running_mean.numel() == c &&
              running_var.numel() == c,
          "batch_norm2d", "parameter size does not match channels of " + to_string(x.shape()));
  const std::int64_t m = n * hw;
  const auto xs = x.data();
  std::vector<T> mu(c), inv_std(c);
  if (training) {
    require(m > 1, "batch_norm2d", "training mode needs more than one value per channel");
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T s = 0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = xs.data() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const T mean_c = s / T(m);
      T v = 0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = xs.data() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) v += (p[i] - mean_c) * (p[i] - mean_c);
      }
      const T var_c = v / T(m);
      mu[ch] = mean_c;
      inv_std[ch] = T(1) / std::sqrt(var_c + eps);
      auto rm = running_mean.data_mut();
      auto rv = running_var.data_mut();
      rm[ch] = (T(1) - momentum) * rm[ch] + momentum * mean_c;
      rv[ch] = (T(1) - momentum) * rv[ch] + momentum * var_c * T(m) / T(m - 1);
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean.data()[ch];
      inv_std[ch] = T(1) / std::sqrt(running_var.data()[ch] + eps);
    }
  }
  std::vector<T> y(xs.size());
  const auto gs = gamma.data(), bs = beta.data();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* p = xs.data() + (b * c + ch) * hw;
      T* q = y.data() + (b * c + ch) * hw;
      const T a = gs[ch] * inv_std[ch], off = bs[ch] - mu[ch] * a;
      for (std::int64_t i = 0; i < hw; ++i) q[i] = p[i] * a + off;
    }
  return make_op<T>(
      "batch_norm2d", x.shape(), std::move(y), {x, gamma, beta},
      [n, c, hw, m, mu = std::move(mu), inv_std = std::move(inv_std), training](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (std::int64_t ch = 0; ch < c; ++ch) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = px.value.data() + (b * c + ch) * hw;
            const T* gp = self.grad.data() + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              sum_dy += gp[i];
              sum_dy_xhat += gp[i] * (xp[i] - mu[ch]) * inv_std[ch];
            }
          }
          if (pg.requires_grad) pg.grad_buffer()[ch] += sum_dy_xhat;
          if (pb.requires_grad) pb.grad_buffer()[ch] += sum_dy;
          if (!px.requires_grad) continue;
          auto& gx = px.grad_buffer();
          const T gamma_c = pg.value[ch];
          for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = px.value.data() + (b * c + ch) * hw;
            const T* gp = self.grad.data() + (b * c + ch) * hw;
            T* out = gx.data() + (b * c + ch) * hw;
            if (training) {
              const T k = gamma_c * inv_std[ch] / T(m);
              for (std::int64_t i = 0; i < hw; ++i) {
                const T xhat = (xp[i] - mu[ch]) * inv_std[ch];
                out[i] += k * (T(m) * gp[i] - sum_dy - xhat * sum_dy_xhat);
              }
            } else {
              for (std::int64_t i = 0; i < hw; ++i) out[i] += gamma_c * inv_std[ch] * gp[i];
            }
          }
        }
      });
}

template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int pad) {
  require(x.ndim() == 4, "max_pool2d", "expected NCHW input, got " + to_string(x.shape()));
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t ho = (h + 2 * pad - kernel) / stride + 1, wo = (w + 2 * pad - kernel) / stride + 1;
  require(ho > 0 && wo > 0, "max_pool2d", "empty output for " + to_string(x.shape()));
  std::vector<T> y(n * c * ho * wo);
  std::vector<std::int64_t> arg(y.size());
  const auto xs = x.data();
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t best_i = -1;
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) {
            const std::int64_t iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            const std::int64_t flat = (p * h + iy) * w + ix;
            if (best_i < 0 || xs[flat] > best) {
              best = xs[flat];
              best_i = flat;
            }
          }
        const std::int64_t o = (p * ho + oy) * wo + ox;
        y[o] = best;
        arg[o] = best_i;
      }
  return make_op<T>("max_pool2d", {n, c, ho, wo}, std::move(y), {x}, [arg = std::move(arg)](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  axis = norm_axis(axis, x.ndim(), "softmax");
  const auto sp = split_at(x.shape(), axis);
  const auto xs = x.data();
  std::vector<T> y(xs.size());
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      const std::int64_t base = o * sp.n * sp.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t j = 0; j < sp.n; ++j) mx = std::max(mx, xs[base + j * sp.inner]);
      T s = 0;
      for (std::int64_t j = 0; j < sp.n; ++j) {
        const T e = std::exp(xs[base + j * sp.inner] - mx);
        y[base + j * sp.inner] = e;
        s += e;
      }
      for (std::int64_t j = 0; j < sp.n; ++j) y[base + j * sp.inner] /= s;
    }
  return make_op<T>("softmax", x.shape(), std::move(y), {x}, [sp](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        const std::int64_t base = o * sp.n * sp.inner + i;
        T dot = 0;
        for (std::int64_t j = 0; j < sp.n; ++j)
          dot += self.grad[base + j * sp.inner] * self.value[base + j * sp.inner];
        for (std::int64_t j = 0; j < sp.n; ++j) {
          const std::int64_t k = base + j * sp.inner;
          g[k] += self.value[k] * (self.grad[k] - dot);
        }
      }
  });
}

template <class T>
Tensor<T> upsample_nearest2d(const Tensor<T>& x, int factor) {
  require(x.ndim() == 4 && factor >= 1, "upsample_nearest2d", "expected NCHW input, got " + to_string(x.shape()));
  const std::int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t ho = h * factor, wo = w * factor;
  std::vector<T> y(nc * ho * wo);
  const auto xs = x.data();
  for (std::int64_t p = 0; p < nc; ++p)
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox)
        y[(p * ho + oy) * wo + ox] = xs[(p * h + oy / factor) * w + ox / factor];
  return make_op<T>("upsample_nearest2d", {x.dim(0), x.dim(1), ho, wo}, std::move(y), {x},
                    [nc, h, w, factor](detail::Node<T>& self) {
                      auto& g = self.parents[0]->grad_buffer();
                      const std::int64_t ho = h * factor, wo = w * factor;
                      for (std::int64_t p = 0; p < nc; ++p)
                        for (std::int64_t oy = 0; oy < ho; ++oy)
                          for (std::int64_t ox = 0; ox < wo; ++ox)
                            g[(p * h + oy / factor) * w + ox / factor] += self.grad[(p * ho + oy) * wo + ox];
                    });
}

template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& map, std::span<const int> images, const Tensor<T>& coords) {
  require(map.ndim() == 4, "bilinear_sample", "expected NCHW map, got " + to_string(map.shape()));
  const std::int64_t p = static_cast<std::int64_t>(images.size());
  require(coords.ndim() == 2 && coords.dim(0) == p && coords.dim(1) == 2, "bilinear_sample",
          "coords " + to_string(coords.shape()) + " do not match " + std::to_string(p) + " samples");
  const std::int64_t n = map.dim(0), c = map.dim(1), h = map.dim(2), w = map.dim(3);
  for (int im : images) require(im >= 0 && im < n, "bilinear_sample", "image index out of range");
  const auto ms = map.data();
  const auto cs = coords.data();
  auto corner = [&](std::int64_t im, std::int64_t ch, std::int64_t yy, std::int64_t xx) -> T {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return T(0);
    return ms[((im * c + ch) * h + yy) * w + xx];
  };
  std::vector<T> y(p * c);
  for (std::int64_t s = 0; s < p; ++s) {
    const T fx = cs[2 * s], fy = cs[2 * s + 1];
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx)), y0 = static_cast<std::int64_t>(std::floor(fy));
    const T ax = fx - T(x0), ay = fy - T(y0);
    for (std::int64_t ch = 0; ch < c; ++ch)
      y[s * c + ch] = (T(1) - ay) * ((T(1) - ax) * corner(images[s], ch, y0, x0) + ax * corner(images[s], ch, y0, x0 + 1)) +
                      ay * ((T(1) - ax) * corner(images[s], ch, y0 + 1, x0) + ax * corner(images[s], ch, y0 + 1, x0 + 1));
  }
  std::vector<int> ims(images.begin(), images.end());
  return make_op<T>("bilinear_sample", {p, c}, std::move(y), {map, coords},
                    [ims = std::move(ims), c, h, w](detail::Node<T>& self) {
                      auto& pm = *self.parents[0];
                      auto& pc = *self.parents[1];
                      const std::int64_t p = static_cast<std::int64_t>(ims.size());
                      auto in = [&](std::int64_t yy, std::int64_t xx) { return yy >= 0 && yy < h && xx >= 0 && xx < w; };
                      for (std::int64_t s = 0; s < p; ++s) {
                        const T fx = pc.value[2 * s], fy = pc.value[2 * s + 1];
                        const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
                        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
                        const T ax = fx - T(x0), ay = fy - T(y0);
                        const std::int64_t base = static_cast<std::int64_t>(ims[s]) * c;
                        const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
                        const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
                        const T wts[4] = {(T(1) - ay) * (T(1) - ax), (T(1) - ay) * ax, ay * (T(1) - ax), ay * ax};
                        T gfx = 0, gfy = 0;
                        for (std::int64_t ch = 0; ch < c; ++ch) {
                          const T g = self.grad[s * c + ch];
                          if (g == T(0)) continue;
                          T v[4];
                          for (int k = 0; k < 4; ++k)
                            v[k] = in(ys[k], xs[k]) ? pm.value[((base + ch) * h + ys[k]) * w + xs[k]] : T(0);
                          if (pm.requires_grad) {
                            auto& gm = pm.grad_buffer();
                            for (int k = 0; k < 4; ++k)
                              if (in(ys[k], xs[k])) gm[((base + ch) * h + ys[k]) * w + xs[k]] += g * wts[k];
                          }
                          gfx += g * ((T(1) - ay) * (v[1] - v[0]) + ay * (v[3] - v[2]));
                          gfy += g * ((T(1) - ax) * (v[2] - v[0]) + ax * (v[3] - v[1]));
                        }
                        if (pc.requires_grad) {
                          auto& gc = pc.grad_buffer();
                          gc[2 * s] += gfx;
                          gc[2 * s + 1] += gfy;
                        }
                      }
                    });
}

#define DAL_INSTANTIATE_OPS(T)                                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                                  \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                   \
  template Tensor<T> exp(const Tensor<T>&);                                                       \
  template Tensor<T> log(const Tensor<T>&);                                                       \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                      \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                          \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                  \
  template Tensor<T> narrow(const Tensor<T>&, int, std::int64_t, std::int64_t);                   \
  template Tensor<T> gather(const Tensor<T>&, int, std::span<const std::int64_t>);                \
  template Tensor<T> scatter_add(const Tensor<T>&, int, std::span<const std::int64_t>, std::int64_t); \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);      \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, \
                                  Tensor<T>&, bool, T, T);                                        \
  template Tensor<T> max_pool2d(const Tensor<T>&, int, int, int);                                 \
  template Tensor<T> softmax(const Tensor<T>&, int);                                              \
  template Tensor<T> upsample_nearest2d(const Tensor<T>&, int);                                   \
  template Tensor<T> bilinear_sample(const Tensor<T>&, std::span<const int>, const Tensor<T>&);

DAL_INSTANTIATE_OPS(float)
DAL_INSTANTIATE_OPS(double)

}  // namespace dal::tc
