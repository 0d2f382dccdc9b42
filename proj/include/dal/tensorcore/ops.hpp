#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dal/tensorcore/tensor.hpp"

namespace dal::tc {

// Elementwise (identical shapes).
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);

template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> log(const Tensor<T>& x);
/// Gradient is zero where the input was clamped.
template <class T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

// Reductions to a scalar.
template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);

// Layout.
template <class T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& dims);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);
template <class T> Tensor<T> narrow(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length);
/// Selects slices along `axis`; indices may repeat.
template <class T>
Tensor<T> gather(const Tensor<T>& x, int axis, std::span<const std::int64_t> indices);
/// Sums slices of `src` into a zero tensor of extent `size` along `axis`.
template <class T>
Tensor<T> scatter_add(const Tensor<T>& src, int axis, std::span<const std::int64_t> indices,
                      std::int64_t size);

// Layers.
/// x (N, in), weight (out, in), bias (out) or undefined.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
/// x (N, C, H, W), weight (O, C, k, k), bias (O) or undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad);
/// Per-channel normalization over (N, H, W). Training mode uses batch
/// statistics and updates the running buffers in place.
template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                       T momentum = T(0.1), T eps = T(1e-5));
template <class T> Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int pad);
template <class T> Tensor<T> softmax(const Tensor<T>& x, int axis);
template <class T> Tensor<T> upsample_nearest2d(const Tensor<T>& x, int factor);

/// Bilinear lookup into `map` (N, C, H, W). Sample p reads image `images[p]`
/// at `coords[p] = (x, y)` in cell units, integer values being cell centres.
/// Corners outside the map contribute zero. Differentiable in map and coords.
template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& map, std::span<const int> images, const Tensor<T>& coords);

}  // namespace dal::tc
