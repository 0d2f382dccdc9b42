#pragma once

#include "dal/kernels/exec.hpp"

namespace dal::kernels {

struct ConvGeometry {
  int channels, height, width;
  int kernel, stride, pad;
  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

/// Unfolds one CHW image into a (C*k*k, Ho*Wo) matrix; zero padding.
template <class T>
void im2col(const T* image, const ConvGeometry& g, T* columns, Exec exec);

/// Folds columns back, accumulating into `image` (the im2col adjoint).
template <class T>
void col2im(const T* columns, const ConvGeometry& g, T* image, Exec exec);

}  // namespace dal::kernels
