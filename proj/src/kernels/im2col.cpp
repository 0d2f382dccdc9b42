#include "dal/kernels/im2col.hpp"

#include <algorithm>

namespace dal::kernels {

namespace {

template <class T>
void im2col_channel(const T* image, const ConvGeometry& g, int c, T* columns) {
  const int ho = g.out_height(), wo = g.out_width();
  const T* plane = image + static_cast<long>(c) * g.height * g.width;
  for (int ky = 0; ky < g.kernel; ++ky) {
    for (int kx = 0; kx < g.kernel; ++kx) {
      T* row = columns + (static_cast<long>(c) * g.kernel * g.kernel + ky * g.kernel + kx) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const int iy = oy * g.stride - g.pad + ky;
        T* out = row + static_cast<long>(oy) * wo;
        if (iy < 0 || iy >= g.height) {
          std::fill(out, out + wo, T(0));
          continue;
        }
        const T* in = plane + static_cast<long>(iy) * g.width;
        for (int ox = 0; ox < wo; ++ox) {
          const int ix = ox * g.stride - g.pad + kx;
          out[ox] = (ix >= 0 && ix < g.width) ? in[ix] : T(0);
        }
      }
    }
  }
}

template <class T>
void col2im_channel(const T* columns, const ConvGeometry& g, int c, T* image) {
  const int ho = g.out_height(), wo = g.out_width();
  T* plane = image + static_cast<long>(c) * g.height * g.width;
  for (int ky = 0; ky < g.kernel; ++ky) {
    for (int kx = 0; kx < g.kernel; ++kx) {
      const T* row =
          columns + (static_cast<long>(c) * g.kernel * g.kernel + ky * g.kernel + kx) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.height) continue;
        const T* in = row + static_cast<long>(oy) * wo;
        T* out = plane + static_cast<long>(iy) * g.width;
        for (int ox = 0; ox < wo; ++ox) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix >= 0 && ix < g.width) out[ix] += in[ox];
        }
      }
    }
  }
}

}  // namespace

template <class T>
void im2col(const T* image, const ConvGeometry& g, T* columns, Exec exec) {
  if (exec == Exec::Serial) {
    for (int c = 0; c < g.channels; ++c) im2col_channel(image, g, c, columns);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) im2col_channel(image, g, c, columns);
}

template <class T>
void col2im(const T* columns, const ConvGeometry& g, T* image, Exec exec) {
  // Each channel plane has a single writer, so the parallel path keeps the
  // serial summation order.
  if (exec == Exec::Serial) {
    for (int c = 0; c < g.channels; ++c) col2im_channel(columns, g, c, image);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) col2im_channel(columns, g, c, image);
}

template void im2col(const float*, const ConvGeometry&, float*, Exec);
template void im2col(const double*, const ConvGeometry&, double*, Exec);
template void col2im(const float*, const ConvGeometry&, float*, Exec);
template void col2im(const double*, const ConvGeometry&, double*, Exec);

}  // namespace dal::kernels
