#include "dal/camerabranch/lift_splat.hpp"

#include <algorithm>
#include <numeric>

#include "dal/common/error.hpp"

namespace dal::cam {

using tc::Tensor;

void Frustum::check(const Calibration& calib) const {
  if (calib.fingerprint() != calib_fingerprint || static_cast<int>(calib.views.size()) != views)
    throw ShapeError("lift_splat: frustum was built for a different calibration");
}

Frustum build_frustum(const Calibration& calib, const BevGrid& grid, const DepthBins& bins, int feat_h, int feat_w,
                      int stride, kernels::Exec exec) {
  bins.validate();
  Frustum f;
  f.views = static_cast<int>(calib.views.size());
  f.depth_bins = bins.count;
  f.feat_h = feat_h;
  f.feat_w = feat_w;
  f.nx = grid.nx;
  f.ny = grid.ny;
  f.calib_fingerprint = calib.fingerprint();
  const std::int64_t n = static_cast<std::int64_t>(f.views) * bins.count * feat_h * feat_w;
  f.point_cell.resize(n);
#pragma omp parallel for schedule(static) if (exec == kernels::Exec::Parallel)
  for (std::int64_t p = 0; p < n; ++p) {
    const int w = static_cast<int>(p % feat_w);
    const int h = static_cast<int>((p / feat_w) % feat_h);
    const int d = static_cast<int>((p / (static_cast<std::int64_t>(feat_w) * feat_h)) % bins.count);
    const int v = static_cast<int>(p / (static_cast<std::int64_t>(feat_w) * feat_h * bins.count));
    const Vec3 q = frustum_point(calib, v, h, w, d, stride, bins);
    f.point_cell[p] = static_cast<std::int32_t>(grid.cell_of(q.x, q.y, q.z));
  }
  for (std::int64_t p = 0; p < n; ++p)
    if (f.point_cell[p] >= 0) f.ranks.push_back(static_cast<std::int32_t>(p));
  std::stable_sort(f.ranks.begin(), f.ranks.end(),
                   [&](std::int32_t a, std::int32_t b) { return f.point_cell[a] < f.point_cell[b]; });
  for (std::size_t r = 0; r < f.ranks.size(); ++r)
    if (r == 0 || f.point_cell[f.ranks[r]] != f.point_cell[f.ranks[r - 1]]) {
      f.interval_begin.push_back(static_cast<std::int32_t>(r));
      f.interval_cell.push_back(f.point_cell[f.ranks[r]]);
    }
  f.interval_begin.push_back(static_cast<std::int32_t>(f.ranks.size()));
  return f;
}

namespace {

template <class T>
void check_inputs(const char* op, const Tensor<T>& feat, const Tensor<T>& depth, std::int64_t batch, int views) {
  if (feat.ndim() != 4 || depth.ndim() != 4 || feat.dim(0) != depth.dim(0) || feat.dim(2) != depth.dim(2) ||
      feat.dim(3) != depth.dim(3) || feat.dim(0) != batch * views)
    throw ShapeError(std::string(op) + ": incompatible feat " + tc::to_string(feat.shape()) + " and depth " +
                     tc::to_string(depth.shape()) + " for " + std::to_string(batch) + " samples of " +
                     std::to_string(views) + " views");
}

}  // namespace

template <class T>
Tensor<T> lift_splat(const Tensor<T>& feat, const Tensor<T>& depth, std::span<const Frustum> frusta,
                     kernels::Exec exec) {
  if (frusta.empty()) throw ShapeError("lift_splat: no frustum");
  const auto batch = static_cast<std::int64_t>(frusta.size());
  const Frustum& f0 = frusta.front();
  check_inputs("lift_splat", feat, depth, batch, f0.views);
  for (const auto& f : frusta)
    if (f.views != f0.views || f.depth_bins != depth.dim(1) || f.feat_h != feat.dim(2) || f.feat_w != feat.dim(3) ||
        f.nx != f0.nx || f.ny != f0.ny)
      throw ShapeError("lift_splat: frustum does not match feature " + tc::to_string(feat.shape()) + " / depth " +
                       tc::to_string(depth.shape()));
  const std::int64_t C = feat.dim(1), H = feat.dim(2), W = feat.dim(3), D = depth.dim(1), V = f0.views;
  const std::int64_t HW = H * W, cells = static_cast<std::int64_t>(f0.nx) * f0.ny;
  std::vector<T> out(batch * C * cells, T(0));
  const T* fv = feat.data().data();
  const T* dv = depth.data().data();
  for (std::int64_t b = 0; b < batch; ++b) {
    const Frustum& f = frusta[b];
    const std::int64_t n_int = f.intervals();
#pragma omp parallel if (exec == kernels::Exec::Parallel)
    {
      std::vector<T> acc(C);
#pragma omp for schedule(static)
      for (std::int64_t i = 0; i < n_int; ++i) {
        std::fill(acc.begin(), acc.end(), T(0));
        for (std::int32_t r = f.interval_begin[i]; r < f.interval_begin[i + 1]; ++r) {
          const std::int64_t p = f.ranks[r];
          const std::int64_t pix = p % HW, vd = p / HW, v = vd / D;
          const T wgt = dv[b * V * D * HW + p];
          const T* src = fv + ((b * V + v) * C) * HW + pix;
          for (std::int64_t c = 0; c < C; ++c) acc[c] += wgt * src[c * HW];
        }
        T* dst = out.data() + b * C * cells + f.interval_cell[i];
        for (std::int64_t c = 0; c < C; ++c) dst[c * cells] = acc[c];
      }
    }
  }
  std::vector<Frustum> keep(frusta.begin(), frusta.end());
  return tc::make_op<T>(
      "lift_splat", {batch, C, f0.nx, f0.ny}, std::move(out), {feat, depth},
      [keep = std::move(keep), C, H, W, D, V, cells, exec](tc::detail::Node<T>& self) {
        auto& fn = *self.parents[0];
        auto& dn = *self.parents[1];
        const std::int64_t HW = H * W;
        T* gf = fn.requires_grad ? fn.grad_buffer().data() : nullptr;
        T* gd = dn.requires_grad ? dn.grad_buffer().data() : nullptr;
        const T* g = self.grad.data();
        const std::int64_t batch = static_cast<std::int64_t>(keep.size());
        // One task per (sample, view, pixel): it owns that pixel's feature
        // column and its D depth entries.
        const std::int64_t tasks = batch * V * HW;
#pragma omp parallel for schedule(static) if (exec == kernels::Exec::Parallel)
        for (std::int64_t t = 0; t < tasks; ++t) {
          const std::int64_t pix = t % HW, v = (t / HW) % V, b = t / (HW * V);
          const Frustum& f = keep[b];
          const T* fcol = fn.value.data() + ((b * V + v) * C) * HW + pix;
          for (std::int64_t d = 0; d < D; ++d) {
            const std::int64_t p = (v * D + d) * HW + pix;
            const std::int32_t cell = f.point_cell[p];
            if (cell < 0) continue;
            const T* gcol = g + b * C * cells + cell;
            const std::int64_t di = b * V * D * HW + p;
            if (gd) {
              T s = 0;
              for (std::int64_t c = 0; c < C; ++c) s += gcol[c * cells] * fcol[c * HW];
              gd[di] += s;
            }
            if (gf) {
              const T w = dn.value[di];
              T* gcf = gf + ((b * V + v) * C) * HW + pix;
              for (std::int64_t c = 0; c < C; ++c) gcf[c * HW] += w * gcol[c * cells];
            }
          }
        }
      });
}

template <class T>
Tensor<T> lift_splat_oracle(const Tensor<T>& feat, const Tensor<T>& depth, std::span<const Calibration> calibs,
                            const BevGrid& grid, const DepthBins& bins, int stride) {
  const auto batch = static_cast<std::int64_t>(calibs.size());
  if (batch == 0) throw ShapeError("lift_splat_oracle: no calibration");
  const int V = static_cast<int>(calibs.front().views.size());
  check_inputs("lift_splat_oracle", feat, depth, batch, V);
  if (depth.dim(1) != bins.count) throw ShapeError("lift_splat_oracle: depth bins mismatch");
  const std::int64_t C = feat.dim(1), H = feat.dim(2), W = feat.dim(3), D = bins.count, cells = grid.cells();
  std::vector<T> out(batch * C * cells, T(0));
  auto fidx = [=](std::int64_t b, std::int64_t v, std::int64_t c, std::int64_t h, std::int64_t w) {
    return (((b * V + v) * C + c) * H + h) * W + w;
  };
  auto didx = [=](std::int64_t b, std::int64_t v, std::int64_t d, std::int64_t h, std::int64_t w) {
    return (((b * V + v) * D + d) * H + h) * W + w;
  };
  for (std::int64_t b = 0; b < batch; ++b)
    for (int v = 0; v < V; ++v)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int d = 0; d < D; ++d) {
            const Vec3 q = frustum_point(calibs[b], v, h, w, d, stride, bins);
            const std::int64_t cell = grid.cell_of(q.x, q.y, q.z);
            if (cell < 0) continue;
            for (std::int64_t c = 0; c < C; ++c)
              out[(b * C + c) * cells + cell] += depth.at(didx(b, v, d, h, w)) * feat.at(fidx(b, v, c, h, w));
          }
  std::vector<Calibration> keep(calibs.begin(), calibs.end());
  return tc::make_op<T>("lift_splat_oracle", {batch, C, grid.nx, grid.ny}, std::move(out), {feat, depth},
                        [=](tc::detail::Node<T>& self) {
                          auto& fn = *self.parents[0];
                          auto& dn = *self.parents[1];
                          for (std::int64_t b = 0; b < batch; ++b)
                            for (int v = 0; v < V; ++v)
                              for (int h = 0; h < H; ++h)
                                for (int w = 0; w < W; ++w)
                                  for (int d = 0; d < D; ++d) {
                                    const Vec3 q = frustum_point(keep[b], v, h, w, d, stride, bins);
                                    const std::int64_t cell = grid.cell_of(q.x, q.y, q.z);
                                    if (cell < 0) continue;
                                    for (std::int64_t c = 0; c < C; ++c) {
                                      const T g = self.grad[(b * C + c) * cells + cell];
                                      if (dn.requires_grad)
                                        dn.grad_buffer()[didx(b, v, d, h, w)] += g * fn.value[fidx(b, v, c, h, w)];
                                      if (fn.requires_grad)
                                        fn.grad_buffer()[fidx(b, v, c, h, w)] += g * dn.value[didx(b, v, d, h, w)];
                                    }
                                  }
                        });
}

#define DAL_INSTANTIATE(T)                                                                                          \
  template Tensor<T> lift_splat<T>(const Tensor<T>&, const Tensor<T>&, std::span<const Frustum>, kernels::Exec);     \
  template Tensor<T> lift_splat_oracle<T>(const Tensor<T>&, const Tensor<T>&, std::span<const Calibration>,         \
                                          const BevGrid&, const DepthBins&, int);
DAL_INSTANTIATE(float)
DAL_INSTANTIATE(double)
#undef DAL_INSTANTIATE

}  // namespace dal::cam
