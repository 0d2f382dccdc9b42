#include "dal/camerabranch/sample.hpp"

#include "dal/tensorcore/ops.hpp"

namespace dal::cam {

std::int64_t ViewSamples::invisible() const {
  std::int64_t n = 0;
  for (int v : visible) n += v == 0;
  return n;
}

ViewSamples project_points(std::span<const Vec3> points, std::span<const int> sample,
                           std::span<const Calibration> calibs, int stride) {
  if (points.size() != sample.size()) throw ShapeError("project_points: points and sample indices differ in length");
  ViewSamples s;
  s.queries = static_cast<std::int64_t>(points.size());
  s.visible.assign(points.size(), 0);
  std::vector<Mat3> inv;
  for (const auto& c : calibs) inv.push_back(c.bda.inverse());
  for (std::size_t q = 0; q < points.size(); ++q) {
    const int b = sample[q];
    const auto& calib = calibs[b];
    const Vec3 ego = inv[b] * points[q];
    for (std::size_t v = 0; v < calib.views.size(); ++v) {
      double u, vv, depth;
      if (!calib.views[v].project(ego, u, vv, depth)) continue;
      s.image.push_back(static_cast<int>(b * calib.views.size() + v));
      s.xy.push_back(u / stride - 0.5);
      s.xy.push_back(vv / stride - 0.5);
      s.query.push_back(static_cast<std::int64_t>(q));
      ++s.visible[q];
    }
  }
  return s;
}

template <class T>
tc::Tensor<T> sample_image_feature(const tc::Tensor<T>& feat, const ViewSamples& samples) {
  const std::int64_t C = feat.dim(1);
  if (samples.image.empty()) return tc::Tensor<T>::zeros({samples.queries, C});
  const auto n = static_cast<std::int64_t>(samples.image.size());
  std::vector<T> xy(samples.xy.begin(), samples.xy.end());
  auto vals = tc::bilinear_sample(feat, samples.image, tc::Tensor<T>::from_data({n, 2}, std::move(xy)));
  std::vector<T> w(n * C);
  for (std::int64_t s = 0; s < n; ++s)
    std::fill_n(w.begin() + s * C, C, T(1) / static_cast<T>(samples.visible[samples.query[s]]));
  auto weighted = tc::mul(vals, tc::Tensor<T>::from_data({n, C}, std::move(w)));
  return tc::scatter_add(weighted, 0, samples.query, samples.queries);
}

template tc::Tensor<float> sample_image_feature<float>(const tc::Tensor<float>&, const ViewSamples&);
template tc::Tensor<double> sample_image_feature<double>(const tc::Tensor<double>&, const ViewSamples&);

}  // namespace dal::cam
