#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dal/camerabranch/calib.hpp"
#include "dal/tensorcore/tensor.hpp"

namespace dal::cam {

/// Projections of query points into every view of their sample. Entry s reads
/// feature image `image[s]` at feature-cell coordinates (x, y) for query
/// `query[s]`.
struct ViewSamples {
  std::int64_t queries = 0;
  std::vector<int> image;
  std::vector<double> xy;
  std::vector<std::int64_t> query;
  std::vector<int> visible;  // views per query

  std::int64_t invisible() const;
};

/// Points are in the augmented ego frame; sample[i] picks their calibration.
/// A view counts when the point projects inside the network input image.
ViewSamples project_points(std::span<const Vec3> points, std::span<const int> sample,
                           std::span<const Calibration> calibs, int stride);

/// Bilinear feature at each query, averaged over the views that see it.
/// Queries seen by no view get a zero row. feat is (B*N, C, H, W).
template <class T>
tc::Tensor<T> sample_image_feature(const tc::Tensor<T>& feat, const ViewSamples& samples);

}  // namespace dal::cam
