#include "dal/losses/assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dal::loss {

double gaussian_radius(double height, double width, double o) {
  const double b1 = height + width, c1 = width * height * (1 - o) / (1 + o);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4 * c1)) / 2;
  const double b2 = 2 * (height + width), c2 = (1 - o) * width * height;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 16 * c2)) / 2;
  const double a3 = 4 * o, b3 = -2 * o * (height + width), c3 = (o - 1) * width * height;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;
  return std::min({r1, r2, r3});
}

std::vector<float> heatmap_targets(std::span<const synth::Box3D> boxes, const BevGrid& grid, int num_classes,
                                   const TargetConfig& config) {
  std::vector<float> hm(static_cast<std::size_t>(num_classes) * grid.nx * grid.ny, 0.f);
  for (const auto& b : boxes) {
    if (b.class_id < 0 || b.class_id >= num_classes) throw ShapeError("heatmap_targets: class id out of range");
    const double fx = (b.center.x - grid.x_min) / grid.cell, fy = (b.center.y - grid.y_min) / grid.cell;
    if (fx < 0 || fy < 0 || fx >= grid.nx || fy >= grid.ny) continue;
    const int cx = static_cast<int>(fx), cy = static_cast<int>(fy);
    const double r = gaussian_radius(b.size.y / grid.cell, b.size.x / grid.cell, config.min_overlap);
    const int radius = std::max(config.min_radius, static_cast<int>(r));
    const double sigma = (2 * radius + 1) / 6.0;
    float* plane = hm.data() + static_cast<std::size_t>(b.class_id) * grid.nx * grid.ny;
    for (int dx = -radius; dx <= radius; ++dx)
      for (int dy = -radius; dy <= radius; ++dy) {
        const int ix = cx + dx, iy = cy + dy;
        if (ix < 0 || iy < 0 || ix >= grid.nx || iy >= grid.ny) continue;
        double g = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
        if (g < std::numeric_limits<double>::epsilon()) g = 0;
        float& cell = plane[ix * grid.ny + iy];
        cell = std::max(cell, static_cast<float>(g));
      }
  }
  return hm;
}

std::vector<int> hungarian(const std::vector<double>& a, int n, int m) {
  if (n > m) throw ConfigError("hungarian: more rows than columns");
  if (static_cast<int>(a.size()) != n * m) throw ShapeError("hungarian: cost size mismatch");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(m + 1, 0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j)
        if (!used[j]) {
          const double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (int j = 0; j <= m; ++j)
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j]) col[p[j] - 1] = j - 1;
  return col;
}

std::vector<double> match_cost(std::span<const fh::Proposal> proposals, std::span<const float> cls_logits,
                               std::span<const float> codes, int num_classes, std::span<const synth::Box3D> gts,
                               const BevGrid& grid, const MatchConfig& config) {
  const std::size_t K = proposals.size(), M = gts.size();
  if (cls_logits.size() != K * num_classes || codes.size() != K * fh::kCodeSize)
    throw ShapeError("match_cost: prediction sizes do not match the proposals");
  std::vector<double> cost(M * K);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) {
      const auto target = fh::encode_box(gts[m], proposals[k].ix, proposals[k].iy, grid);
      double l1 = 0;
      for (int c = 0; c < fh::kCodeSize; ++c) l1 += std::abs(codes[k * fh::kCodeSize + c] - target[c]);
      const double prob = 1 / (1 + std::exp(-static_cast<double>(cls_logits[k * num_classes + gts[m].class_id])));
      cost[m * K + k] = config.cls_weight * (1 - prob) + config.reg_weight * l1 / fh::kCodeSize;
    }
  return cost;
}

Assignment match_proposals(std::span<const fh::Proposal> proposals, std::span<const float> cls_logits,
                           std::span<const float> codes, int num_classes, std::span<const synth::Box3D> gts,
                           const BevGrid& grid, const MatchConfig& config) {
  const int K = static_cast<int>(proposals.size()), M = static_cast<int>(gts.size());
  if (M > K)
    throw ConfigError("match_proposals: " + std::to_string(M) + " ground-truth boxes but only " + std::to_string(K) +
                      " proposals; increase top_k");
  Assignment a;
  a.gt_of_proposal.assign(K, -1);
  if (M == 0) return a;
  a.proposal_of_gt = hungarian(match_cost(proposals, cls_logits, codes, num_classes, gts, grid, config), M, K);
  for (int m = 0; m < M; ++m) a.gt_of_proposal[a.proposal_of_gt[m]] = m;
  return a;
}

void append_sparse_targets(SparseTargets& out, std::int64_t row_offset, std::span<const fh::Proposal> proposals,
                           const Assignment& assignment, std::span<const synth::Box3D> gts, const BevGrid& grid) {
  if (assignment.gt_of_proposal.size() != proposals.size()) throw ShapeError("sparse targets: assignment size mismatch");
  if (static_cast<std::int64_t>(out.labels.size()) != row_offset) throw ShapeError("sparse targets: rows out of order");
  for (std::size_t k = 0; k < proposals.size(); ++k) {
    const int m = assignment.gt_of_proposal[k];
    out.labels.push_back(m < 0 ? -1 : gts[m].class_id);
    if (m < 0) continue;
    out.matched_rows.push_back(row_offset + static_cast<std::int64_t>(k));
    const auto code = fh::encode_box(gts[m], proposals[k].ix, proposals[k].iy, grid);
    out.reg_targets.insert(out.reg_targets.end(), code.begin(), code.end());
  }
}

}  // namespace dal::loss
