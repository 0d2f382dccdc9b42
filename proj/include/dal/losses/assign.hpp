#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dal/common/bev_grid.hpp"
#include "dal/fusionhead/head.hpp"
#include "dal/synthio/world.hpp"

namespace dal::loss {

struct TargetConfig {
  double min_overlap = 0.1;
  int min_radius = 2;
  bool operator==(const TargetConfig&) const = default;
};

/// CenterPoint radius for a footprint of `length` x `width` cells.
double gaussian_radius(double length, double width, double min_overlap);

/// (C, X, Y) target: per box a Gaussian of radius max(min_radius,
/// floor(gaussian_radius)) and sigma = (2r + 1) / 6 around its centre cell,
/// peak exactly 1, overlaps combined by max. Boxes outside the grid are
/// skipped.
std::vector<float> heatmap_targets(std::span<const synth::Box3D> boxes, const BevGrid& grid, int num_classes,
                                   const TargetConfig& config = {});

/// Minimum-cost assignment of every row to a distinct column of a rows x
/// cols matrix (rows <= cols). Returns the column of each row. Among equal
/// costs the earliest column wins.
std::vector<int> hungarian(const std::vector<double>& cost, int rows, int cols);

struct MatchConfig {
  double cls_weight = 1.0, reg_weight = 0.25;
  bool operator==(const MatchConfig&) const = default;
};

/// cost(m, k) = cls_weight * (1 - sigmoid(cls_logits[k][class_m])) +
/// reg_weight * mean |code_k - encode(gt_m, cell_k)|.
std::vector<double> match_cost(std::span<const fh::Proposal> proposals, std::span<const float> cls_logits,
                               std::span<const float> codes, int num_classes, std::span<const synth::Box3D> gts,
                               const BevGrid& grid, const MatchConfig& config = {});

/// proposal_of_gt[m] = matched proposal; gt_of_proposal[k] = GT or -1.
struct Assignment {
  std::vector<int> proposal_of_gt;
  std::vector<int> gt_of_proposal;
};

/// Throws ConfigError when there are more GTs than proposals.
Assignment match_proposals(std::span<const fh::Proposal> proposals, std::span<const float> cls_logits,
                           std::span<const float> codes, int num_classes, std::span<const synth::Box3D> gts,
                           const BevGrid& grid, const MatchConfig& config = {});

/// Classification labels and regression targets of a batch whose proposals
/// are stacked sample after sample.
struct SparseTargets {
  std::vector<int> labels;                  // per proposal row, -1 = unmatched
  std::vector<std::int64_t> matched_rows;   // rows with a GT, ascending per sample
  std::vector<double> reg_targets;          // kCodeSize per matched row
  int matched() const { return static_cast<int>(matched_rows.size()); }
};

/// Appends one sample: its proposals occupy rows [row_offset, row_offset + K).
void append_sparse_targets(SparseTargets& out, std::int64_t row_offset, std::span<const fh::Proposal> proposals,
                           const Assignment& assignment, std::span<const synth::Box3D> gts, const BevGrid& grid);

}  // namespace dal::loss
