#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "dal/tensorcore/tensor.hpp"

namespace dal::loss {

struct FocalParams {
  double heatmap_alpha = 2, heatmap_beta = 4;
  double heatmap_clamp = 1e-4;  // sigmoid clamped to [eps, 1 - eps]
  double cls_gamma = 2, cls_alpha = 0.25;
  bool operator==(const FocalParams&) const = default;
};

/// Penalty-reduced Gaussian focal loss over logits of any shape against a
/// target of the same size in [0, 1]; entries equal to 1 are positives.
/// Normalized by max(#positives, 1).
template <class T>
tc::Tensor<T> heatmap_focal_loss(const tc::Tensor<T>& logits, std::span<const T> target, const FocalParams& p = {});

/// Sigmoid focal loss over (N, C) logits. labels[i] in [0, C) sets a one-hot
/// target, -1 an all-zero (background) target. The sum is divided by
/// `normalizer`.
template <class T>
tc::Tensor<T> sigmoid_focal_loss(const tc::Tensor<T>& logits, std::span<const int> labels, double normalizer,
                                 const FocalParams& p = {});

/// Same focal form over the rows of visible GT centres, normalized by their
/// count; zero rows give 0.
template <class T>
tc::Tensor<T> aux_loss(const tc::Tensor<T>& logits, std::span<const int> labels, const FocalParams& p = {});

inline constexpr std::array<double, 10> kCodeWeights{1, 1, 1, 1, 1, 1, 1, 1, 0.2, 0.2};

/// sum_ij w_j |pred_ij - target_ij| / (N * D) for pred (N, D); zero for N = 0.
template <class T>
tc::Tensor<T> weighted_l1(const tc::Tensor<T>& pred, std::span<const T> target, std::span<const double> weights);

struct LossWeights {
  double reg = 0.25;
  bool operator==(const LossWeights&) const = default;
};

/// L = L_aux + (L_heatmap + L_cls + reg * L_reg). Every component must be a
/// finite scalar; a non-finite one raises NumericError naming it.
template <class T>
tc::Tensor<T> total_loss(const tc::Tensor<T>& aux, const tc::Tensor<T>& heatmap, const tc::Tensor<T>& cls,
                         const tc::Tensor<T>& reg, const LossWeights& w = {});

}  // namespace dal::loss
