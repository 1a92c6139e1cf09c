#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "owlsnm/phi.hpp"

namespace owlsnm {

// Pairwise vs binary form of the ordered weighted loss.
enum class LossKind { powl, bowl };

LossKind parse_loss_kind(const std::string& token);
const char* loss_kind_name(LossKind kind);

enum class WeightRole { theta, vartheta };

// Non-negative weights over ranked negatives: a theta has length K-1 and
// weighs every negative rank; a vartheta has length B and weighs ranks
// within a sampled batch. Convexity additionally needs non-increasing
// entries.
struct WeightVector {
  std::vector<double> weights;
  WeightRole role = WeightRole::theta;

  static WeightVector theta(std::vector<double> w) {
    return {std::move(w), WeightRole::theta};
  }
  static WeightVector vartheta(std::vector<double> w) {
    return {std::move(w), WeightRole::vartheta};
  }

  std::size_t size() const { return weights.size(); }
  double operator[](std::size_t i) const { return weights[i]; }

  bool non_negative() const;
  bool non_increasing() const;
};

// Negatives of v (all coordinates except class y) ranked by descending
// score, ties broken by ascending class id. Returns the first m ranks as
// (class id, score) pairs; m may be less than K-1, in which case only a
// partial selection is performed.
std::vector<std::pair<std::int32_t, double>> ranked_negatives(
    std::span<const double> v, std::int32_t y, std::size_t m);

// POWL:  sum_j theta_j phi(v_y - v^{-y}_[j])
// BOWL:  phi(v_y) + sum_j theta_j phi(-v^{-y}_[j])
// Requires |theta| == K-1 and y in [1, K]. Trailing zeros in theta are
// skipped, so a theta supported on its first m ranks costs a top-m
// selection rather than a full sort.
double eval_owl(LossKind kind, const PhiSpec& phi, const WeightVector& theta,
                std::span<const double> v, std::int32_t y);

// Subgradient of eval_owl with respect to v (length K). At sorting ties
// the same deterministic rank assignment as eval_owl is used, which
// selects one valid subgradient.
std::vector<double> grad_owl(LossKind kind, const PhiSpec& phi,
                             const WeightVector& theta,
                             std::span<const double> v, std::int32_t y);

struct Norms {
  double l1 = 0.0;
  double l2 = 0.0;
};

Norms theta_norms(const WeightVector& theta);

// True iff theta_j == 1/k for all j in [k], within absolute tolerance
// 1e-12 (the premise of the surrogate-loss guarantee).
bool is_surrogate_premise(const WeightVector& theta, int k);

}  // namespace owlsnm
