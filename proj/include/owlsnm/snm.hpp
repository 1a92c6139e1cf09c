#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "owlsnm/owl.hpp"
#include "owlsnm/phi.hpp"
#include "owlsnm/rng.hpp"

namespace owlsnm {

// Parameters of the sampled loss estimator: draw B negatives uniformly
// without replacement, sort their scores, weigh rank j by vartheta_j.
struct SnmConfig {
  int B = 1;
  WeightVector vartheta;  // length B, non-negative, non-increasing
  LossKind kind = LossKind::powl;
  int k = 1;  // retrieval size

  // Checks k <= B <= K-1 plus the vartheta shape invariants.
  void validate(std::int32_t K) const;
};

// Reads one class score by 1-based id. Used where scores are produced on
// demand (e.g. by a model) instead of materialized as a vector; also lets
// tests count exactly which scores an estimator touches.
using ScoreFn = std::function<double(std::int32_t)>;

// Uniformly random size-B subset of [K] \ {y}, sampled without
// replacement via partial Fisher-Yates over the index range (O(B) memory).
std::vector<std::int32_t> snm_sample(const SnmConfig& cfg, std::int32_t K,
                                     std::int32_t y, Rng& rng);

struct SnmDraw {
  double value = 0.0;
  std::vector<std::int32_t> sample;
};

// Sparse estimator gradient: entries cover exactly {y} + sample (sorted by
// class id, zeros kept), so one draw touches B+1 scores no matter how
// large K is.
struct SnmGrad {
  double value = 0.0;
  std::vector<std::pair<std::int32_t, double>> entries;
  std::vector<std::int32_t> sample;
};

// Estimator value on a given negative sample (no randomness).
double snm_loss_on(const SnmConfig& cfg, const PhiSpec& phi,
                   const ScoreFn& score, std::int32_t y,
                   std::span<const std::int32_t> sample);
SnmGrad snm_grad_on(const SnmConfig& cfg, const PhiSpec& phi,
                    const ScoreFn& score, std::int32_t y,
                    std::span<const std::int32_t> sample);

// One randomized draw of the estimator (Algorithm: sample, sort, weigh).
SnmDraw snm_loss(const SnmConfig& cfg, const PhiSpec& phi,
                 std::span<const double> v, std::int32_t y, Rng& rng);
SnmDraw snm_loss(const SnmConfig& cfg, const PhiSpec& phi, std::int32_t K,
                 const ScoreFn& score, std::int32_t y, Rng& rng);
SnmGrad snm_grad(const SnmConfig& cfg, const PhiSpec& phi,
                 std::span<const double> v, std::int32_t y, Rng& rng);
SnmGrad snm_grad(const SnmConfig& cfg, const PhiSpec& phi, std::int32_t K,
                 const ScoreFn& score, std::int32_t y, Rng& rng);

// The weight vector theta (length K-1) of the full-rank loss whose value
// equals the estimator's expectation over samples:
//
//   theta_j = B/(K-1) * sum_i vartheta_i * C(j-1,i-1) C(K-1-j,B-i) / C(K-2,B-1)
//
// i.e. vartheta averaged against the hypergeometric probability that the
// rank-j negative, given it is sampled, lands at within-sample rank i.
// Exact integer binomials are used for K <= 64; larger K switches to
// log-space evaluation, overflow-safe up to K ~ 1e7.
WeightVector induced_theta(const SnmConfig& cfg, std::int32_t K);

namespace detail {
// The two evaluation paths, exposed so they can be cross-checked.
WeightVector induced_theta_exact(const SnmConfig& cfg, std::int32_t K);
WeightVector induced_theta_log(const SnmConfig& cfg, std::int32_t K);
}  // namespace detail

// Exact expectation of the estimator: averages snm_loss_on over all
// C(K-1, B) subsets. Enumeration oracle for small instances only; throws
// std::length_error when C(K-1, B) > 1e6.
double exact_expected_loss(const SnmConfig& cfg, const PhiSpec& phi,
                           std::span<const double> v, std::int32_t y);

// vartheta_j = (K-1)/(kB) for j <= k, 0 after: the top-k mining weights.
WeightVector make_topk_vartheta(std::int32_t K, int B, int k);

// vartheta_j = (K-1)/(kB) for every j: plain negative sampling.
WeightVector make_negsample_vartheta(std::int32_t K, int B, int k);

// vartheta_j proportional to j^-alpha, scaled to the negative-sampling
// mass ||vartheta||_1 = (K-1)/k.
WeightVector make_powerlaw_vartheta(std::int32_t K, int B, int k,
                                    double alpha);

// Compiles a strategy token to a vartheta: "topk" / "topk:<k'>",
// "negsample", "powerlaw:<alpha>", "custom:<w1,w2,...>" (length B).
WeightVector vartheta_from_strategy(const std::string& token, std::int32_t K,
                                    int B, int k);

}  // namespace owlsnm
