#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "owlsnm/owl.hpp"
#include "owlsnm/phi.hpp"
#include "owlsnm/retrieval.hpp"
#include "owlsnm/rng.hpp"

namespace owlsnm {

// A class-conditional distribution over K classes.
struct ClassConditional {
  std::vector<double> alpha;

  std::int32_t size() const { return static_cast<std::int32_t>(alpha.size()); }

  // Entries >= 0, sum to 1 within 1e-12.
  void validate() const;
};

// Top_k of the class probabilities: the risk-minimizing prediction set.
// Throws std::invalid_argument on an exact tie at rank k, which would make
// the minimizer ambiguous.
PredictionSet bayes_top_k(const ClassConditional& alpha, int k);

// Conditional surrogate risk: sum_i alpha_i * loss(v, i).
double psi(LossKind kind, const PhiSpec& phi, const WeightVector& theta,
           const ClassConditional& alpha, std::span<const double> v);

// The tail condition coupling alpha and theta:
//   alpha_[k] > (sum_{l=k+1..m} alpha_[l]) / (k * sum_{j=k+1..m} theta_j)
// for every m in (k, K-1]. A zero denominator with positive tail mass
// makes the condition false.
bool check_condition3(const ClassConditional& alpha, const WeightVector& theta,
                      int k);

struct MinimizeOptions {
  double grad_tol = 1e-8;
  int max_iters = 2000000;
  double box_radius = 50.0;  // coordinates clamped to [-R, R]
};

struct ConvergenceError : std::runtime_error {
  ConvergenceError(std::vector<double> best, double residual)
      : std::runtime_error("minimize_psi: no convergence within max_iters"),
        best_iterate(std::move(best)),
        grad_inf_norm(residual) {}
  std::vector<double> best_iterate;
  double grad_inf_norm;
};

// Projected gradient descent with backtracking line search from v = 0,
// stopping when the projected gradient residual drops below grad_tol.
// The box keeps the probe well-posed for surrogates whose infimum sits at
// infinity; conclusions are drawn from the minimizer's top-k set only.
std::vector<double> minimize_psi(LossKind kind, const PhiSpec& phi,
                                 const WeightVector& theta,
                                 const ClassConditional& alpha,
                                 const MinimizeOptions& opts = {});

struct SweepReport {
  int draws = 0;                      // alpha draws that met the gap
  int condition_violations = 0;       // excluded by the tail condition
  int trials = 0;                     // minimizations run
  int agreements = 0;
  int disagreements = 0;
  int disagreements_after_retry = 0;  // still wrong at retry_grad_tol
  std::vector<std::vector<double>> disagreeing_alphas;
};

// Draws random class-conditionals (symmetric Dirichlet(1), rejected until
// the rank-k uniqueness gap is at least 1e-2 and the tail condition
// holds), minimizes psi, and counts how often the minimizer's top-k set
// equals the Bayes set. Disagreements are re-run at retry_grad_tol.
SweepReport calibration_sweep(LossKind kind, const PhiSpec& phi,
                              const WeightVector& theta, int k, int n_trials,
                              Rng& rng, const MinimizeOptions& opts = {},
                              double retry_grad_tol = 1e-10);

// One Dirichlet(1) draw meeting the uniqueness gap at rank k.
ClassConditional random_class_conditional(std::int32_t K, int k, Rng& rng,
                                          double min_gap = 1e-2);

}  // namespace owlsnm
