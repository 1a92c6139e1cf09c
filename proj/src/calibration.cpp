#include "owlsnm/calibration.hpp"

#include <algorithm>
#include <cmath>

namespace owlsnm {

void ClassConditional::validate() const {
  double sum = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0)) {
      throw std::invalid_argument("class conditional: negative probability");
    }
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("class conditional: must sum to 1");
  }
}

PredictionSet bayes_top_k(const ClassConditional& alpha, int k) {
  alpha.validate();
  const std::int32_t K = alpha.size();
  if (k < 1 || k >= K) {
    throw std::invalid_argument("bayes_top_k: need 1 <= k < K");
  }
  std::vector<double> sorted(alpha.alpha);
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(),
                   std::greater<>());
  const double at_k = sorted[k - 1];
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end(),
                   std::greater<>());
  if (!(at_k > sorted[k])) {
    throw std::invalid_argument("bayes_top_k: tie at rank k");
  }
  return top_k(alpha.alpha, k);
}

double psi(LossKind kind, const PhiSpec& phi, const WeightVector& theta,
           const ClassConditional& alpha, std::span<const double> v) {
  alpha.validate();
  if (static_cast<std::size_t>(alpha.size()) != v.size()) {
    throw std::invalid_argument("psi: |alpha| must equal |v|");
  }
  double total = 0.0;
  for (std::int32_t i = 1; i <= alpha.size(); ++i) {
    if (alpha.alpha[i - 1] == 0.0) continue;
    total += alpha.alpha[i - 1] * eval_owl(kind, phi, theta, v, i);
  }
  return total;
}

bool check_condition3(const ClassConditional& alpha, const WeightVector& theta,
                      int k) {
  alpha.validate();
  const std::int32_t K = alpha.size();
  if (theta.size() != static_cast<std::size_t>(K - 1)) {
    throw std::invalid_argument("check_condition3: |theta| must be K-1");
  }
  if (k < 1 || k >= K) {
    throw std::invalid_argument("check_condition3: need 1 <= k < K");
  }
  std::vector<double> sorted(alpha.alpha);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double a_k = sorted[k - 1];
  double tail_alpha = 0.0;
  double tail_theta = 0.0;
  for (int m = k + 1; m <= K - 1; ++m) {
    tail_alpha += sorted[m - 1];
    tail_theta += theta[m - 1];
    if (tail_theta <= 0.0) {
      if (tail_alpha > 0.0) return false;
      continue;  // no tail mass yet, nothing to dominate
    }
    if (!(a_k > tail_alpha / (k * tail_theta))) return false;
  }
  return true;
}

namespace {

std::vector<double> grad_psi(LossKind kind, const PhiSpec& phi,
                             const WeightVector& theta,
                             const ClassConditional& alpha,
                             std::span<const double> v) {
  std::vector<double> g(v.size(), 0.0);
  for (std::int32_t i = 1; i <= alpha.size(); ++i) {
    const double a = alpha.alpha[i - 1];
    if (a == 0.0) continue;
    const auto gi = grad_owl(kind, phi, theta, v, i);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += a * gi[c];
  }
  return g;
}

}  // namespace

std::vector<double> minimize_psi(LossKind kind, const PhiSpec& phi,
                                 const WeightVector& theta,
                                 const ClassConditional& alpha,
                                 const MinimizeOptions& opts) {
  alpha.validate();
  const std::int32_t K = alpha.size();
  const double R = opts.box_radius;
  const auto clamp_box = [R](double x) { return std::clamp(x, -R, R); };

  std::vector<double> v(K, 0.0);
  std::vector<double> trial(K);
  double fv = psi(kind, phi, theta, alpha, v);
  double step = 1.0;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const auto g = grad_psi(kind, phi, theta, alpha, v);
    // Projected-gradient residual: |g| in the interior, 0 at an active
    // bound that the gradient pushes against.
    double residual = 0.0;
    for (std::int32_t c = 0; c < K; ++c) {
      residual = std::max(residual, std::abs(v[c] - clamp_box(v[c] - g[c])));
    }
    if (residual <= opts.grad_tol) return v;

    bool moved = false;
    while (step > 1e-18) {
      double decrease = 0.0;  // <g, v - trial>
      for (std::int32_t c = 0; c < K; ++c) {
        trial[c] = clamp_box(v[c] - step * g[c]);
        decrease += g[c] * (v[c] - trial[c]);
      }
      const double ft = psi(kind, phi, theta, alpha, trial);
      if (ft <= fv - 1e-4 * decrease) {
        v.swap(trial);
        fv = ft;
        step *= 2.0;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) throw ConvergenceError(std::move(v), residual);
  }
  const auto g = grad_psi(kind, phi, theta, alpha, v);
  double residual = 0.0;
  for (std::int32_t c = 0; c < K; ++c) {
    residual = std::max(residual, std::abs(v[c] - clamp_box(v[c] - g[c])));
  }
  throw ConvergenceError(std::move(v), residual);
}

ClassConditional random_class_conditional(std::int32_t K, int k, Rng& rng,
                                          double min_gap) {
  if (k < 1 || k >= K) {
    throw std::invalid_argument("random_class_conditional: need 1 <= k < K");
  }
  ClassConditional cc;
  cc.alpha.resize(K);
  std::vector<double> sorted(K);
  while (true) {
    double sum = 0.0;
    for (double& a : cc.alpha) {
      a = rng.exponential();  // Dirichlet(1) via normalized exponentials
      sum += a;
    }
    for (double& a : cc.alpha) a /= sum;
    sorted = cc.alpha;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    if (sorted[k - 1] - sorted[k] >= min_gap) return cc;
  }
}

SweepReport calibration_sweep(LossKind kind, const PhiSpec& phi,
                              const WeightVector& theta, int k, int n_trials,
                              Rng& rng, const MinimizeOptions& opts,
                              double retry_grad_tol) {
  const auto K = static_cast<std::int32_t>(theta.size() + 1);
  if (K > 8) {
    throw std::invalid_argument("calibration_sweep: intended for K <= 8");
  }
  SweepReport rep;
  for (int trial = 0; trial < n_trials; ++trial) {
    Rng trial_rng = rng.split(trial);
    ClassConditional cc;
    while (true) {
      cc = random_class_conditional(K, k, trial_rng);
      ++rep.draws;
      if (check_condition3(cc, theta, k)) break;
      ++rep.condition_violations;
    }
    ++rep.trials;
    const auto bayes = bayes_top_k(cc, k);
    const auto v = minimize_psi(kind, phi, theta, cc, opts);
    if (top_k(v, k).classes == bayes.classes) {
      ++rep.agreements;
    } else {
      ++rep.disagreements;
      rep.disagreeing_alphas.push_back(cc.alpha);
      MinimizeOptions tight = opts;
      tight.grad_tol = retry_grad_tol;
      const auto v2 = minimize_psi(kind, phi, theta, cc, tight);
      if (top_k(v2, k).classes != bayes.classes) {
        ++rep.disagreements_after_retry;
      }
    }
  }
  return rep;
}

}  // namespace owlsnm
