#include "owlsnm/owl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace owlsnm {

namespace {

void check_args(const WeightVector& theta, std::span<const double> v,
                std::int32_t y, const char* who) {
  const std::size_t K = v.size();
  if (K < 2) {
    throw std::invalid_argument(std::string(who) + ": need at least 2 classes");
  }
  if (theta.size() != K - 1) {
    throw std::invalid_argument(std::string(who) + ": |theta| must be K-1");
  }
  if (y < 1 || static_cast<std::size_t>(y) > K) {
    throw std::invalid_argument(std::string(who) + ": class id out of range");
  }
  for (double s : v) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument(std::string(who) + ": non-finite score");
    }
  }
}

// Number of leading ranks actually weighted (trailing zero block skipped).
std::size_t support_len(const WeightVector& theta) {
  std::size_t m = theta.size();
  while (m > 0 && theta[m - 1] == 0.0) --m;
  return m;
}

bool rank_before(const std::pair<std::int32_t, double>& a,
                 const std::pair<std::int32_t, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

}  // namespace

LossKind parse_loss_kind(const std::string& token) {
  if (token == "powl" || token == "POWL") return LossKind::powl;
  if (token == "bowl" || token == "BOWL") return LossKind::bowl;
  throw std::invalid_argument("unknown loss kind: " + token);
}

const char* loss_kind_name(LossKind kind) {
  return kind == LossKind::powl ? "powl" : "bowl";
}

bool WeightVector::non_negative() const {
  for (double w : weights) {
    if (!(w >= 0.0)) return false;
  }
  return true;
}

bool WeightVector::non_increasing() const {
  for (std::size_t i = 1; i < weights.size(); ++i) {
    if (weights[i] > weights[i - 1]) return false;
  }
  return true;
}

std::vector<std::pair<std::int32_t, double>> ranked_negatives(
    std::span<const double> v, std::int32_t y, std::size_t m) {
  const std::size_t K = v.size();
  std::vector<std::pair<std::int32_t, double>> neg;
  neg.reserve(K - 1);
  for (std::size_t i = 0; i < K; ++i) {
    const auto id = static_cast<std::int32_t>(i + 1);
    if (id != y) neg.emplace_back(id, v[i]);
  }
  m = std::min(m, neg.size());
  if (m == neg.size()) {
    std::sort(neg.begin(), neg.end(), rank_before);
  } else {
    std::partial_sort(neg.begin(), neg.begin() + m, neg.end(), rank_before);
    neg.resize(m);
  }
  return neg;
}

double eval_owl(LossKind kind, const PhiSpec& phi, const WeightVector& theta,
                std::span<const double> v, std::int32_t y) {
  check_args(theta, v, y, "eval_owl");
  const double vy = v[y - 1];
  const std::size_t m = support_len(theta);
  double loss = kind == LossKind::bowl ? phi_eval(phi, vy) : 0.0;
  if (m == 0) return loss;
  const auto neg = ranked_negatives(v, y, m);
  for (std::size_t j = 0; j < m; ++j) {
    const double u = kind == LossKind::powl ? vy - neg[j].second : -neg[j].second;
    loss += theta[j] * phi_eval(phi, u);
  }
  return loss;
}

std::vector<double> grad_owl(LossKind kind, const PhiSpec& phi,
                             const WeightVector& theta,
                             std::span<const double> v, std::int32_t y) {
  check_args(theta, v, y, "grad_owl");
  std::vector<double> g(v.size(), 0.0);
  const double vy = v[y - 1];
  if (kind == LossKind::bowl) {
    g[y - 1] += phi_grad(phi, vy);
  }
  const std::size_t m = support_len(theta);
  if (m == 0) return g;
  const auto neg = ranked_negatives(v, y, m);
  for (std::size_t j = 0; j < m; ++j) {
    if (theta[j] == 0.0) continue;
    if (kind == LossKind::powl) {
      const double d = theta[j] * phi_grad(phi, vy - neg[j].second);
      g[y - 1] += d;
      g[neg[j].first - 1] -= d;
    } else {
      // d/dv_c of phi(-v_c) is -phi'(-v_c).
      g[neg[j].first - 1] -= theta[j] * phi_grad(phi, -neg[j].second);
    }
  }
  return g;
}

Norms theta_norms(const WeightVector& theta) {
  Norms n;
  double sq = 0.0;
  for (double w : theta.weights) {
    n.l1 += std::abs(w);
    sq += w * w;
  }
  n.l2 = std::sqrt(sq);
  return n;
}

bool is_surrogate_premise(const WeightVector& theta, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > theta.size()) {
    throw std::invalid_argument("is_surrogate_premise: k out of range");
  }
  const double target = 1.0 / static_cast<double>(k);
  for (int j = 0; j < k; ++j) {
    if (std::abs(theta[j] - target) > 1e-12) return false;
  }
  return true;
}

}  // namespace owlsnm
