#include "owlsnm/phi.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace owlsnm {

namespace {

constexpr double kLog2e = std::numbers::log2e;  // 1 / ln 2

void require_finite(double u, const char* who) {
  if (!std::isfinite(u)) {
    throw std::domain_error(std::string(who) + ": non-finite input");
  }
}

void require_valid(const PhiSpec& spec) {
  if (spec.kind == PhiKind::ramp && !(spec.ramp_rho > 0.0)) {
    throw std::invalid_argument("ramp surrogate requires rho > 0");
  }
}

}  // namespace

PhiSpec PhiSpec::ramp(double rho) {
  PhiSpec s{PhiKind::ramp, rho};
  require_valid(s);
  return s;
}

PhiSpec PhiSpec::parse(const std::string& token, double rho) {
  if (token == "hinge") return hinge();
  if (token == "logistic") return logistic();
  if (token == "squared_hinge") return squared_hinge();
  if (token == "exponential") return exponential();
  if (token == "ramp") return ramp(rho);
  throw std::invalid_argument("unknown phi variant: " + token);
}

const char* PhiSpec::name() const {
  switch (kind) {
    case PhiKind::hinge: return "hinge";
    case PhiKind::logistic: return "logistic";
    case PhiKind::squared_hinge: return "squared_hinge";
    case PhiKind::exponential: return "exponential";
    case PhiKind::ramp: return "ramp";
  }
  return "?";
}

double phi_eval(const PhiSpec& spec, double u) {
  require_finite(u, "phi_eval");
  require_valid(spec);
  switch (spec.kind) {
    case PhiKind::hinge:
      return u < 1.0 ? 1.0 - u : 0.0;
    case PhiKind::logistic:
      // log2(1 + exp(-u)); split on the sign so exp never overflows.
      return u >= 0.0 ? std::log1p(std::exp(-u)) * kLog2e
                      : (-u + std::log1p(std::exp(u))) * kLog2e;
    case PhiKind::squared_hinge: {
      const double t = u < 1.0 ? 1.0 - u : 0.0;
      return t * t;
    }
    case PhiKind::exponential:
      return std::exp(-u);
    case PhiKind::ramp:
      if (u <= 0.0) return 1.0;
      if (u <= spec.ramp_rho) return 1.0 - u / spec.ramp_rho;
      return 0.0;
  }
  throw std::logic_error("phi_eval: unreachable");
}

double phi_grad(const PhiSpec& spec, double u) {
  require_finite(u, "phi_grad");
  require_valid(spec);
  switch (spec.kind) {
    case PhiKind::hinge:
      return u <= 1.0 ? -1.0 : 0.0;
    case PhiKind::logistic:
      // -1 / ((1 + exp(u)) ln 2); exp(u) -> inf gives the correct -0.
      return -kLog2e / (1.0 + std::exp(u));
    case PhiKind::squared_hinge:
      return u <= 1.0 ? -2.0 * (1.0 - u) : 0.0;
    case PhiKind::exponential:
      return -std::exp(-u);
    case PhiKind::ramp:
      if (u <= 0.0) return 0.0;
      if (u <= spec.ramp_rho) return -1.0 / spec.ramp_rho;
      return 0.0;
  }
  throw std::logic_error("phi_grad: unreachable");
}

}  // namespace owlsnm
