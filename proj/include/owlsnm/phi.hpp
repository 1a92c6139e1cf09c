#pragma once

#include <string>

namespace owlsnm {

enum class PhiKind { hinge, logistic, squared_hinge, exponential, ramp };

// Scalar surrogate for the 0/1 loss: non-increasing on R, with
// phi(u) >= 1 whenever u <= 0.
struct PhiSpec {
  PhiKind kind = PhiKind::hinge;
  double ramp_rho = 1.0;  // margin of the ramp variant, must be > 0

  static PhiSpec hinge() { return {PhiKind::hinge, 1.0}; }
  static PhiSpec logistic() { return {PhiKind::logistic, 1.0}; }
  static PhiSpec squared_hinge() { return {PhiKind::squared_hinge, 1.0}; }
  static PhiSpec exponential() { return {PhiKind::exponential, 1.0}; }
  static PhiSpec ramp(double rho);

  // Parses a config token ("hinge", "logistic", "squared_hinge",
  // "exponential", "ramp"); rho applies to ramp only.
  static PhiSpec parse(const std::string& token, double rho = 1.0);

  const char* name() const;
  bool convex() const { return kind != PhiKind::ramp; }
  bool smooth() const {
    return kind == PhiKind::logistic || kind == PhiKind::exponential;
  }
};

// phi(u). Throws std::domain_error on non-finite u.
double phi_eval(const PhiSpec& spec, double u);

// d phi / du, taking the left derivative at kinks (hinge at u=1, ramp at
// u in {0, rho}). Throws std::domain_error on non-finite u.
double phi_grad(const PhiSpec& spec, double u);

}  // namespace owlsnm
