#pragma once

#include <stdexcept>
#include <vector>

#include "qtraj/core.hpp"

namespace qtraj {

inline double frob_norm(const Mat2& m) {
  return std::sqrt(std::norm(m.ee) + std::norm(m.eg) + std::norm(m.ge) + std::norm(m.gg));
}

// One generalized-measurement step. ops[0] is the no-jump branch; jump labels
// follow in fixed order. First-order sets close to identity up to O(dt^2):
// sum M_r^dag M_r = 1 + dt^2 H^2 + A^2 + i dt [A, H], A = (1/2) sum_k M_k^dag M_k.
struct KrausSet {
  std::vector<Mat2> ops;
  double dt = 0.0;
  double residual_bound = 0.0;

  double completeness_residual() const {
    Mat2 s;
    for (const Mat2& m : ops) s = s + m.adjoint() * m;
    return frob_norm(identity2() - s);
  }

  void validate() const {
    if (ops.empty() || dt <= 0.0)
      throw std::invalid_argument("KrausSet: empty or non-positive dt");
    if (completeness_residual() > residual_bound)
      throw std::invalid_argument("KrausSet: completeness residual exceeds bound");
  }
};

// Expected completeness defect for M0 = 1 - i dt H - A: (dt ||H|| + ||A||)^2,
// padded for norm inequalities and rounding.
inline double kraus_residual_bound(double dt, const Mat2& H, const Mat2& A) {
  double b = dt * frob_norm(H) + frob_norm(A);
  return 2.0 * b * b + 1e-12;
}

// Thermal emission/absorption step for a qubit coupled to a bath at occupation n:
//   M1 = sqrt(gamma (n+1) dt) sigma_-,  M2 = sqrt(gamma n dt) sigma_+,
//   M0 = 1 - i dt H - (1/2)(M1^dag M1 + M2^dag M2).
// Labels: 0 no-jump, 1 emission, 2 absorption (kept even when a rate vanishes).
// The _into form reuses the ops buffer so per-step rebuilds stay allocation-free.
inline void thermal_kraus_into(KrausSet& ks, double gamma, double n, double dt,
                               const Mat2& H) {
  if (gamma < 0.0 || n < 0.0 || dt <= 0.0)
    throw std::invalid_argument("thermal_kraus_set: bad gamma, n, or dt");
  if (gamma * (2.0 * n + 1.0) * dt > 0.05)
    throw std::invalid_argument("thermal_kraus_set: gamma (2n+1) dt must be <= 0.05");
  Mat2 m1 = std::sqrt(gamma * (n + 1.0) * dt) * sigma_minus();
  Mat2 m2 = std::sqrt(gamma * n * dt) * sigma_plus();
  Mat2 a = 0.5 * (m1.adjoint() * m1 + m2.adjoint() * m2);
  ks.ops.resize(3);
  ks.ops[0] = identity2() - cplx(0.0, dt) * H - a;
  ks.ops[1] = m1;
  ks.ops[2] = m2;
  ks.dt = dt;
  ks.residual_bound = kraus_residual_bound(dt, H, a);
}

inline KrausSet thermal_kraus_set(double gamma, double n, double dt, const Mat2& H) {
  KrausSet ks;
  thermal_kraus_into(ks, gamma, n, dt, H);
  return ks;
}

}  // namespace qtraj
