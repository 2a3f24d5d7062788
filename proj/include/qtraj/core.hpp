#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace qtraj {

using cplx = std::complex<double>;
using std::numbers::pi;

// Natural units: hbar = k_B = 1, every frequency/energy in units of gamma_q
// unless a protocol says otherwise.
inline constexpr double hbar = 1.0;
inline constexpr double k_B = 1.0;

// Pure qubit state, amplitudes on |e> and |g>.
struct Ket2 {
  cplx e{0.0, 0.0};
  cplx g{0.0, 0.0};

  double norm2() const { return std::norm(e) + std::norm(g); }
  double norm() const { return std::sqrt(norm2()); }
};

inline Ket2 operator+(const Ket2& a, const Ket2& b) { return {a.e + b.e, a.g + b.g}; }
inline Ket2 operator-(const Ket2& a, const Ket2& b) { return {a.e - b.e, a.g - b.g}; }
inline Ket2 operator*(cplx s, const Ket2& k) { return {s * k.e, s * k.g}; }
inline Ket2 operator*(double s, const Ket2& k) { return {s * k.e, s * k.g}; }

// <a|b>
inline cplx inner(const Ket2& a, const Ket2& b) {
  return std::conj(a.e) * b.e + std::conj(a.g) * b.g;
}

inline Ket2 normalized(const Ket2& k) {
  double n = k.norm();
  if (n <= 0.0) throw std::invalid_argument("normalized: zero vector");
  return (1.0 / n) * k;
}

// 2x2 complex matrix in the (e, g) basis, row-major [[ee, eg], [ge, gg]].
struct Mat2 {
  cplx ee{0.0, 0.0}, eg{0.0, 0.0}, ge{0.0, 0.0}, gg{0.0, 0.0};

  Mat2 adjoint() const {
    return {std::conj(ee), std::conj(ge), std::conj(eg), std::conj(gg)};
  }
  cplx trace() const { return ee + gg; }
  cplx det() const { return ee * gg - eg * ge; }
};

inline Mat2 operator+(const Mat2& a, const Mat2& b) {
  return {a.ee + b.ee, a.eg + b.eg, a.ge + b.ge, a.gg + b.gg};
}
inline Mat2 operator-(const Mat2& a, const Mat2& b) {
  return {a.ee - b.ee, a.eg - b.eg, a.ge - b.ge, a.gg - b.gg};
}
inline Mat2 operator*(cplx s, const Mat2& m) {
  return {s * m.ee, s * m.eg, s * m.ge, s * m.gg};
}
inline Mat2 operator*(double s, const Mat2& m) { return cplx(s, 0.0) * m; }
inline Mat2 operator*(const Mat2& a, const Mat2& b) {
  return {a.ee * b.ee + a.eg * b.ge, a.ee * b.eg + a.eg * b.gg,
          a.ge * b.ee + a.gg * b.ge, a.ge * b.eg + a.gg * b.gg};
}
inline Ket2 operator*(const Mat2& m, const Ket2& k) {
  return {m.ee * k.e + m.eg * k.g, m.ge * k.e + m.gg * k.g};
}

// |k><k|
inline Mat2 outer(const Ket2& k) {
  return {k.e * std::conj(k.e), k.e * std::conj(k.g),
          k.g * std::conj(k.e), k.g * std::conj(k.g)};
}

// |a><b|
inline Mat2 outer(const Ket2& a, const Ket2& b) {
  return {a.e * std::conj(b.e), a.e * std::conj(b.g),
          a.g * std::conj(b.e), a.g * std::conj(b.g)};
}

inline Mat2 identity2() { return {1.0, 0.0, 0.0, 1.0}; }
inline Mat2 sigma_x() { return {0.0, 1.0, 1.0, 0.0}; }
inline Mat2 sigma_y() { return {0.0, cplx(0.0, -1.0), cplx(0.0, 1.0), 0.0}; }
inline Mat2 sigma_z() { return {1.0, 0.0, 0.0, -1.0}; }
inline Mat2 sigma_plus() { return {0.0, 1.0, 0.0, 0.0}; }   // |e><g|
inline Mat2 sigma_minus() { return {0.0, 0.0, 1.0, 0.0}; }  // |g><e|

inline double hermiticity_residual(const Mat2& m) {
  Mat2 d = m - m.adjoint();
  return std::sqrt(std::norm(d.ee) + std::norm(d.eg) + std::norm(d.ge) + std::norm(d.gg));
}

// Eigenvalues of a Hermitian 2x2, descending. Clamped against rounding.
inline std::pair<double, double> eig_herm2(const Mat2& m) {
  double h = 0.5 * std::real(m.trace());
  double d = std::real(m.det());
  double disc = h * h - d;
  double s = disc > 0.0 ? std::sqrt(disc) : 0.0;
  return {h + s, h - s};
}

struct EigSys2 {
  double val_hi = 0.0;
  double val_lo = 0.0;
  Ket2 vec_hi{1.0, 0.0};
  Ket2 vec_lo{0.0, 1.0};
};

// Eigenpairs of a Hermitian 2x2, descending. For eigenvalue w of
// [[a, b], [conj(b), d]] the vector (b, w - a) solves both rows; the
// alternative (w - d, conj(b)) is used when it is better conditioned.
inline EigSys2 eig_herm2_full(const Mat2& m) {
  auto [hi, lo] = eig_herm2(m);
  EigSys2 out;
  out.val_hi = hi;
  out.val_lo = lo;
  double a = std::real(m.ee), d = std::real(m.gg);
  if (std::abs(m.eg) < 1e-300 && hi == lo) return out;  // multiple of identity
  auto vec_for = [&](double w) {
    Ket2 v1{m.eg, cplx(w - a, 0.0)};
    Ket2 v2{cplx(w - d, 0.0), m.ge};
    return normalized(v1.norm2() >= v2.norm2() ? v1 : v2);
  };
  if (std::abs(m.eg) < 1e-300) {
    if (a >= d) return out;
    out.vec_hi = Ket2{0.0, 1.0};
    out.vec_lo = Ket2{1.0, 0.0};
    return out;
  }
  out.vec_hi = vec_for(hi);
  out.vec_lo = Ket2{-std::conj(out.vec_hi.g), std::conj(out.vec_hi.e)};
  return out;
}

// |psi(theta, phi)> = cos(theta/2) e^{+i phi/2} |e> + sin(theta/2) e^{-i phi/2} |g>
inline Ket2 bloch_state(double theta, double phi) {
  return {std::cos(0.5 * theta) * std::exp(cplx(0.0, 0.5 * phi)),
          std::sin(0.5 * theta) * std::exp(cplx(0.0, -0.5 * phi))};
}

// Global-phase gauge: amp_g real non-negative; amp_e takes that role when amp_g ~ 0.
inline Ket2 fix_gauge(const Ket2& k) {
  double n = k.norm();
  const cplx& ref = (std::abs(k.g) > 1e-14 * n) ? k.g : k.e;
  double a = std::abs(ref);
  if (a == 0.0) return k;
  cplx phase = std::conj(ref) / a;
  return phase * k;
}

// Inverse of bloch_state up to global phase; phi := 0 at the poles.
inline std::pair<double, double> bloch_angles(const Ket2& k) {
  Ket2 s = fix_gauge(normalized(k));
  double theta = 2.0 * std::atan2(std::abs(s.g), std::abs(s.e));
  double phi = 0.0;
  if (std::abs(s.e) > 1e-14 && std::abs(s.g) > 1e-14)
    phi = std::arg(s.e * std::conj(s.g));
  return {theta, phi};
}

// <psi|H|psi> for Hermitian H.
inline double internal_energy(const Ket2& psi, const Mat2& H) {
  if (hermiticity_residual(H) > 1e-12)
    throw std::invalid_argument("internal_energy: H is not Hermitian");
  return std::real(inner(psi, H * psi));
}

// Bose-Einstein occupation; T = 0 maps to exactly 0.
inline double thermal_occupation(double omega, double T) {
  if (omega <= 0.0) throw std::invalid_argument("thermal_occupation: omega must be > 0");
  if (T < 0.0) throw std::invalid_argument("thermal_occupation: T must be >= 0");
  if (T == 0.0) return 0.0;
  return 1.0 / std::expm1(hbar * omega / (k_B * T));
}

// Dressed basis of the rotating-frame Hamiltonian (delta/2) sigma_z - (g/2) sigma_y.
// Phase convention: |+> = cos(theta)|e> - i sin(theta)|g>,
//                   |-> = -i sin(theta)|e> + cos(theta)|g>, with tan(2 theta) = g/delta.
struct DressedBasis {
  double omega_R = 0.0;
  double cos_theta = 0.0;
  double sin_theta = 0.0;
  Ket2 plus;
  Ket2 minus;
  double theta() const { return std::atan2(sin_theta, cos_theta); }
};

inline DressedBasis dressed_basis(double g, double delta) {
  if (g < 0.0) throw std::invalid_argument("dressed_basis: g must be >= 0");
  double omega_R = std::hypot(g, delta);
  if (omega_R <= 0.0)
    throw std::invalid_argument("dressed_basis: g and delta cannot both vanish");
  DressedBasis b;
  b.omega_R = omega_R;
  b.cos_theta = std::sqrt(0.5 * (omega_R + delta) / omega_R);
  b.sin_theta = std::sqrt(0.5 * (omega_R - delta) / omega_R);
  b.plus = {cplx(b.cos_theta, 0.0), cplx(0.0, -b.sin_theta)};
  b.minus = {cplx(0.0, -b.sin_theta), cplx(b.cos_theta, 0.0)};
  return b;
}

}  // namespace qtraj
