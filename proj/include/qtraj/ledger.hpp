#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/rng.hpp"
#include "qtraj/trajectory.hpp"

namespace qtraj {

// Per-trajectory energy bookkeeping. All flows are signed into the system, so
// U_final - U_init = W + Q_cl + Q_L + Q_q holds exactly step by step.
struct EnergyLedger {
  double W = 0.0;
  double Q_cl = 0.0;
  double Q_q = 0.0;
  double Q_L = 0.0;
  double U_init = 0.0;
  double U_final = 0.0;

  void add(const StepThermo& th) {
    W += th.dW;
    Q_cl += th.dQ_cl;
    Q_q += th.dQ_q;
    Q_L += th.dQ_L;
  }

  double heat_total() const { return Q_cl + Q_q + Q_L; }
  double first_law_residual() const { return U_final - U_init - (W + heat_total()); }
};

// Sums the flow increments of a record (terminal measurement included);
// boundary energies are the caller's because only it knows H(t).
inline EnergyLedger accumulate_flows(const TrajectoryRecord& rec) {
  EnergyLedger led;
  for (const StepOutcome& s : rec.record) led.add(s.thermo);
  if (rec.final_outcome >= 0) led.add(rec.final_thermo);
  return led;
}

// Work of a parameter quench H_old -> H_new, evaluated on the post-quench state.
inline double work_increment(const Ket2& post, const Mat2& H_new, const Mat2& H_old) {
  return internal_energy(post, H_new) - internal_energy(post, H_old);
}

// Quantum heat of a stochastic state update at fixed H.
inline double quantum_heat_increment(const Ket2& pre, const Ket2& post, const Mat2& H) {
  return internal_energy(post, H) - internal_energy(pre, H);
}

struct MeasureOutcome {
  int outcome = 0;  // 0: higher eigenvalue
  double prob = 0.0;
  double energy = 0.0;
  Ket2 post;
  double dQ_q = 0.0;  // E_m - <H> on the premeasurement state
};

inline MeasureOutcome projective_measure_branch(const Ket2& psi, const Mat2& H, int m) {
  if (m < 0 || m > 1) throw std::invalid_argument("projective_measure_branch: outcome index");
  EigSys2 es = eig_herm2_full(H);
  double u = internal_energy(psi, H);
  Ket2 n = normalized(psi);
  MeasureOutcome out;
  out.outcome = m;
  const Ket2& v = (m == 0) ? es.vec_hi : es.vec_lo;
  out.prob = std::norm(inner(v, n));
  out.energy = (m == 0) ? es.val_hi : es.val_lo;
  out.post = v;
  out.dQ_q = out.energy - u;
  return out;
}

// Projective measurement in the eigenbasis of Hermitian H; the energy jump is
// booked as quantum heat.
inline MeasureOutcome projective_measure_thermo(const Ket2& psi, const Mat2& H, Rng& rng) {
  MeasureOutcome hi = projective_measure_branch(psi, H, 0);
  if (rng.uniform() < hi.prob) return hi;
  return projective_measure_branch(psi, H, 1);
}

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// Von Neumann entropy in nats (k_B = 1). Eigenvalues are clamped to [0, 1]
// against rounding before 0 log 0 = 0 is applied.
inline double von_neumann_entropy(const Mat2& rho) {
  if (hermiticity_residual(rho) > 1e-9)
    throw std::invalid_argument("von_neumann_entropy: rho must be Hermitian");
  auto [hi, lo] = eig_herm2(rho);
  hi = std::min(1.0, std::max(0.0, hi));
  lo = std::min(1.0, std::max(0.0, lo));
  return -xlogx(hi) - xlogx(lo);
}

inline double shannon_entropy(double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("shannon_entropy: p outside [0, 1]");
  return -xlogx(p) - xlogx(1.0 - p);
}

// Trajectory entropy production (units of k_B): boundary term from the
// reference distributions plus the classical heat dumped into the bath.
inline double entropy_production_tpmp(double p_i, double p_f, double Q_cl, double T) {
  if (p_i <= 0.0 || p_f <= 0.0 || T <= 0.0)
    throw std::invalid_argument("entropy_production_tpmp: probabilities and T must be > 0");
  return std::log(p_i) - std::log(p_f) - Q_cl / T;
}

struct FTEstimate {
  double mean = 0.0;
  double err = 0.0;
  std::size_t n = 0;
};

// Mean of exp(-x) with a leave-one-out jackknife standard error.
inline FTEstimate exp_mean_estimator(const std::vector<double>& exponents) {
  std::size_t n = exponents.size();
  if (n < 100) throw std::invalid_argument("exp_mean_estimator: need at least 100 samples");
  std::vector<double> y(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(-exponents[i]);
    sum += y[i];
  }
  double mean = sum / double(n);
  double jsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) jsum += (sum - y[i]) / double(n - 1);
  double jmean = jsum / double(n);
  double jvar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dev = (sum - y[i]) / double(n - 1) - jmean;
    jvar += dev * dev;
  }
  FTEstimate out;
  out.mean = mean;
  out.err = std::sqrt((double(n - 1) / double(n)) * jvar);
  out.n = n;
  return out;
}

// <exp(-Delta_i s / k_B)> for entropy-production samples already in k_B units.
inline FTEstimate ift_estimator(const std::vector<double>& delta_s) {
  return exp_mean_estimator(delta_s);
}

// <exp(-beta (W - Delta F))>.
inline FTEstimate jarzynski_estimator(const std::vector<double>& work, double beta,
                                      double delta_F) {
  std::vector<double> ex(work.size());
  for (std::size_t i = 0; i < work.size(); ++i) ex[i] = beta * (work[i] - delta_F);
  return exp_mean_estimator(ex);
}

// Free energy of a bare qubit with level splitting omega at temperature T,
// measured from the ground state: F = -T ln(1 + e^{-omega/T}).
inline double qubit_free_energy(double omega, double T) {
  if (T <= 0.0) throw std::invalid_argument("qubit_free_energy: T must be > 0");
  return -T * std::log1p(std::exp(-omega / T));
}

}  // namespace qtraj
