#pragma once

// Hybrid qubit-oscillator dynamics in the adiabatic dispersive regime. The
// mechanical position Stark-shifts the qubit splitting while the qubit
// population exerts a force back on the oscillator, so a coherent mechanical
// state acts as a finite-size work battery for the qubit. On top of that mean
// dynamics, population telegraph noise feeds momentum diffusion into the
// oscillator at a rate obtained from the regression theorem; the resulting
// Gaussian ensemble and its diffusion unraveling are propagated through their
// five-parameter moment equations.
//
// Conventions: hbar = k_B = 1, X = b + b^dag, P = i(b^dag - b), so x = 2 Re
// beta, p = 2 Im beta, [X, P] = 2i and a coherent state has V_X = V_P = 1.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/fme_obe.hpp"
#include "qtraj/ledger.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

struct OptomechParams {
  double omega_0 = 1.0;   // bare qubit splitting
  double Omega_m = 0.01;  // mechanical frequency
  double g_m = 0.1;       // qubit-oscillator coupling
  double g = 0.0;         // laser Rabi frequency (0 = undriven battery regime)
  double omega_L = 0.0;   // laser frequency
  double gamma_q = 1.0;   // qubit spontaneous emission rate
  double T = 0.0;         // qubit bath temperature

  void validate() const {
    if (!(omega_0 > 0.0) || !(Omega_m > 0.0) || !(gamma_q > 0.0))
      throw std::invalid_argument(
          "OptomechParams: omega_0, Omega_m, gamma_q must be > 0");
    if (g_m < 0.0 || g < 0.0 || omega_L < 0.0 || T < 0.0)
      throw std::invalid_argument(
          "OptomechParams: g_m, g, omega_L, T must be >= 0");
  }

  // Regime checks are advisory. The model is derived for a qubit that relaxes
  // many times per mechanical oscillation (adiabatic), a coupling too weak to
  // dress the qubit linewidth (semiclassical), and ideally a displacement per
  // quantum that beats the zero-point spread (ultrastrong).
  bool adiabatic() const { return gamma_q > 10.0 * Omega_m; }
  bool semiclassical() const { return g_m < 0.3 * gamma_q; }
  bool ultrastrong() const { return g_m >= Omega_m; }

  std::vector<std::string> regime_warnings() const {
    std::vector<std::string> w;
    if (!adiabatic())
      w.push_back("adiabatic regime marginal: gamma_q does not dominate Omega_m");
    if (!semiclassical())
      w.push_back("semiclassical regime marginal: g_m is not small against gamma_q");
    if (!ultrastrong())
      w.push_back("ultrastrong condition unmet: g_m below Omega_m, "
                  "single-quantum backaction is unresolved");
    return w;
  }

  // Effective qubit splitting at mechanical position x.
  double omega_q_at(double x) const { return omega_0 + g_m * x; }

  // Bath occupation at the shifted splitting. The splitting must stay
  // positive whenever the bath can excite the qubit.
  double n_at(double x) const {
    double wq = omega_q_at(x);
    if (wq <= 0.0)
      throw std::runtime_error(
          "OptomechParams: effective qubit frequency went nonpositive, "
          "amplitude is outside the model's validity");
    return T > 0.0 ? thermal_occupation(wq, T) : 0.0;
  }

  double gamma_T_at(double x) const { return gamma_q * (2.0 * n_at(x) + 1.0); }
  double delta_T_at(double x) const { return omega_0 - omega_L + g_m * x; }
};

// Thermal excited-state population of a qubit with splitting omega at
// temperature T; 0 at T = 0.
inline double equilibrium_pe(double omega, double T) {
  if (omega <= 0.0) throw std::invalid_argument("equilibrium_pe: omega must be > 0");
  if (T < 0.0) throw std::invalid_argument("equilibrium_pe: T must be >= 0");
  if (T == 0.0) return 0.0;
  return 1.0 / (1.0 + std::exp(omega / T));
}

// Mean-field state of the factorized qubit-oscillator pair, plus running
// work/heat ledgers advanced by semiclassical_step so that the energy
// bookkeeping shares the integrator's accuracy.
struct HybridSemiclassicalState {
  double P_e = 0.0;
  cplx s_tilde{0.0, 0.0};
  cplx beta{0.0, 0.0};
  double W_cum = 0.0;  // integral of g_m * xdot * P_e
  double Q_cum = 0.0;  // integral of the bath energy flow

  double x() const { return 2.0 * beta.real(); }
  double p() const { return 2.0 * beta.imag(); }
};

namespace detail_om {

using Semi7 = std::array<double, 7>;  // P_e, Re s, Im s, Re beta, Im beta, W, Q

inline Semi7 semi_deriv(const Semi7& y, const OptomechParams& pm) {
  double Pe = y[0];
  cplx s{y[1], y[2]};
  cplx beta{y[3], y[4]};
  double x = 2.0 * beta.real();
  double p = 2.0 * beta.imag();
  double n = pm.n_at(x);
  double gT = pm.gamma_q * (2.0 * n + 1.0);
  double dT = pm.delta_T_at(x);
  double wq = pm.omega_q_at(x);

  double dPe = -gT * Pe + pm.gamma_q * n - pm.g * s.imag();
  cplx ds = -(cplx(gT / 2.0, dT)) * s + cplx(0.0, pm.g) * (Pe - 0.5);
  cplx db = cplx(0.0, -pm.Omega_m) * beta + cplx(0.0, -pm.g_m * Pe);
  double dW = pm.g_m * (pm.Omega_m * p) * Pe;  // xdot = Omega_m * p exactly
  double dQ = -pm.gamma_q * wq * ((2.0 * n + 1.0) * Pe - n);
  return {dPe, ds.real(), ds.imag(), db.real(), db.imag(), dW, dQ};
}

inline Semi7 axpy(const Semi7& y, const Semi7& d, double h) {
  Semi7 out;
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + h * d[i];
  return out;
}

}  // namespace detail_om

// One RK4 step of the coupled mean-field equations. dt must resolve the qubit
// relaxation (dt <= 0.01 / gamma_q). Aborts if the qubit state leaves the
// Bloch ball beyond rounding tolerance.
inline HybridSemiclassicalState semiclassical_step(const HybridSemiclassicalState& state,
                                                   const OptomechParams& pm, double dt) {
  if (!(dt > 0.0) || dt > 0.01 / pm.gamma_q + 1e-15)
    throw std::invalid_argument("semiclassical_step: dt must be in (0, 0.01/gamma_q]");
  using detail_om::Semi7;
  Semi7 y{state.P_e, state.s_tilde.real(), state.s_tilde.imag(),
          state.beta.real(), state.beta.imag(), state.W_cum, state.Q_cum};
  Semi7 k1 = detail_om::semi_deriv(y, pm);
  Semi7 k2 = detail_om::semi_deriv(detail_om::axpy(y, k1, dt / 2.0), pm);
  Semi7 k3 = detail_om::semi_deriv(detail_om::axpy(y, k2, dt / 2.0), pm);
  Semi7 k4 = detail_om::semi_deriv(detail_om::axpy(y, k3, dt), pm);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

  HybridSemiclassicalState out;
  out.P_e = y[0];
  out.s_tilde = cplx(y[1], y[2]);
  out.beta = cplx(y[3], y[4]);
  out.W_cum = y[5];
  out.Q_cum = y[6];

  double excess = std::norm(out.s_tilde) - out.P_e * (1.0 - out.P_e);
  if (out.P_e < -1e-9 || out.P_e > 1.0 + 1e-9 || excess > 1e-9) {
    std::ostringstream msg;
    msg << "semiclassical_step: qubit state left the Bloch ball (P_e=" << out.P_e
        << ", |s|=" << std::abs(out.s_tilde) << ", x=" << out.x() << ", dt=" << dt << ")";
    throw std::runtime_error(msg.str());
  }
  return out;
}

// Uniformly sampled mean-field trajectory, state recorded at every step.
struct SemiclassicalRun {
  OptomechParams params;
  double dt = 0.0;
  std::vector<HybridSemiclassicalState> states;

  double t(std::size_t i) const { return dt * static_cast<double>(i); }
  double duration() const {
    return states.empty() ? 0.0 : dt * static_cast<double>(states.size() - 1);
  }
};

inline SemiclassicalRun run_semiclassical(const OptomechParams& pm,
                                          const HybridSemiclassicalState& init,
                                          double t_f, double dt = 0.0) {
  pm.validate();
  if (!(t_f > 0.0)) throw std::invalid_argument("run_semiclassical: t_f must be > 0");
  double dt_max = 0.01 / pm.gamma_q;
  if (dt <= 0.0) dt = dt_max;
  if (dt > dt_max) throw std::invalid_argument("run_semiclassical: dt must be <= 0.01/gamma_q");
  auto n_steps = static_cast<std::size_t>(std::ceil(t_f / dt - 1e-9));
  if (n_steps == 0) n_steps = 1;
  dt = t_f / static_cast<double>(n_steps);  // land exactly on t_f

  SemiclassicalRun run;
  run.params = pm;
  run.dt = dt;
  run.states.reserve(n_steps + 1);
  run.states.push_back(init);
  for (std::size_t i = 0; i < n_steps; ++i)
    run.states.push_back(semiclassical_step(run.states.back(), pm, dt));
  return run;
}

// Work performed on the qubit versus mechanical energy released. On every
// undriven mean-field trajectory these balance pointwise, so W + dU_m = 0 up
// to integrator accuracy.
struct BatteryCheck {
  double W = 0.0;
  double dU_m = 0.0;
};

inline BatteryCheck battery_work_check(const SemiclassicalRun& run) {
  if (run.params.g != 0.0)
    throw std::invalid_argument("battery_work_check: defined for the undriven qubit (g = 0)");
  if (run.states.size() < 2)
    throw std::invalid_argument("battery_work_check: trajectory needs at least two samples");
  const auto& a = run.states.front();
  const auto& b = run.states.back();
  BatteryCheck out;
  out.W = b.W_cum - a.W_cum;
  out.dU_m = run.params.Omega_m * (std::norm(b.beta) - std::norm(a.beta));
  return out;
}

// Free-energy difference of the qubit between splittings omega_0 and
// omega_0 + g_m x_f; the work cost of an isothermal quasistatic sweep.
inline double reversible_work(double x_f, double omega_0, double g_m, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("reversible_work: T must be > 0");
  double omega_f = omega_0 + g_m * x_f;
  if (!(omega_0 > 0.0) || !(omega_f > 0.0))
    throw std::invalid_argument("reversible_work: qubit splitting must stay > 0");
  return qubit_free_energy(omega_f, T) - qubit_free_energy(omega_0, T);
}

namespace detail_om {

// Solves the 3x3 complex system M v = r by Gaussian elimination with partial
// pivoting. Returns false if a pivot falls below tol.
inline bool solve3(std::array<std::array<cplx, 3>, 3> M, std::array<cplx, 3> r,
                   std::array<cplx, 3>& v, double tol) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::abs(M[row][col]) > std::abs(M[piv][col])) piv = row;
    if (std::abs(M[piv][col]) < tol) return false;
    std::swap(M[piv], M[col]);
    std::swap(r[piv], r[col]);
    for (int row = col + 1; row < 3; ++row) {
      cplx f = M[row][col] / M[col][col];
      for (int k = col; k < 3; ++k) M[row][k] -= f * M[col][k];
      r[row] -= f * r[col];
    }
  }
  for (int row = 2; row >= 0; --row) {
    cplx acc = r[row];
    for (int k = row + 1; k < 3; ++k) acc -= M[row][k] * v[k];
    v[row] = acc / M[row][row];
  }
  return true;
}

inline double gamma_opt_at(double delta_T, const OptomechParams& pm) {
  double n = 0.0;
  if (pm.T > 0.0) {
    double wq = pm.omega_L + delta_T;  // delta_T = omega_q - omega_L
    if (wq <= 0.0)
      throw std::invalid_argument(
          "gamma_opt: effective qubit frequency must stay > 0 at finite temperature");
    n = thermal_occupation(wq, pm.T);
  }
  double gT = pm.gamma_q * (2.0 * n + 1.0);
  ObeSteady ss = obe_steady_state(pm.g, delta_T, pm.gamma_q, n);
  double z = 2.0 * ss.P_e - 1.0;
  cplx s = ss.s;

  const cplx i{0.0, 1.0};
  // Bloch generator in the (dsigma_z, dsigma_-, dsigma_+) fluctuation basis.
  std::array<std::array<cplx, 3>, 3> A{{{-gT, i * pm.g, -i * pm.g},
                                        {i * pm.g / 2.0, -i * delta_T - gT / 2.0, 0.0},
                                        {-i * pm.g / 2.0, 0.0, i * delta_T - gT / 2.0}}};
  std::array<cplx, 3> R{1.0 - z * z, s * (1.0 - z), -std::conj(s) * (1.0 + z)};
  std::array<cplx, 3> v{};
  double scale = gT + pm.g + std::abs(delta_T);
  if (!solve3(A, R, v, 1e-12 * scale)) {
    std::ostringstream msg;
    msg << "gamma_opt: singular Bloch matrix at delta_T=" << delta_T
        << " (gamma_T=" << gT << ", g=" << pm.g << ")";
    throw std::runtime_error(msg.str());
  }
  cplx S0 = -(pm.g_m * pm.g_m / 4.0) * v[0];
  return 2.0 * S0.real();
}

}  // namespace detail_om

// Momentum-diffusion rate fed into the oscillator by qubit population noise:
// twice the real part of the zero-frequency fluctuation spectrum, evaluated
// for the steady state at the instantaneous detuning delta_T. A near-singular
// Bloch matrix is retried after a relative nudge of delta_T before failing.
inline double gamma_opt(double delta_T, const OptomechParams& pm) {
  pm.validate();
  double rate;
  try {
    rate = detail_om::gamma_opt_at(delta_T, pm);
  } catch (const std::runtime_error&) {
    double nudge = 1e-9 * (std::abs(delta_T) + pm.gamma_q + pm.g);
    rate = detail_om::gamma_opt_at(delta_T + nudge, pm);
  }
  double floor = -1e-9 * pm.g_m * pm.g_m / pm.gamma_q;
  if (rate < floor)
    throw std::runtime_error("gamma_opt: negative rate, regression solve inconsistent");
  return rate < 0.0 ? 0.0 : rate;
}

// Five-parameter Gaussian state of the oscillator. A coherent state is
// (x, p, 1, 1, 0); pure Gaussian states satisfy 4 V_X V_P - C_XP^2 = 4.
struct GaussianMOState {
  double x = 0.0;
  double p = 0.0;
  double V_X = 1.0;
  double V_P = 1.0;
  double C_XP = 0.0;
};

inline double uncertainty_product(const GaussianMOState& s) {
  return 4.0 * s.V_X * s.V_P - s.C_XP * s.C_XP;
}

inline double mech_energy(const GaussianMOState& s, double Omega_m) {
  return Omega_m * (s.x * s.x + s.p * s.p + s.V_X + s.V_P - 2.0) / 4.0;
}

// Exponent coefficients of the Gaussian Wigner function
// W(u, v) ~ exp(-a (u-x)^2 + 2 b (u-x)(v-p) - c (v-p)^2).
struct WignerParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

inline WignerParams wigner_params(const GaussianMOState& s) {
  double d = uncertainty_product(s);
  if (!(d > 0.0))
    throw std::invalid_argument("wigner_params: covariance matrix not positive definite");
  return {2.0 * s.V_P / d, s.C_XP / d, 2.0 * s.V_X / d};
}

namespace detail_om {

using Gauss5 = std::array<double, 5>;  // x, p, V_X, V_P, C_XP

inline void check_gauss_step(double Gamma_opt, double Omega_m, double dt, const char* who) {
  if (!(Omega_m > 0.0))
    throw std::invalid_argument(std::string(who) + ": Omega_m must be > 0");
  if (Gamma_opt < 0.0)
    throw std::invalid_argument(std::string(who) + ": Gamma_opt must be >= 0");
  if (!(dt > 0.0) || dt > 0.01 / Omega_m + 1e-15)
    throw std::invalid_argument(std::string(who) + ": dt must be in (0, 0.01/Omega_m]");
}

template <typename Deriv>
inline Gauss5 rk4_gauss(const Gauss5& y, double dt, Deriv deriv) {
  Gauss5 k1 = deriv(y), y2, y3, y4;
  for (int i = 0; i < 5; ++i) y2[i] = y[i] + dt / 2.0 * k1[i];
  Gauss5 k2 = deriv(y2);
  for (int i = 0; i < 5; ++i) y3[i] = y[i] + dt / 2.0 * k2[i];
  Gauss5 k3 = deriv(y3);
  for (int i = 0; i < 5; ++i) y4[i] = y[i] + dt * k3[i];
  Gauss5 k4 = deriv(y4);
  Gauss5 out;
  for (int i = 0; i < 5; ++i)
    out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

}  // namespace detail_om

// Unconditional moment propagation: free rotation of the means, momentum
// diffusion entering V_P at rate 4 Gamma_opt and spreading through rotation.
inline GaussianMOState gaussian_ensemble_step(const GaussianMOState& state, double Gamma_opt,
                                              double Omega_m, double dt) {
  detail_om::check_gauss_step(Gamma_opt, Omega_m, dt, "gaussian_ensemble_step");
  auto deriv = [&](const detail_om::Gauss5& y) -> detail_om::Gauss5 {
    return {Omega_m * y[1], -Omega_m * y[0], Omega_m * y[4],
            -Omega_m * y[4] + 4.0 * Gamma_opt, 2.0 * Omega_m * (y[3] - y[2])};
  };
  detail_om::Gauss5 y{state.x, state.p, state.V_X, state.V_P, state.C_XP};
  y = detail_om::rk4_gauss(y, dt, deriv);
  return {y[0], y[1], y[2], y[3], y[4]};
}

struct GaussianQsdResult {
  GaussianMOState state;
  double readout = 0.0;
};

// Diffusion unraveling of the ensemble map: a weak position record steers the
// means while the conditional variances follow a deterministic Riccati flow
// that keeps pure Gaussian states exactly on the 4 V_X V_P - C_XP^2 = 4
// shell. The readout carries no information when Gamma_opt = 0 (NaN).
inline GaussianQsdResult gaussian_qsd_step(const GaussianMOState& state, double Gamma_opt,
                                           double Omega_m, double dt, Rng& rng) {
  detail_om::check_gauss_step(Gamma_opt, Omega_m, dt, "gaussian_qsd_step");
  double dw = std::sqrt(dt) * rng.gauss();
  double sqg = std::sqrt(Gamma_opt);

  GaussianQsdResult out;
  out.readout = Gamma_opt > 0.0
                    ? state.x + dw / (2.0 * dt * sqg)
                    : std::numeric_limits<double>::quiet_NaN();

  auto deriv = [&](const detail_om::Gauss5& y) -> detail_om::Gauss5 {
    return {Omega_m * y[1], -Omega_m * y[0],
            Omega_m * y[4] - 4.0 * Gamma_opt * y[2] * y[2],
            -Omega_m * y[4] + 4.0 * Gamma_opt - Gamma_opt * y[4] * y[4],
            2.0 * Omega_m * (y[3] - y[2]) - 4.0 * Gamma_opt * y[2] * y[4]};
  };
  detail_om::Gauss5 y{state.x, state.p, state.V_X, state.V_P, state.C_XP};
  y = detail_om::rk4_gauss(y, dt, deriv);
  // Innovation kicks use start-of-step coefficients (Ito convention).
  y[0] += 2.0 * sqg * state.V_X * dw;
  y[1] += sqg * state.C_XP * dw;

  if (!(y[2] > 0.0) || !(y[3] > 0.0)) {
    std::ostringstream msg;
    msg << "gaussian_qsd_step: variance turned nonpositive (V_X=" << y[2]
        << ", V_P=" << y[3] << ", Gamma_opt=" << Gamma_opt << ", dt=" << dt << ")";
    throw std::runtime_error(msg.str());
  }
  out.state = {y[0], y[1], y[2], y[3], y[4]};
  return out;
}

// Slow drift of one monitored oscillator trajectory, reported as
// per-oscillation averages. The heating rate is refreshed from the current
// position each mechanical step and the record noise scatters the means; the
// quasi-steady qubit population is reported alongside as a diagnostic.
struct DriftSeries {
  std::vector<double> t;          // oscillation midpoints
  std::vector<double> U_m;        // mean mechanical energy per oscillation
  std::vector<double> P_e;        // mean quasi-steady qubit population
  std::vector<double> Gamma_opt;  // mean heating rate
  GaussianMOState final_state;
};

inline DriftSeries long_time_run(const OptomechParams& pm, const GaussianMOState& initial,
                                 double duration, Rng& rng) {
  pm.validate();
  double period = 2.0 * pi / pm.Omega_m;
  auto n_osc = static_cast<std::size_t>(std::floor(duration / period + 1e-9));
  if (n_osc == 0)
    throw std::invalid_argument("long_time_run: duration must cover at least one oscillation");
  double dt = 0.01 / pm.Omega_m;
  // round the step count up so the adjusted dt stays within the step bound
  auto steps_per_osc = static_cast<std::size_t>(std::ceil(period / dt - 1e-9));
  dt = period / static_cast<double>(steps_per_osc);

  DriftSeries out;
  out.t.reserve(n_osc);
  out.U_m.reserve(n_osc);
  out.P_e.reserve(n_osc);
  out.Gamma_opt.reserve(n_osc);
  GaussianMOState s = initial;

  for (std::size_t osc = 0; osc < n_osc; ++osc) {
    double sum_u = 0.0, sum_pe = 0.0, sum_g = 0.0;
    for (std::size_t k = 0; k < steps_per_osc; ++k) {
      double dT = pm.delta_T_at(s.x);
      double G = gamma_opt(dT, pm);
      sum_u += mech_energy(s, pm.Omega_m);
      sum_pe += obe_steady_state(pm.g, dT, pm.gamma_q, pm.n_at(s.x)).P_e;
      sum_g += G;
      s = gaussian_qsd_step(s, G, pm.Omega_m, dt, rng).state;
    }
    double inv = 1.0 / static_cast<double>(steps_per_osc);
    out.t.push_back((static_cast<double>(osc) + 0.5) * period);
    out.U_m.push_back(sum_u * inv);
    out.P_e.push_back(sum_pe * inv);
    out.Gamma_opt.push_back(sum_g * inv);
  }
  out.final_state = s;
  return out;
}

// Per-quarter energy and entropy bookkeeping of an undriven run spanning an
// integer number of mechanical oscillations, plus the net mechanical energy
// lost per period to irreversibility.
struct LandauerMetrics {
  std::vector<double> W;      // per quarter oscillation
  std::vector<double> Q;      // per quarter oscillation
  std::vector<double> dS_VN;  // per quarter oscillation
  std::vector<double> dU_m;   // per full oscillation
};

inline LandauerMetrics landauer_cycle_metrics(const SemiclassicalRun& run) {
  if (run.params.g != 0.0)
    throw std::invalid_argument("landauer_cycle_metrics: defined for the undriven qubit (g = 0)");
  if (run.states.size() < 2)
    throw std::invalid_argument("landauer_cycle_metrics: trajectory needs at least two samples");
  double period = 2.0 * pi / run.params.Omega_m;
  double cycles = run.duration() / period;
  double n_real = std::round(cycles);
  if (n_real < 1.0 || std::abs(cycles - n_real) > 1e-6 * std::max(1.0, cycles))
    throw std::invalid_argument(
        "landauer_cycle_metrics: run must span an integer number of oscillations");
  auto n_periods = static_cast<std::size_t>(n_real);

  auto index_at = [&](double time) {
    auto i = static_cast<std::size_t>(std::llround(time / run.dt));
    return i >= run.states.size() ? run.states.size() - 1 : i;
  };
  auto svn = [](double pe) {
    return shannon_entropy(std::min(1.0, std::max(0.0, pe)));
  };

  LandauerMetrics out;
  out.W.reserve(4 * n_periods);
  out.Q.reserve(4 * n_periods);
  out.dS_VN.reserve(4 * n_periods);
  out.dU_m.reserve(n_periods);
  for (std::size_t q = 0; q < 4 * n_periods; ++q) {
    const auto& a = run.states[index_at(static_cast<double>(q) * period / 4.0)];
    const auto& b = run.states[index_at(static_cast<double>(q + 1) * period / 4.0)];
    out.W.push_back(b.W_cum - a.W_cum);
    out.Q.push_back(b.Q_cum - a.Q_cum);
    out.dS_VN.push_back(svn(b.P_e) - svn(a.P_e));
  }
  for (std::size_t c = 0; c < n_periods; ++c) {
    const auto& a = run.states[index_at(static_cast<double>(c) * period)];
    const auto& b = run.states[index_at(static_cast<double>(c + 1) * period)];
    out.dU_m.push_back(run.params.Omega_m * (std::norm(b.beta) - std::norm(a.beta)));
  }
  return out;
}

}  // namespace qtraj
