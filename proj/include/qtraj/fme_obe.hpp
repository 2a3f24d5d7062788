#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/kraus.hpp"
#include "qtraj/ledger.hpp"
#include "qtraj/trajectory.hpp"

// Two coarse-grainings of the resonantly driven, thermally damped qubit:
// the secular (Floquet) master equation in the dressed basis, whose jump
// records resolve photon exchange at the three emission frequencies, and the
// optical Bloch description, whose jumps exchange bare quanta only. Both are
// exposed as QJ protocols plus closed-form steady-state flows so the two
// pictures can be compared on the same footing.

namespace qtraj {

// --- dressed golden-rule rates ---------------------------------------------

struct FloquetRates {
  double g0_down = 0.0;  // dephasing quanta emitted at omega_L
  double g0_up = 0.0;
  double g1_down = 0.0;  // upper sideband omega_L + Omega_R
  double g1_up = 0.0;
  double g2_down = 0.0;  // lower sideband omega_L - Omega_R
  double g2_up = 0.0;

  double down_total() const { return g1_down + g2_down; }
  double up_total() const { return g1_up + g2_up; }
  double dephase_total() const { return g0_down + g0_up; }
  double total() const { return down_total() + up_total() + dephase_total(); }
};

// Rates of the driven qubit in its dressed basis. Gamma and N sample the
// reservoir coupling and occupation at the three emission frequencies; the
// lower sideband must stay at positive frequency. Down/up refers to the
// dressed ladder: the lower-sideband emission climbs it, so g2_down pairs
// with N and g2_up with N + 1.
inline FloquetRates floquet_rates(double g, double delta, double omega_L,
                                  const std::function<double(double)>& Gamma,
                                  const std::function<double(double)>& N) {
  DressedBasis b = dressed_basis(g, delta);
  double w1 = omega_L + b.omega_R;
  double w2 = omega_L - b.omega_R;
  if (omega_L <= 0.0 || w2 <= 0.0)
    throw std::invalid_argument("floquet_rates: sidebands must sit at positive frequency");
  double c2 = b.cos_theta * b.cos_theta;
  double s2 = b.sin_theta * b.sin_theta;
  FloquetRates r;
  r.g0_down = c2 * s2 * Gamma(omega_L) * (N(omega_L) + 1.0);
  r.g0_up = c2 * s2 * Gamma(omega_L) * N(omega_L);
  r.g1_down = c2 * c2 * Gamma(w1) * (N(w1) + 1.0);
  r.g1_up = c2 * c2 * Gamma(w1) * N(w1);
  r.g2_down = s2 * s2 * Gamma(w2) * N(w2);
  r.g2_up = s2 * s2 * Gamma(w2) * (N(w2) + 1.0);
  return r;
}

// Flat coupling Gamma(w) = gamma_q with thermal occupation at temperature T.
inline FloquetRates floquet_rates_flat(double g, double delta, double omega_L,
                                       double gamma_q, double T) {
  if (gamma_q < 0.0) throw std::invalid_argument("floquet_rates_flat: gamma_q must be >= 0");
  return floquet_rates(g, delta, omega_L, [gamma_q](double) { return gamma_q; },
                       [T](double w) { return thermal_occupation(w, T); });
}

inline Mat2 dressed_sigma_z(const DressedBasis& b) { return outer(b.plus) - outer(b.minus); }
inline Mat2 dressed_sigma_minus(const DressedBasis& b) { return outer(b.minus, b.plus); }
inline Mat2 dressed_sigma_plus(const DressedBasis& b) { return outer(b.plus, b.minus); }

inline double dressed_p_plus(const Ket2& psi, const DressedBasis& b) {
  return std::norm(inner(b.plus, psi)) / psi.norm2();
}

// rho_{+-} of a pure state.
inline cplx dressed_coherence(const Ket2& psi, const DressedBasis& b) {
  return inner(b.plus, psi) * std::conj(inner(b.minus, psi)) / psi.norm2();
}

// --- Floquet step ------------------------------------------------------------

// 7-outcome generalized measurement of one coarse step. Labels: 0 no-jump;
// 1/2 emission/absorption at omega_L + Omega_R; 3/4 emission/absorption at
// omega_L - Omega_R; 5/6 dressed dephasing with a drive quantum emitted or
// absorbed at omega_L. Vanishing rates keep their slots.
inline void fme_kraus_into(KrausSet& ks, const FloquetRates& r, const DressedBasis& b,
                           double dt) {
  if (dt <= 0.0) throw std::invalid_argument("fme_kraus_set: dt must be > 0");
  if (r.total() * dt > 0.05)
    throw std::invalid_argument("fme_kraus_set: total rate times dt must be <= 0.05");
  Mat2 sm = dressed_sigma_minus(b);
  Mat2 sp = dressed_sigma_plus(b);
  Mat2 sz = dressed_sigma_z(b);
  ks.ops.resize(7);
  ks.ops[1] = std::sqrt(r.g1_down * dt) * sm;
  ks.ops[2] = std::sqrt(r.g1_up * dt) * sp;
  ks.ops[3] = std::sqrt(r.g2_down * dt) * sm;
  ks.ops[4] = std::sqrt(r.g2_up * dt) * sp;
  ks.ops[5] = std::sqrt(r.g0_down * dt) * sz;
  ks.ops[6] = std::sqrt(r.g0_up * dt) * sz;
  Mat2 a;
  for (int k = 1; k < 7; ++k) a = a + 0.5 * (ks.ops[k].adjoint() * ks.ops[k]);
  Mat2 h = (0.5 * b.omega_R) * sz;
  ks.ops[0] = identity2() - cplx(0.0, dt) * h - a;
  ks.dt = dt;
  ks.residual_bound = kraus_residual_bound(dt, h, a);
}

inline KrausSet fme_kraus_set(const FloquetRates& r, const DressedBasis& b, double dt) {
  KrausSet ks;
  fme_kraus_into(ks, r, b, dt);
  return ks;
}

// Ensemble generator matching the step set above: the dephasing dissipator
// carries the full g0_down + g0_up weight.
inline std::vector<LindbladTerm> fme_lindblad_terms(const FloquetRates& r,
                                                    const DressedBasis& b) {
  return {{r.down_total(), dressed_sigma_minus(b)},
          {r.up_total(), dressed_sigma_plus(b)},
          {r.dephase_total(), dressed_sigma_z(b)}};
}

struct HeatIncrements {
  double dQ_cl = 0.0;
  double dQ_q = 0.0;
  double dQ_L = 0.0;
};

// Heat assignment of one Floquet outcome, evaluated on the premeasurement
// state. Sideband photons split into a drive quantum (dQ_L) and a reservoir
// quantum (dQ_cl); the dressed-energy mismatch is quantum heat drawn from the
// coherence. The no-jump row is the O(dt) population drag.
inline HeatIncrements fme_heat_increments(int outcome, const Ket2& pre,
                                          const FloquetRates& r, double omega_L,
                                          const DressedBasis& b, double dt) {
  double W = b.omega_R;
  double w1 = omega_L + W;
  double w2 = omega_L - W;
  double pp = dressed_p_plus(pre, b);
  HeatIncrements h;
  switch (outcome) {
    case 0:
      h.dQ_q = -W * (r.g1_down - r.g1_up + r.g2_down - r.g2_up) * dt *
               std::norm(dressed_coherence(pre, b));
      break;
    case 1: h = {-w1, W * (1.0 - pp), +omega_L}; break;
    case 2: h = {+w1, -W * pp, -omega_L}; break;
    case 3: h = {+w2, W * (1.0 - pp), -omega_L}; break;
    case 4: h = {-w2, -W * pp, +omega_L}; break;
    case 5: h = {-omega_L, 0.0, +omega_L}; break;
    case 6: h = {+omega_L, 0.0, -omega_L}; break;
    default: throw std::invalid_argument("fme_heat_increments: outcome outside 0..6");
  }
  return h;
}

// --- FME trajectory protocol -------------------------------------------------

struct FmeParams {
  double g = 1.0;
  double delta = 0.0;
  double omega_L = 50.0;
  double gamma_q = 1.0;
  double T = 0.0;
  double t_f = 1.0;
  int n_steps = 1000;
  bool thermal_init = true;  // steady dressed populations; else start in |e>

  double dt() const { return t_f / n_steps; }

  void validate() const {
    if (g < 0.0 || gamma_q <= 0.0 || T < 0.0)
      throw std::invalid_argument("FmeParams: g >= 0, gamma_q > 0, T >= 0 required");
    if (t_f <= 0.0 || n_steps < 1)
      throw std::invalid_argument("FmeParams: t_f > 0 and n_steps >= 1 required");
  }
};

// Quantum-jump unraveling of the Floquet master equation. Work is never
// booked: at this coarse-graining the drive feeds the system only through
// the incoherent dQ_L quanta, and the no-jump energy drift is carried
// entirely by dQ_q, so U_final - U_init = Q_cl + Q_L + Q_q holds exactly on
// every path (U = dressed-frame energy).
class FmeProtocol {
 public:
  explicit FmeProtocol(const FmeParams& p) : p_(p) {
    p_.validate();
    basis_ = dressed_basis(p_.g, p_.delta);
    rates_ = floquet_rates_flat(p_.g, p_.delta, p_.omega_L, p_.gamma_q, p_.T);
    step_ = fme_kraus_set(rates_, basis_, p_.dt());
    h_eff_ = (0.5 * basis_.omega_R) * dressed_sigma_z(basis_);
    double gd = rates_.down_total();
    double gu = rates_.up_total();
    p_plus_ss_ = gu / (gd + gu);
    if (p_.thermal_init) {
      inits_.push_back({p_plus_ss_, basis_.plus});
      inits_.push_back({1.0 - p_plus_ss_, basis_.minus});
    } else {
      inits_.push_back({1.0, Ket2{1.0, 0.0}});
    }
  }

  int n_steps() const { return p_.n_steps; }
  double time(int k) const { return k * p_.dt(); }
  const std::vector<InitialBranch>& initial_branches() const { return inits_; }
  void kraus(int, KrausSet& out) const { out = step_; }

  StepThermo thermo(int, int label, const Ket2& pre, const Ket2& post) const {
    HeatIncrements h = fme_heat_increments(label, pre, rates_, p_.omega_L, basis_, p_.dt());
    StepThermo th;
    th.dQ_cl = h.dQ_cl;
    th.dQ_L = h.dQ_L;
    th.dQ_q = label == 0 ? internal_energy(post, h_eff_) - internal_energy(pre, h_eff_)
                         : h.dQ_q;
    return th;
  }

  int n_final_outcomes() const { return 2; }
  double final_branch(int m, const Ket2& psi, Ket2& post, StepThermo& th) const {
    double pp = dressed_p_plus(psi, basis_);
    post = m == 0 ? basis_.plus : basis_.minus;
    th = {};
    th.dQ_q = (m == 0 ? 0.5 : -0.5) * basis_.omega_R - internal_energy(psi, h_eff_);
    return m == 0 ? pp : 1.0 - pp;
  }

  double p_init_ref(int b) const {
    if (!p_.thermal_init) return 1.0;
    return b == 0 ? p_plus_ss_ : 1.0 - p_plus_ss_;
  }
  double p_final_ref(int m) const { return m == 0 ? p_plus_ss_ : 1.0 - p_plus_ss_; }

  // Boundary term over the dressed readout plus reservoir quanta at one bath.
  double entropy_production(const TrajectoryRecord& rec) const {
    return entropy_production_tpmp(p_init_ref(rec.initial_branch),
                                   p_final_ref(rec.final_outcome),
                                   accumulate_flows(rec).Q_cl, p_.T);
  }

  const FmeParams& params() const { return p_; }
  const DressedBasis& basis() const { return basis_; }
  const FloquetRates& rates() const { return rates_; }
  const Mat2& h_eff() const { return h_eff_; }
  double p_plus_steady() const { return p_plus_ss_; }

 private:
  FmeParams p_;
  DressedBasis basis_;
  FloquetRates rates_;
  KrausSet step_;
  Mat2 h_eff_;
  double p_plus_ss_ = 0.0;
  std::vector<InitialBranch> inits_;
};

// --- optical Bloch description -------------------------------------------------

// Rotating-frame Hamiltonian of the driven qubit, (delta/2) sz + (g/2) sx.
inline Mat2 obe_hamiltonian(double g, double delta) {
  return 0.5 * delta * sigma_z() + 0.5 * g * sigma_x();
}

// Lab-frame qubit-plus-drive energy expressed through the rotating-frame
// state: U = (omega_0/2) <sz> + (g/2) <sx>.
inline Mat2 obe_energy_operator(double g, double omega_0) {
  return 0.5 * omega_0 * sigma_z() + 0.5 * g * sigma_x();
}

// The Bloch-level unraveling keeps the bare thermal jumps under the
// rotating-frame Hamiltonian.
inline KrausSet obe_kraus_set(double gamma_q, double n_q, const Mat2& H_rot, double dt) {
  return thermal_kraus_set(gamma_q, n_q, dt, H_rot);
}

// rho_eg of a pure rotating-frame state.
inline cplx obe_coherence(const Ket2& psi) { return psi.e * std::conj(psi.g) / psi.norm2(); }

// Rotating-frame work operator over one step: the image of dt * dH_lab/dt,
// (omega_L g dt / 2) sigma_y. <w> = -omega_L g dt Im rho_eg.
inline Mat2 work_operator_rotating(double omega_L, double g, double dt) {
  return (0.5 * omega_L * g * dt) * sigma_y();
}

struct ObeSteady {
  double P_e = 0.0;
  cplx s;        // rho_eg fixed point
  double D = 0.0;  // saturation denominator
};

// Fixed point of the Bloch equations
//   dPe/dt = -gamma (2n+1) Pe + gamma n + (i g / 2)(s - s*),
//   ds/dt  = -(i delta + gamma (2n+1) / 2) s + i g (Pe - 1/2),
// with D = 1 + 2 delta^2/g^2 + gamma^2 (2n+1)^2 / (2 g^2). The undriven
// limit returns the bare thermal point.
inline ObeSteady obe_steady_state(double g, double delta, double gamma_q, double n_q) {
  if (g < 0.0 || gamma_q <= 0.0 || n_q < 0.0)
    throw std::invalid_argument("obe_steady_state: g >= 0, gamma_q > 0, n_q >= 0 required");
  double tot = 2.0 * n_q + 1.0;
  ObeSteady out;
  if (g == 0.0) {
    out.P_e = n_q / tot;
    out.s = cplx(0.0, 0.0);
    out.D = std::numeric_limits<double>::infinity();
    return out;
  }
  double D = 1.0 + 2.0 * delta * delta / (g * g)
           + gamma_q * gamma_q * tot * tot / (2.0 * g * g);
  out.D = D;
  out.P_e = (n_q + 0.5 / D) / tot;
  out.s = cplx(-delta / (g * tot * D), -gamma_q / (2.0 * g * D));
  return out;
}

// --- steady energy flows -------------------------------------------------------

enum class Description { FME, OBE };

struct SteadyFlows {
  double P_L = 0.0;    // drive input power
  double P_res = 0.0;  // reservoir power (classical heat flow)
  double W_dot = 0.0;
  double Qq_dot = 0.0;
  double sigma_i = 0.0;  // entropy production rate, k_B per unit time
};

// Steady-state power balance of the driven qubit in either description.
// P_L + P_res = 0 is an identity of both generators; sigma_i = -P_res / T
// with the bath temperature reconstructed from n_q at omega_0.
inline SteadyFlows steady_flows(double g, double delta, double omega_L, double omega_0,
                                double gamma_q, double n_q, Description desc) {
  double scale = std::abs(omega_0) + std::abs(omega_L) + std::abs(delta);
  if (std::abs(omega_0 - omega_L - delta) > 1e-9 * scale)
    throw std::invalid_argument("steady_flows: omega_0 must equal omega_L + delta");
  if (n_q <= 0.0)
    throw std::invalid_argument("steady_flows: n_q must be > 0 (finite bath temperature)");
  double T = omega_0 / std::log1p(1.0 / n_q);
  SteadyFlows f;
  if (desc == Description::OBE) {
    ObeSteady ss = obe_steady_state(g, delta, gamma_q, n_q);
    f.W_dot = -omega_L * g * std::imag(ss.s);
    f.Qq_dot = -0.5 * g * gamma_q * (2.0 * n_q + 1.0) * std::real(ss.s);
    f.P_res = -omega_0 * gamma_q * ((2.0 * n_q + 1.0) * ss.P_e - n_q);
    f.P_L = f.W_dot + f.Qq_dot;
  } else {
    FloquetRates r = floquet_rates_flat(g, delta, omega_L, gamma_q, T);
    double gd = r.down_total();
    double gu = r.up_total();
    double pp = gu / (gd + gu);
    double pm = 1.0 - pp;
    double WR = std::hypot(g, delta);
    double w1 = omega_L + WR;
    double w2 = omega_L - WR;
    f.P_res = -w1 * (r.g1_down * pp - r.g1_up * pm)
            + w2 * (r.g2_down * pp - r.g2_up * pm)
            - omega_L * (r.g0_down - r.g0_up);
    f.P_L = omega_L * ((r.g1_down - r.g2_down) * pp + (r.g2_up - r.g1_up) * pm
                       + r.g0_down - r.g0_up);
    f.W_dot = 0.0;
    f.Qq_dot = 0.0;
  }
  f.sigma_i = -f.P_res / T;
  return f;
}

// --- cross-description steady comparison ---------------------------------------

struct ComparisonRow {
  double theta = 0.0;
  double g = 0.0;
  double Pe_obe = 0.0;
  double Pe_fme = 0.0;
  double re_s = 0.0;  // Bloch dissipative component; the FME value is 0 identically
  double im_s_obe = 0.0;
  double im_s_fme = 0.0;
  double PL_obe = 0.0;
  double PL_fme = 0.0;
  double Pres_obe = 0.0;
  double Pres_fme = 0.0;
  double sigma_i = 0.0;
};

// One comparison row at dressed angle theta in (0, pi/4), detuning held fixed
// (g = delta tan 2theta). Coherences are reported in the drive-phase gauge
// where the FME steady coherence is purely imaginary; the Bloch value maps in
// as s -> i s.
inline ComparisonRow fme_obe_comparison_row(double theta, double delta, double omega_L,
                                            double gamma_q, double T) {
  if (theta <= 0.0 || theta >= 0.25 * pi)
    throw std::invalid_argument("fme_obe_comparison_row: theta must lie in (0, pi/4)");
  if (delta <= 0.0)
    throw std::invalid_argument("fme_obe_comparison_row: delta must be > 0");
  double g = delta * std::tan(2.0 * theta);
  double omega_0 = omega_L + delta;
  double n_q = thermal_occupation(omega_0, T);

  ComparisonRow row;
  row.theta = theta;
  row.g = g;

  ObeSteady obe = obe_steady_state(g, delta, gamma_q, n_q);
  row.Pe_obe = obe.P_e;
  cplx s_y = cplx(0.0, 1.0) * obe.s;
  row.re_s = std::real(s_y);
  row.im_s_obe = std::imag(s_y);

  DressedBasis b = dressed_basis(g, delta);
  FloquetRates r = floquet_rates_flat(g, delta, omega_L, gamma_q, T);
  double pp = r.up_total() / (r.up_total() + r.down_total());
  double pm = 1.0 - pp;
  row.Pe_fme = pp * b.cos_theta * b.cos_theta + pm * b.sin_theta * b.sin_theta;
  row.im_s_fme = b.sin_theta * b.cos_theta * (pp - pm);

  SteadyFlows fo = steady_flows(g, delta, omega_L, omega_0, gamma_q, n_q, Description::OBE);
  SteadyFlows ff = steady_flows(g, delta, omega_L, omega_0, gamma_q, n_q, Description::FME);
  row.PL_obe = fo.P_L;
  row.PL_fme = ff.P_L;
  row.Pres_obe = fo.P_res;
  row.Pres_fme = ff.P_res;
  row.sigma_i = fo.sigma_i;
  return row;
}

// --- Bloch-level Jarzynski protocol ---------------------------------------------

struct RabiParams {
  double g = 1.0;
  double delta = 0.0;
  double omega_0 = 10.0;
  double gamma_q = 1.0;
  double T = 1.0;
  double t_f = 1.0;
  int n_steps = 1000;

  double omega_L() const { return omega_0 - delta; }
  double dt() const { return t_f / n_steps; }
  double n_q() const { return thermal_occupation(omega_0, T); }
  double thermal_pe() const {
    double n = n_q();
    return n / (2.0 * n + 1.0);
  }

  void validate() const {
    if (g <= 0.0 || gamma_q <= 0.0 || T <= 0.0 || omega_0 <= 0.0 || omega_L() <= 0.0)
      throw std::invalid_argument("RabiParams: g, gamma_q, T, omega_0, omega_L must be > 0");
    if (t_f <= 0.0 || n_steps < 1)
      throw std::invalid_argument("RabiParams: t_f > 0 and n_steps >= 1 required");
  }
};

// Thermal preparation, driven Bloch unraveling for t_f, bare-basis readout.
// Jumps exchange bare quanta (dQ_cl = -+ omega_0); the no-jump drift books
// the drive work on the premeasurement coherence and the remaining energy
// change as quantum heat, so every step closes the first law exactly.
// Boundary references for the entropy production are thermal at omega_0 on
// both ends (static level splitting).
class RabiJeProtocol {
 public:
  explicit RabiJeProtocol(const RabiParams& p) : p_(p) {
    p_.validate();
    h_energy_ = obe_energy_operator(p_.g, p_.omega_0);
    step_ = obe_kraus_set(p_.gamma_q, p_.n_q(), obe_hamiltonian(p_.g, p_.delta), p_.dt());
    pe_th_ = p_.thermal_pe();
    inits_.push_back({pe_th_, Ket2{1.0, 0.0}});
    inits_.push_back({1.0 - pe_th_, Ket2{0.0, 1.0}});
  }

  int n_steps() const { return p_.n_steps; }
  double time(int k) const { return k * p_.dt(); }
  const std::vector<InitialBranch>& initial_branches() const { return inits_; }
  void kraus(int, KrausSet& out) const { out = step_; }

  StepThermo thermo(int, int label, const Ket2& pre, const Ket2& post) const {
    StepThermo th;
    double du = internal_energy(post, h_energy_) - internal_energy(pre, h_energy_);
    if (label == 0) {
      th.dW = -p_.omega_L() * p_.g * p_.dt() * std::imag(obe_coherence(pre));
      th.dQ_q = du - th.dW;
    } else {
      th.dQ_cl = label == 1 ? -p_.omega_0 : +p_.omega_0;
      th.dQ_q = du - th.dQ_cl;
    }
    return th;
  }

  int n_final_outcomes() const { return 2; }
  double final_branch(int m, const Ket2& psi, Ket2& post, StepThermo& th) const {
    double pe = std::norm(psi.e) / psi.norm2();
    post = m == 0 ? Ket2{1.0, 0.0} : Ket2{0.0, 1.0};
    th = {};
    th.dQ_q = (m == 0 ? 0.5 : -0.5) * p_.omega_0 - internal_energy(psi, h_energy_);
    return m == 0 ? pe : 1.0 - pe;
  }

  double p_init_ref(int b) const { return b == 0 ? pe_th_ : 1.0 - pe_th_; }
  double p_final_ref(int m) const { return m == 0 ? pe_th_ : 1.0 - pe_th_; }

  double entropy_production(const TrajectoryRecord& rec) const {
    return entropy_production_tpmp(p_init_ref(rec.initial_branch),
                                   p_final_ref(rec.final_outcome),
                                   accumulate_flows(rec).Q_cl, p_.T);
  }

  const RabiParams& params() const { return p_; }
  const Mat2& h_energy() const { return h_energy_; }

 private:
  RabiParams p_;
  Mat2 h_energy_;
  KrausSet step_;
  double pe_th_ = 0.0;
  std::vector<InitialBranch> inits_;
};

}  // namespace qtraj
