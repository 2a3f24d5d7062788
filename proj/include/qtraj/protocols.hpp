#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qtraj/kraus.hpp"
#include "qtraj/ledger.hpp"
#include "qtraj/trajectory.hpp"

namespace qtraj {

// Bloch-axis kets with <sigma> = (sin t cos p, sin t sin p, cos t).
inline Ket2 axis_plus(double theta_n, double phi_n) {
  return {std::cos(0.5 * theta_n), std::sin(0.5 * theta_n) * std::exp(cplx(0.0, phi_n))};
}

inline Ket2 axis_minus(double theta_n, double phi_n) {
  return {-std::sin(0.5 * theta_n), std::cos(0.5 * theta_n) * std::exp(cplx(0.0, phi_n))};
}

// ======================= Stark frequency ramp =======================
//
// Thermal qubit whose splitting is ramped linearly, omega_q(t) = omega0 (1 + mu t),
// while it stays weakly coupled to a bath at temperature T. Jump rates follow the
// instantaneous frequency. Two-point protocol: thermal draw at omega0, projective
// energy readout at omega_q(t_f).
struct StarkParams {
  double gamma_q = 1.0;
  double omega0 = 0.3;
  double mu = 1.0;
  double T = 0.1;
  double t_f = 1.0;
  int n_steps = 1000;

  void validate() const {
    if (gamma_q <= 0.0 || omega0 <= 0.0 || mu < 0.0 || T <= 0.0 || t_f <= 0.0 || n_steps <= 0)
      throw std::invalid_argument("StarkParams: non-positive parameter");
    if (omega0 * (1.0 + mu * t_f) <= 0.0)
      throw std::invalid_argument("StarkParams: ramp crosses zero frequency");
  }
  double dt() const { return t_f / n_steps; }
  double omega_at(double t) const { return omega0 * (1.0 + mu * t); }
  // Thermal level populations {p_e, p_g} at splitting omega.
  double thermal_pe(double omega) const { return 1.0 / (1.0 + std::exp(omega / T)); }
};

class StarkProtocol {
 public:
  explicit StarkProtocol(const StarkParams& p) : p_(p) {
    p_.validate();
    double pe = p_.thermal_pe(p_.omega0);
    inits_ = {{pe, Ket2{1.0, 0.0}}, {1.0 - pe, Ket2{0.0, 1.0}}};
  }

  const StarkParams& params() const { return p_; }
  int n_steps() const { return p_.n_steps; }
  double time(int k) const { return k * p_.dt(); }
  const std::vector<InitialBranch>& initial_branches() const { return inits_; }

  void kraus(int k, KrausSet& out) const {
    double w = p_.omega_at(time(k));
    thermal_kraus_into(out, p_.gamma_q, thermal_occupation(w, p_.T), p_.dt(),
                       w * outer(Ket2{1.0, 0.0}));
  }

  StepThermo thermo(int k, int label, const Ket2& pre, const Ket2& post) const {
    double wk = p_.omega_at(time(k));
    double wk1 = p_.omega_at(time(k + 1));
    double pe_pre = std::norm(pre.e) / pre.norm2();
    double pe_post = std::norm(post.e) / post.norm2();
    StepThermo th;
    th.dW = (wk1 - wk) * pe_post;
    if (label == 0) {
      th.dQ_q = wk * (pe_post - pe_pre);
    } else if (label == 1) {
      th.dQ_cl = -wk;
      th.dQ_q = wk * (1.0 - pe_pre);
    } else {
      th.dQ_cl = wk;
      th.dQ_q = -wk * pe_pre;
    }
    return th;
  }

  // Energy readout at t_f. H(t_f) is diagonal, so the branch bookkeeping uses
  // populations directly; on diagonal states the heat vanishes identically.
  int n_final_outcomes() const { return 2; }
  double final_branch(int m, const Ket2& psi, Ket2& post, StepThermo& th) const {
    double pe = std::norm(psi.e) / psi.norm2();
    post = m == 0 ? Ket2{1.0, 0.0} : Ket2{0.0, 1.0};
    th = {};
    th.dQ_q = p_.omega_at(p_.t_f) * ((m == 0 ? 1.0 : 0.0) - pe);
    return m == 0 ? pe : 1.0 - pe;
  }

  // Reference probabilities for the two-point entropy: thermal at the
  // endpoint splittings. Branch/outcome 0 is the excited level.
  double p_init_ref(int branch) const {
    double pe = p_.thermal_pe(p_.omega0);
    return branch == 0 ? pe : 1.0 - pe;
  }
  double p_final_ref(int outcome) const {
    double pe = p_.thermal_pe(p_.omega_at(p_.t_f));
    return outcome == 0 ? pe : 1.0 - pe;
  }

  double entropy_production(const TrajectoryRecord& rec) const {
    return entropy_production_tpmp(p_init_ref(rec.initial_branch),
                                   p_final_ref(rec.final_outcome),
                                   accumulate_flows(rec).Q_cl, p_.T);
  }

 private:
  StarkParams p_;
  std::vector<InitialBranch> inits_;
};

// Populations never leave the energy basis on this protocol, so trajectories
// reduce to a classical two-state chain. Branch weights replicate the Kraus
// engine exactly, including the O(dt^2) no-jump norm from the Hamiltonian.
struct StarkChainResult {
  double W = 0.0;
  double Q_cl = 0.0;
  double dis = 0.0;
  int s_init = 0;  // 1: excited
  int s_final = 0;
};

class StarkChain {
 public:
  explicit StarkChain(const StarkParams& p) : p_(p) {
    p_.validate();
    int n = p_.n_steps;
    w_.resize(n + 1);
    stay_e_.resize(n);
    stay_g_.resize(n);
    jump_e_.resize(n);
    jump_g_.resize(n);
    for (int k = 0; k <= n; ++k) w_[k] = p_.omega_at(k * p_.dt());
    for (int k = 0; k < n; ++k) {
      double nb = thermal_occupation(w_[k], p_.T);
      double dt = p_.dt();
      double gm = p_.gamma_q * (nb + 1.0) * dt;  // emission probability weight
      double gp = p_.gamma_q * nb * dt;          // absorption probability weight
      double m0e = 1.0 - 0.5 * gm;
      double m0g = 1.0 - 0.5 * gp;
      stay_e_[k] = m0e * m0e + dt * dt * w_[k] * w_[k];
      jump_e_[k] = gm;
      stay_g_[k] = m0g * m0g;
      jump_g_[k] = gp;
    }
  }

  const StarkParams& params() const { return p_; }

  // Normalized per-step probabilities from state s (1 = excited).
  void step_probs(int k, int s, double& p_stay, double& p_jump) const {
    double a = s == 1 ? stay_e_[k] : stay_g_[k];
    double b = s == 1 ? jump_e_[k] : jump_g_[k];
    p_stay = a / (a + b);
    p_jump = b / (a + b);
  }

  StarkChainResult run(Rng& rng) const {
    StarkChainResult r;
    double pe0 = p_.thermal_pe(p_.omega0);
    r.s_init = rng.uniform() < pe0 ? 1 : 0;
    int s = r.s_init;
    for (int k = 0; k < p_.n_steps; ++k) {
      double ps, pj;
      step_probs(k, s, ps, pj);
      if (rng.uniform() < pj) {
        if (s == 1) {
          r.Q_cl -= w_[k];
          s = 0;
        } else {
          r.Q_cl += w_[k];
          s = 1;
          r.W += w_[k + 1] - w_[k];
        }
      } else if (s == 1) {
        r.W += w_[k + 1] - w_[k];
      }
    }
    r.s_final = s;
    double p_i = r.s_init == 1 ? pe0 : 1.0 - pe0;
    double pef = p_.thermal_pe(w_.back());
    double p_f = r.s_final == 1 ? pef : 1.0 - pef;
    r.dis = std::log(p_i) - std::log(p_f) - r.Q_cl / p_.T;
    return r;
  }

 private:
  StarkParams p_;
  std::vector<double> w_, stay_e_, stay_g_, jump_e_, jump_g_;
};

inline StarkProtocol stark_shift_protocol(double mu, double T, double t_f, double gamma_q,
                                           double omega0 = 0.3, int n_steps = 2000) {
  StarkParams p;
  p.mu = mu;
  p.T = T;
  p.t_f = t_f;
  p.gamma_q = gamma_q;
  p.omega0 = omega0;
  p.n_steps = n_steps;
  return StarkProtocol(p);
}

// Exact moments of the discrete chain by 2x2 transfer products: the integral
// fluctuation mean and the first moments of entropy, work, and classical heat.
struct StarkExactMoments {
  double ift = 0.0;
  double mean_dis = 0.0;
  double mean_W = 0.0;
  double mean_Q_cl = 0.0;
};

inline StarkExactMoments stark_exact_moments(const StarkParams& p) {
  StarkChain chain(p);
  double pe0 = p.thermal_pe(p.omega0);
  double prob[2] = {1.0 - pe0, pe0};  // index: 0 ground, 1 excited
  double u[2] = {1.0, 1.0};           // IFT transfer vector
  StarkExactMoments out;
  for (int k = 0; k < p.n_steps; ++k) {
    double wk = p.omega_at(k * p.dt());
    double wk1 = p.omega_at((k + 1) * p.dt());
    double pse, pje, psg, pjg;
    chain.step_probs(k, 1, pse, pje);
    chain.step_probs(k, 0, psg, pjg);
    out.mean_Q_cl += prob[1] * pje * (-wk) + prob[0] * pjg * wk;
    out.mean_W += (wk1 - wk) * (prob[1] * pse + prob[0] * pjg);
    double pg = prob[0] * psg + prob[1] * pje;
    double pe = prob[1] * pse + prob[0] * pjg;
    prob[0] = pg;
    prob[1] = pe;
    double ug = u[0] * psg + u[1] * pje * std::exp(-wk / p.T);
    double ue = u[1] * pse + u[0] * pjg * std::exp(wk / p.T);
    u[0] = ug;
    u[1] = ue;
  }
  double pef = p.thermal_pe(p.omega_at(p.t_f));
  double pref[2] = {1.0 - pef, pef};
  out.ift = u[0] * pref[0] + u[1] * pref[1];
  double e_ln_pi = (1.0 - pe0) * std::log(1.0 - pe0) + pe0 * std::log(pe0);
  double e_ln_pf = prob[0] * std::log(pref[0]) + prob[1] * std::log(pref[1]);
  out.mean_dis = e_ln_pi - e_ln_pf - out.mean_Q_cl / p.T;
  return out;
}

// ======================= Spontaneous emission =======================
//
// Zero-temperature decay of (|e> + |g>)/sqrt(2) under a static splitting;
// trajectories split into a jump class and a no-jump class.
struct SpontEmParams {
  double gamma_q = 1.0;
  double omega0 = 1.0;
  double t_f = 1.0;
  int n_steps = 1000;

  void validate() const {
    if (gamma_q <= 0.0 || omega0 <= 0.0 || t_f <= 0.0 || n_steps <= 0)
      throw std::invalid_argument("SpontEmParams: non-positive parameter");
  }
  double dt() const { return t_f / n_steps; }
};

class SpontEmProtocol {
 public:
  explicit SpontEmProtocol(const SpontEmParams& p) : p_(p) {
    p_.validate();
    inits_ = {{1.0, normalized(Ket2{1.0, 1.0})}};
  }

  const SpontEmParams& params() const { return p_; }
  int n_steps() const { return p_.n_steps; }
  double time(int k) const { return k * p_.dt(); }
  const std::vector<InitialBranch>& initial_branches() const { return inits_; }

  void kraus(int, KrausSet& out) const {
    thermal_kraus_into(out, p_.gamma_q, 0.0, p_.dt(), p_.omega0 * outer(Ket2{1.0, 0.0}));
  }

  StepThermo thermo(int, int label, const Ket2& pre, const Ket2& post) const {
    double pe_pre = std::norm(pre.e) / pre.norm2();
    double pe_post = std::norm(post.e) / post.norm2();
    StepThermo th;
    if (label == 0) {
      th.dQ_q = p_.omega0 * (pe_post - pe_pre);
    } else {
      th.dQ_cl = -p_.omega0;
      th.dQ_q = p_.omega0 * (1.0 - pe_pre);
    }
    return th;
  }

  int n_final_outcomes() const { return 0; }
  double final_branch(int, const Ket2&, Ket2&, StepThermo&) const {
    throw std::logic_error("SpontEmProtocol: no terminal measurement");
  }

 private:
  SpontEmParams p_;
  std::vector<InitialBranch> inits_;
};

inline SpontEmProtocol spontaneous_emission_protocol(double gamma_q, double t_f,
                                                     double omega0 = 1.0, int n_steps = 1000) {
  SpontEmParams p;
  p.gamma_q = gamma_q;
  p.t_f = t_f;
  p.omega0 = omega0;
  p.n_steps = n_steps;
  return SpontEmProtocol(p);
}

inline double spont_em_jump_prob(double gamma, double t_f) {
  return 0.5 * (1.0 - std::exp(-gamma * t_f));
}

// Continuum no-jump state at time t (normalized).
inline Ket2 spont_em_nojump_state(double gamma, double omega0, double t) {
  return normalized(Ket2{std::exp(cplx(-0.5 * gamma * t, -omega0 * t)), 1.0});
}

// ======================= Tilted-state energy readout =======================
//
// |+_theta> = cos(theta/2)|e> + sin(theta/2)|g> is read out projectively in the
// energy basis. The reverse reference mixes the realized posteriors, so each
// record carries entropy -ln p(m) and the exponentiated mean is sum_m p(m)^2.
struct AbsIrrParams {
  double theta = pi / 2.0;
  double omega0 = 1.0;

  void validate() const {
    if (theta < 0.0 || theta > pi) throw std::invalid_argument("AbsIrrParams: theta outside [0, pi]");
    if (omega0 <= 0.0) throw std::invalid_argument("AbsIrrParams: omega0 must be > 0");
  }
};

class AbsIrrProtocol {
 public:
  explicit AbsIrrProtocol(const AbsIrrParams& p) : p_(p) {
    p_.validate();
    inits_ = {{1.0, Ket2{std::cos(0.5 * p_.theta), std::sin(0.5 * p_.theta)}}};
  }

  const AbsIrrParams& params() const { return p_; }
  int n_steps() const { return 0; }
  double time(int) const { return 0.0; }
  const std::vector<InitialBranch>& initial_branches() const { return inits_; }
  void kraus(int, KrausSet&) const {
    throw std::logic_error("AbsIrrProtocol: no evolution steps");
  }
  StepThermo thermo(int, int, const Ket2&, const Ket2&) const { return {}; }

  int n_final_outcomes() const { return 2; }
  double final_branch(int m, const Ket2& psi, Ket2& post, StepThermo& th) const {
    MeasureOutcome mo = projective_measure_branch(psi, p_.omega0 * outer(Ket2{1.0, 0.0}), m);
    post = mo.post;
    th = {};
    th.dQ_q = mo.dQ_q;
    return mo.prob;
  }

  // Entropy production of one record, in k_B.
  double entropy_production(const TrajectoryRecord& rec) const {
    return -std::log(rec.p_final_born);
  }

 private:
  AbsIrrParams p_;
  std::vector<InitialBranch> inits_;
};

inline double abs_irr_exact_ift(double theta) {
  double c = std::cos(0.5 * theta), s = std::sin(0.5 * theta);
  return c * c * c * c + s * s * s * s;
}

inline double abs_irr_mean_entropy(double theta) {
  return shannon_entropy(std::cos(0.5 * theta) * std::cos(0.5 * theta));
}

// ======================= Measurement-powered engine =======================
//
// Cycle on a qubit with H0 = omega0 |e><e|: y-rotation by the Rabi angle theta
// extracts work from the |+n> coherence, a projective sigma_n readout refuels
// it as quantum heat, feedback restores |+n> on the -1 outcome, and the
// demon's one-bit memory is erased at Landauer cost T_C S_D.
struct MpeParams {
  double theta_n = pi / 2.0;
  double phi_n = 0.0;
  double theta = pi / 4.0;  // Rabi angle
  double omega0 = 1.0;
  double T_C = 0.1;
  double tau_m = 0.0;
  double tau_fb = 0.0;
  double g = 1.0;

  void validate() const {
    if (theta <= 0.0 || theta >= pi) throw std::invalid_argument("MpeParams: need 0 < theta < pi");
    if (tau_m < 0.0 || tau_fb < 0.0) throw std::invalid_argument("MpeParams: negative duration");
    if (omega0 <= 0.0 || T_C <= 0.0 || g <= 0.0)
      throw std::invalid_argument("MpeParams: non-positive scale");
  }
  double tau_w() const { return theta / g; }
  double x_n() const { return std::sin(theta_n) * std::cos(phi_n); }
  double y_n() const { return std::sin(theta_n) * std::sin(phi_n); }
  double z_n() const { return std::cos(theta_n); }
};

inline double mpe_efficiency(double theta, double omega0, double T_C) {
  if (std::sin(theta) == 0.0) throw std::invalid_argument("mpe_efficiency: sin(theta) = 0");
  double c2 = std::cos(0.5 * theta) * std::cos(0.5 * theta);
  return 1.0 - (2.0 * T_C / omega0) * shannon_entropy(c2) / std::sin(theta);
}

inline double mpe_p_minus(const MpeParams& p) {
  double s2 = std::sin(0.5 * p.theta) * std::sin(0.5 * p.theta);
  return s2 * (1.0 - p.y_n() * p.y_n());
}

struct MpePower {
  double ideal = 0.0;  // feedback and readout instantaneous
  double real = 0.0;   // rescaled by the mean cycle duration
};

inline MpePower mpe_power(const MpeParams& p) {
  p.validate();
  MpePower out;
  out.ideal = p.g * (p.omega0 / 2.0) *
              (std::sin(p.theta) / p.theta * p.x_n() +
               (1.0 - std::cos(p.theta)) / p.theta * p.z_n() * p.y_n() * p.y_n());
  double tw = p.tau_w();
  out.real = out.ideal * tw / (tw + p.tau_m + mpe_p_minus(p) * p.tau_fb);
  return out;
}

// One engine cycle as an exactly complete two-outcome Kraus step:
//   K_+ = |+n><+n| U_rot,  K_- = |+n><-n| U_rot  (feedback folded in).
// Labels: 0 readout +1, 1 readout -1. Work holds the rotation work plus the
// conditional feedback cost; quantum heat is the readout collapse.
class MpeProtocol {
 public:
  MpeProtocol(const MpeParams& p, int n_cycles) : p_(p), n_(n_cycles) {
    p_.validate();
    if (n_ <= 0) throw std::invalid_argument("MpeProtocol: need at least one cycle");
    plus_ = axis_plus(p_.theta_n, p_.phi_n);
    minus_ = axis_minus(p_.theta_n, p_.phi_n);
    double c = std::cos(0.5 * p_.theta), s = std::sin(0.5 * p_.theta);
    u_rot_ = Mat2{c, -s, s, c};
    h0_ = p_.omega0 * outer(Ket2{1.0, 0.0});
    inits_ = {{1.0, plus_}};
    ks_.ops = {outer(plus_, plus_) * u_rot_, outer(plus_, minus_) * u_rot_};
    ks_.dt = cycle_time();
    ks_.residual_bound = 1e-12;
    ks_.validate();
  }

  const MpeParams& params() const { return p_; }
  double cycle_time() const { return p_.tau_w() + p_.tau_m + p_.tau_fb; }
  int n_steps() const { return n_; }
  double time(int k) const { return k * cycle_time(); }
  const std::vector<InitialBranch>& initial_branches() const { return inits_; }
  void kraus(int, KrausSet& out) const { out = ks_; }

  StepThermo thermo(int, int label, const Ket2& pre, const Ket2&) const {
    Ket2 rotated = normalized(u_rot_ * pre);
    double u_pre = internal_energy(pre, h0_);
    double u_rot = internal_energy(rotated, h0_);
    const Ket2& readout = (label == 0) ? plus_ : minus_;
    StepThermo th;
    th.dW = u_rot - u_pre;
    th.dQ_q = internal_energy(readout, h0_) - u_rot;
    if (label == 1) th.dW += internal_energy(plus_, h0_) - internal_energy(minus_, h0_);
    return th;
  }

  int n_final_outcomes() const { return 0; }
  double final_branch(int, const Ket2&, Ket2&, StepThermo&) const {
    throw std::logic_error("MpeProtocol: no terminal measurement");
  }

  // Deterministic per-cycle bookkeeping that is not a qubit energy flow.
  double memory_entropy() const {
    return shannon_entropy(std::cos(0.5 * p_.theta) * std::cos(0.5 * p_.theta));
  }
  double erasure_work() const { return p_.T_C * memory_entropy(); }

 private:
  MpeParams p_;
  int n_;
  Ket2 plus_, minus_;
  Mat2 u_rot_, h0_;
  KrausSet ks_;
  std::vector<InitialBranch> inits_;
};

struct MpeCycleMeans {
  double W_ext = 0.0;  // work released to the drive per cycle (positive out)
  double W_fb = 0.0;   // feedback work injected per cycle
  double Q_q = 0.0;
  double S_D = 0.0;
  double W_er = 0.0;
  double p_minus = 0.0;
  double eta = 0.0;         // (W_ext - W_fb - W_er) / Q_q
  double power_real = 0.0;  // net work over the mean realized cycle duration
  double se_W = 0.0;        // standard error of the net work mean
  std::size_t n_cycles = 0;
};

// Monte-Carlo cycle statistics; cycles are independent, so they are run as
// single-step trajectories under the ensemble seed contract.
inline MpeCycleMeans mpe_cycle_simulate(const MpeParams& p, std::size_t n_cycles,
                                        std::uint64_t seed, int n_threads = 1) {
  MpeProtocol proto(p, 1);
  std::vector<double> net(n_cycles), wfb(n_cycles), qq(n_cycles);
  std::vector<unsigned char> fb(n_cycles);
  run_ensemble(proto, n_cycles, seed, n_threads, [&](std::size_t i, TrajectoryRecord&& rec) {
    const StepThermo& th = rec.record[0].thermo;
    double w_fb_i = rec.record[0].label == 1
                        ? p.omega0 * std::cos(p.theta_n)
                        : 0.0;
    net[i] = -(th.dW - w_fb_i);  // rotation work alone, sign flipped to "extracted"
    wfb[i] = w_fb_i;
    qq[i] = th.dQ_q;
    fb[i] = rec.record[0].label == 1 ? 1 : 0;
  });
  MpeCycleMeans out;
  out.n_cycles = n_cycles;
  double sw = 0.0, sw2 = 0.0;
  for (std::size_t i = 0; i < n_cycles; ++i) {
    out.W_ext += net[i];
    out.W_fb += wfb[i];
    out.Q_q += qq[i];
    out.p_minus += fb[i];
    double w_net = net[i] - wfb[i];
    sw += w_net;
    sw2 += w_net * w_net;
  }
  out.W_ext /= double(n_cycles);
  out.W_fb /= double(n_cycles);
  out.Q_q /= double(n_cycles);
  out.p_minus /= double(n_cycles);
  MpeProtocol one(p, 1);
  out.S_D = one.memory_entropy();
  out.W_er = one.erasure_work();
  double mw = sw / double(n_cycles);
  out.se_W = std::sqrt(std::max(0.0, sw2 / double(n_cycles) - mw * mw) / double(n_cycles));
  out.eta = out.Q_q != 0.0 ? (out.W_ext - out.W_fb - out.W_er) / out.Q_q : 0.0;
  double cycle = p.tau_w() + p.tau_m + out.p_minus * p.tau_fb;
  out.power_real = mw / cycle;
  return out;
}

// Readout expanded into prepulse / bare sigma_z readout / postpulse, with
// V|+n> = |e>, V|-n> = |g>. The three energy terms add up to the quantum heat
// of the effective sigma_n collapse, outcome by outcome.
struct MpeExpandedCycle {
  int outcome = 0;  // 0: +1
  double w_pre = 0.0;
  double dq_z = 0.0;
  double w_post = 0.0;
  double dq_effective = 0.0;
};

inline MpeExpandedCycle mpe_cycle_expanded(const MpeParams& p, Rng& rng) {
  p.validate();
  Ket2 plus = axis_plus(p.theta_n, p.phi_n);
  Ket2 minus = axis_minus(p.theta_n, p.phi_n);
  double c = std::cos(0.5 * p.theta), s = std::sin(0.5 * p.theta);
  Mat2 u_rot{c, -s, s, c};
  Mat2 h0 = p.omega0 * outer(Ket2{1.0, 0.0});
  Mat2 v = outer(Ket2{1.0, 0.0}, plus) + outer(Ket2{0.0, 1.0}, minus);

  Ket2 rotated = normalized(u_rot * plus);
  Ket2 mapped = normalized(v * rotated);
  MpeExpandedCycle out;
  out.outcome = rng.uniform() < std::norm(mapped.e) ? 0 : 1;
  double em = out.outcome == 0 ? p.omega0 : 0.0;
  const Ket2& readout = out.outcome == 0 ? plus : minus;
  out.w_pre = internal_energy(mapped, h0) - internal_energy(rotated, h0);
  out.dq_z = em - internal_energy(mapped, h0);
  out.w_post = internal_energy(readout, h0) - em;
  out.dq_effective = internal_energy(readout, h0) - internal_energy(rotated, h0);
  return out;
}

// ======================= Continuous-measurement feedback =======================
//
// A qubit monitored along sigma_z is pinned to the rotating target
// e^{-i omega0 t sigma_z / 2} |+_theta>. Each step books the measurement
// backaction as quantum heat; the corrective rotation books work, applied only
// when its magnitude fits under the cutoff.
struct FeedbackParams {
  double target_theta = pi / 2.0;
  double gamma_meas = 0.1;
  double omega0 = 1.0;
  double w_cutoff = std::numeric_limits<double>::infinity();
  double t_f = 15.0;
  int n_steps = 300;

  void validate() const {
    if (gamma_meas <= 0.0) throw std::invalid_argument("FeedbackParams: gamma_meas must be > 0");
    if (omega0 <= 0.0 || t_f <= 0.0 || n_steps <= 0)
      throw std::invalid_argument("FeedbackParams: non-positive parameter");
    if (target_theta < 0.0 || target_theta > pi)
      throw std::invalid_argument("FeedbackParams: target_theta outside [0, pi]");
    if (w_cutoff < 0.0) throw std::invalid_argument("FeedbackParams: negative cutoff");
    if (gamma_meas * dt() > 0.05)
      throw std::invalid_argument("FeedbackParams: gamma_meas dt must be <= 0.05");
  }
  double dt() const { return t_f / n_steps; }
  Ket2 target(double t) const {
    return {std::cos(0.5 * target_theta) * std::exp(cplx(0.0, -0.5 * omega0 * t)),
            std::sin(0.5 * target_theta) * std::exp(cplx(0.0, +0.5 * omega0 * t))};
  }
};

struct FeedbackResult {
  double mean_fidelity = 0.0;
  double heat_std = 0.0;
  std::vector<double> heat_increments;  // pooled over trajectories and steps
  std::vector<double> work_increments;  // applied feedback work only
  double ks_heat_work = 0.0;
};

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

inline FeedbackResult feedback_protocol(const FeedbackParams& p, std::size_t n_traj,
                                        std::uint64_t seed, int n_threads = 1) {
  p.validate();
  Mat2 h0 = p.omega0 * outer(Ket2{1.0, 0.0});
  Mat2 x = sigma_z();
  std::vector<std::vector<double>> heats(n_traj), works(n_traj);
  std::vector<double> fids(n_traj);
  parallel_trajectories(n_traj, seed, n_threads, [&](std::size_t i, Rng& rng) {
    Ket2 psi = p.target(0.0);
    heats[i].reserve(p.n_steps);
    for (int k = 0; k < p.n_steps; ++k) {
      double u_pre = internal_energy(psi, h0);
      qsd_step(psi, h0, x, p.gamma_meas, p.dt(), rng);
      double u_mid = internal_energy(psi, h0);
      heats[i].push_back(u_mid - u_pre);
      Ket2 targ = p.target((k + 1) * p.dt());
      double w_fb = internal_energy(targ, h0) - u_mid;
      if (std::abs(w_fb) <= p.w_cutoff) {
        psi = targ;
        works[i].push_back(w_fb);
      }
    }
    Ket2 targ_f = p.target(p.t_f);
    fids[i] = std::norm(inner(targ_f, psi)) / psi.norm2();
  });
  FeedbackResult out;
  for (std::size_t i = 0; i < n_traj; ++i) {
    out.mean_fidelity += fids[i];
    out.heat_increments.insert(out.heat_increments.end(), heats[i].begin(), heats[i].end());
    out.work_increments.insert(out.work_increments.end(), works[i].begin(), works[i].end());
  }
  out.mean_fidelity /= double(n_traj);
  double m = 0.0;
  for (double q : out.heat_increments) m += q;
  m /= double(out.heat_increments.size());
  double v = 0.0;
  for (double q : out.heat_increments) v += (q - m) * (q - m);
  out.heat_std = std::sqrt(v / double(out.heat_increments.size()));
  if (!out.work_increments.empty())
    out.ks_heat_work = ks_statistic(out.heat_increments, out.work_increments);
  return out;
}

}  // namespace qtraj
