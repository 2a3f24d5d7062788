#pragma once

// Detection efficiency below one. Detected clicks keep their jump operators;
// missed photons fold into a purity-decreasing no-click map. Pure-state
// completions of an imperfect record ("fictitious" trajectories) restore the
// fluctuation theorem through a per-record correction term.
//
// The machinery below the generic step is restricted to diagonal Stark-type
// drives, where the conditional state never leaves the energy basis and the
// completion set is a two-state chain conditioned on the click record and on
// both boundary energy measurements.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/kraus.hpp"
#include "qtraj/ledger.hpp"
#include "qtraj/protocols.hpp"
#include "qtraj/rng.hpp"
#include "qtraj/trajectory.hpp"

namespace qtraj {

// One efficiency-degraded measurement step on a density matrix. Jump channel
// k fires with probability eta Tr{M_k rho M_k^dag} and applies the pure jump
// map; otherwise the no-click map
//   E0[rho] = M0 rho M0^dag + (1 - eta) sum_k M_k rho M_k^dag
// is applied. rho is renormalized in place; returns the detected label
// (0 = no click).
inline int imperfect_qj_step(Mat2& rho, double eta, const KrausSet& ks, Rng& rng) {
  if (eta < 0.0 || eta > 1.0)
    throw std::invalid_argument("imperfect_qj_step: eta must lie in [0, 1]");
  std::size_t nk = ks.ops.size();
  double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 1; k < nk; ++k) {
    Mat2 jumped = ks.ops[k] * rho * ks.ops[k].adjoint();
    double pk = eta * std::real(jumped.trace());
    acc += pk;
    if (u < acc) {
      rho = (1.0 / std::real(jumped.trace())) * jumped;
      return int(k);
    }
  }
  Mat2 e0 = ks.ops[0] * rho * ks.ops[0].adjoint();
  for (std::size_t k = 1; k < nk; ++k)
    e0 = e0 + (1.0 - eta) * (ks.ops[k] * rho * ks.ops[k].adjoint());
  double p0 = std::real(e0.trace());
  if (p0 <= 0.0) throw std::runtime_error("imperfect_qj_step: no-click weight vanished");
  rho = (1.0 / p0) * e0;
  return 0;
}

inline double purity(const Mat2& rho) { return std::real((rho * rho).trace()); }

// One realization of the Stark ramp watched by detectors of efficiency eta,
// bracketed by projective energy measurements. Carries everything needed to
// rebuild the completion chain: the parameters, the click record, and the
// conditional mixed states.
struct ImperfectTrajectory {
  StarkParams stark;
  double eta = 1.0;
  std::vector<Mat2> rho_series;  // n_steps + 1 conditional states
  std::vector<int> record;       // detector outcomes, 0 no click / 1 down / 2 up
  int init_outcome = 0;          // 0 excited, 1 ground
  int final_outcome = 0;
  double Q_cl_eta = 0.0;  // heat inferred from the detected clicks alone
  double U_init = 0.0;
  double U_final = 0.0;
};

// Pure-state completion of an imperfect record. Undetected steps carry a
// refined label: 0 nothing happened, 1 missed emission, 2 missed absorption.
// Detected steps repeat the recorded label.
struct FictitiousTrajectory {
  std::vector<int> refined_labels;
  double Q_cl_full = 0.0;
  double cond_prob = 1.0;
};

namespace detail_eta {

// Exact per-step branch weights of the diagonal chain, split by detection.
// stay_x is the squared no-jump amplitude from level x and includes the
// Hamiltonian phase contribution to the norm, so the chain reproduces the
// Kraus engine to rounding.
struct EtaChainWeights {
  std::vector<double> w;  // splitting at step boundaries, n + 1 entries
  std::vector<double> stay_e, stay_g, em, ab;
  double eta = 1.0;

  int n_steps() const { return int(stay_e.size()); }
};

inline EtaChainWeights build_weights(const StarkParams& p, double eta) {
  p.validate();
  if (eta < 0.0 || eta > 1.0)
    throw std::invalid_argument("finite-eta chain: eta must lie in [0, 1]");
  EtaChainWeights cw;
  cw.eta = eta;
  int n = p.n_steps;
  double dt = p.dt();
  cw.w.resize(n + 1);
  cw.stay_e.resize(n);
  cw.stay_g.resize(n);
  cw.em.resize(n);
  cw.ab.resize(n);
  for (int k = 0; k <= n; ++k) cw.w[k] = p.omega_at(k * dt);
  for (int k = 0; k < n; ++k) {
    double nb = thermal_occupation(cw.w[k], p.T);
    double gm = p.gamma_q * (nb + 1.0) * dt;
    double gp = p.gamma_q * nb * dt;
    cw.stay_e[k] = (1.0 - 0.5 * gm) * (1.0 - 0.5 * gm) + dt * dt * cw.w[k] * cw.w[k];
    cw.stay_g[k] = (1.0 - 0.5 * gp) * (1.0 - 0.5 * gp);
    cw.em[k] = gm;
    cw.ab[k] = gp;
  }
  return cw;
}

// Backward messages over the two-state chain: beta[k][s] is proportional to
// the probability of reproducing the record from step k onward and ending in
// the recorded final level, starting from level s (0 excited, 1 ground).
// Rows are normalized to guard against underflow; only ratios are consumed.
inline std::vector<std::array<double, 2>> backward_messages(const EtaChainWeights& cw,
                                                            const std::vector<int>& record,
                                                            int final_outcome) {
  int n = cw.n_steps();
  if (int(record.size()) != n)
    throw std::invalid_argument("finite-eta chain: record length mismatch");
  std::vector<std::array<double, 2>> beta(n + 1);
  beta[n] = {final_outcome == 0 ? 1.0 : 0.0, final_outcome == 1 ? 1.0 : 0.0};
  for (int k = n - 1; k >= 0; --k) {
    double be, bg;
    if (record[k] == 1) {  // detected emission: only e -> g
      be = cw.eta * cw.em[k] * beta[k + 1][1];
      bg = 0.0;
    } else if (record[k] == 2) {  // detected absorption: only g -> e
      be = 0.0;
      bg = cw.eta * cw.ab[k] * beta[k + 1][0];
    } else {  // no click: stay, or a missed quantum
      be = cw.stay_e[k] * beta[k + 1][0] + (1.0 - cw.eta) * cw.em[k] * beta[k + 1][1];
      bg = cw.stay_g[k] * beta[k + 1][1] + (1.0 - cw.eta) * cw.ab[k] * beta[k + 1][0];
    }
    double s = be + bg;
    if (s <= 0.0) throw std::runtime_error("finite-eta chain: record has zero probability");
    beta[k] = {be / s, bg / s};
  }
  return beta;
}

inline void require_diagonal(const ImperfectTrajectory& traj) {
  for (const Mat2& rho : traj.rho_series)
    if (std::abs(rho.eg) > 1e-12 || std::abs(rho.ge) > 1e-12)
      throw std::invalid_argument(
          "finite-eta completion: drive must keep the state diagonal in the energy basis");
}

}  // namespace detail_eta

// Stark ramp monitored at efficiency eta.
class FiniteEtaStark {
 public:
  FiniteEtaStark(const StarkParams& p, double eta) : p_(p), eta_(eta) {
    p_.validate();
    if (eta < 0.0 || eta > 1.0)
      throw std::invalid_argument("FiniteEtaStark: eta must lie in [0, 1]");
  }

  const StarkParams& params() const { return p_; }
  double eta() const { return eta_; }

  double delta_F() const {
    return qubit_free_energy(p_.omega_at(p_.t_f), p_.T) - qubit_free_energy(p_.omega0, p_.T);
  }

  ImperfectTrajectory run(Rng& rng) const {
    ImperfectTrajectory traj;
    traj.stark = p_;
    traj.eta = eta_;
    int n = p_.n_steps;
    traj.rho_series.reserve(n + 1);
    traj.record.reserve(n);

    double pe0 = p_.thermal_pe(p_.omega0);
    traj.init_outcome = rng.uniform() < pe0 ? 0 : 1;
    traj.U_init = traj.init_outcome == 0 ? p_.omega0 : 0.0;
    Mat2 rho = outer(traj.init_outcome == 0 ? Ket2{1.0, 0.0} : Ket2{0.0, 1.0});
    traj.rho_series.push_back(rho);

    KrausSet ks;
    double dt = p_.dt();
    for (int k = 0; k < n; ++k) {
      double w = p_.omega_at(k * dt);
      thermal_kraus_into(ks, p_.gamma_q, thermal_occupation(w, p_.T), dt,
                         w * outer(Ket2{1.0, 0.0}));
      int label = imperfect_qj_step(rho, eta_, ks, rng);
      traj.record.push_back(label);
      traj.rho_series.push_back(rho);
      if (label == 1) traj.Q_cl_eta -= w;
      if (label == 2) traj.Q_cl_eta += w;
    }

    double pe = std::real(rho.ee);
    traj.final_outcome = rng.uniform() < pe ? 0 : 1;
    double wf = p_.omega_at(p_.t_f);
    traj.U_final = traj.final_outcome == 0 ? wf : 0.0;
    return traj;
  }

 private:
  StarkParams p_;
  double eta_;
};

// All pure completions of the record, with exact conditional probabilities.
// The branching is binary per no-click step (a missed quantum must move the
// level), so the live set has at most 2^{N_0} members; the declared budget is
// still counted as 3^{N_0} to match the completion alphabet.
inline std::vector<FictitiousTrajectory> enumerate_fictitious(const ImperfectTrajectory& traj,
                                                              std::size_t cap = 10000) {
  detail_eta::require_diagonal(traj);
  detail_eta::EtaChainWeights cw = detail_eta::build_weights(traj.stark, traj.eta);
  int n = cw.n_steps();
  std::size_t n0 = 0;
  for (int r : traj.record)
    if (r == 0) ++n0;
  double combos = std::pow(3.0, double(n0));
  if (combos > double(cap))
    throw std::invalid_argument("enumerate_fictitious: completion set exceeds cap");

  std::vector<FictitiousTrajectory> out;
  std::vector<int> labels(n, 0);
  double total = 0.0;

  // depth-first over steps; prob carries the raw path weight
  auto dfs = [&](auto&& self, int k, int s, double prob, double q) -> void {
    if (prob <= 0.0) return;
    if (k == n) {
      if (s != traj.final_outcome) return;
      FictitiousTrajectory f;
      f.refined_labels = labels;
      f.Q_cl_full = q;
      f.cond_prob = prob;  // normalized after the walk
      total += prob;
      out.push_back(std::move(f));
      return;
    }
    int rec = traj.record[k];
    double w = cw.w[k];
    if (rec == 1) {
      labels[k] = 1;
      if (s == 0) self(self, k + 1, 1, prob * cw.eta * cw.em[k], q - w);
      return;
    }
    if (rec == 2) {
      labels[k] = 2;
      if (s == 1) self(self, k + 1, 0, prob * cw.eta * cw.ab[k], q + w);
      return;
    }
    labels[k] = 0;
    self(self, k + 1, s, prob * (s == 0 ? cw.stay_e[k] : cw.stay_g[k]), q);
    if (s == 0) {
      labels[k] = 1;
      self(self, k + 1, 1, prob * (1.0 - cw.eta) * cw.em[k], q - w);
    } else {
      labels[k] = 2;
      self(self, k + 1, 0, prob * (1.0 - cw.eta) * cw.ab[k], q + w);
    }
    labels[k] = 0;
  };
  dfs(dfs, 0, traj.init_outcome, 1.0, 0.0);
  if (total <= 0.0)
    throw std::runtime_error("enumerate_fictitious: record has zero probability");
  for (FictitiousTrajectory& f : out) f.cond_prob /= total;
  return out;
}

// Draws completions from the exact conditional law p(completion | record and
// both boundary outcomes) by backward reachability plus a forward walk.
inline std::vector<FictitiousTrajectory> sample_fictitious(const ImperfectTrajectory& traj,
                                                           std::size_t n_samples, Rng& rng) {
  detail_eta::require_diagonal(traj);
  detail_eta::EtaChainWeights cw = detail_eta::build_weights(traj.stark, traj.eta);
  int n = cw.n_steps();
  auto beta = detail_eta::backward_messages(cw, traj.record, traj.final_outcome);
  if (beta[0][traj.init_outcome == 0 ? 0 : 1] <= 0.0)
    throw std::runtime_error("sample_fictitious: record has zero probability");

  // per-step flip probabilities conditioned on the future record
  std::vector<double> flip_e(n), flip_g(n);
  for (int k = 0; k < n; ++k) {
    if (traj.record[k] != 0) continue;
    double se = cw.stay_e[k] * beta[k + 1][0];
    double me = (1.0 - cw.eta) * cw.em[k] * beta[k + 1][1];
    flip_e[k] = se + me > 0.0 ? me / (se + me) : 0.0;
    double sg = cw.stay_g[k] * beta[k + 1][1];
    double mg = (1.0 - cw.eta) * cw.ab[k] * beta[k + 1][0];
    flip_g[k] = sg + mg > 0.0 ? mg / (sg + mg) : 0.0;
  }

  std::vector<FictitiousTrajectory> out(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    FictitiousTrajectory& f = out[i];
    f.refined_labels.assign(n, 0);
    int s = traj.init_outcome;
    double q = 0.0, cond = 1.0;
    for (int k = 0; k < n; ++k) {
      int rec = traj.record[k];
      if (rec == 1) {
        f.refined_labels[k] = 1;
        q -= cw.w[k];
        s = 1;
        continue;
      }
      if (rec == 2) {
        f.refined_labels[k] = 2;
        q += cw.w[k];
        s = 0;
        continue;
      }
      double pf = s == 0 ? flip_e[k] : flip_g[k];
      if (pf > 0.0 && rng.uniform() < pf) {
        if (s == 0) {
          f.refined_labels[k] = 1;
          q -= cw.w[k];
          s = 1;
        } else {
          f.refined_labels[k] = 2;
          q += cw.w[k];
          s = 0;
        }
        cond *= pf;
      } else {
        cond *= 1.0 - pf;
      }
    }
    f.Q_cl_full = q;
    f.cond_prob = cond;
  }
  return out;
}

// log p(record and final outcome | initial outcome) under the unnormalized
// Kraus composition, by a forward pass over the two-state chain.
inline double record_log_prob(const ImperfectTrajectory& traj) {
  detail_eta::require_diagonal(traj);
  detail_eta::EtaChainWeights cw = detail_eta::build_weights(traj.stark, traj.eta);
  int n = cw.n_steps();
  double fe = traj.init_outcome == 0 ? 1.0 : 0.0;
  double fg = 1.0 - fe;
  double log_scale = 0.0;
  for (int k = 0; k < n; ++k) {
    int rec = traj.record[k];
    double fe1, fg1;
    if (rec == 1) {
      fg1 = cw.eta * cw.em[k] * fe;
      fe1 = 0.0;
    } else if (rec == 2) {
      fe1 = cw.eta * cw.ab[k] * fg;
      fg1 = 0.0;
    } else {
      fe1 = cw.stay_e[k] * fe + (1.0 - cw.eta) * cw.ab[k] * fg;
      fg1 = cw.stay_g[k] * fg + (1.0 - cw.eta) * cw.em[k] * fe;
    }
    double s = fe1 + fg1;
    if (s <= 0.0) throw std::runtime_error("record_log_prob: record has zero probability");
    fe = fe1 / s;
    fg = fg1 / s;
    log_scale += std::log(s);
  }
  double pf = traj.final_outcome == 0 ? fe : fg;
  if (pf <= 0.0) throw std::runtime_error("record_log_prob: record has zero probability");
  return log_scale + std::log(pf);
}

// Exact correction term: -log sum over completions of
// p(completion | record) exp((Q_cl_full - Q_cl_eta)/T), evaluated by a
// transfer-matrix pass over the two-state chain. Rows are rescaled each step
// and the log of the scale is accumulated, so long records stay in range.
inline double sigma_exact(const ImperfectTrajectory& traj, double T) {
  if (T <= 0.0) throw std::invalid_argument("sigma_exact: T must be > 0");
  detail_eta::require_diagonal(traj);
  detail_eta::EtaChainWeights cw = detail_eta::build_weights(traj.stark, traj.eta);
  int n = cw.n_steps();

  // plain weights give p(record); heat-tilted weights give the numerator
  double ge = traj.init_outcome == 0 ? 1.0 : 0.0;
  double gg = 1.0 - ge;
  double he = ge, hg = gg;
  double log_g = 0.0, log_h = 0.0;
  for (int k = 0; k < n; ++k) {
    int rec = traj.record[k];
    double w = cw.w[k];
    double fe = std::exp(-w / T);  // tilt of a missed/detected emission
    double fa = std::exp(+w / T);
    double ge1, gg1, he1, hg1;
    if (rec == 1) {
      ge1 = 0.0;
      gg1 = cw.eta * cw.em[k] * ge;
      he1 = 0.0;
      hg1 = cw.eta * cw.em[k] * fe * he;
    } else if (rec == 2) {
      ge1 = cw.eta * cw.ab[k] * gg;
      gg1 = 0.0;
      he1 = cw.eta * cw.ab[k] * fa * hg;
      hg1 = 0.0;
    } else {
      ge1 = cw.stay_e[k] * ge + (1.0 - cw.eta) * cw.ab[k] * gg;
      gg1 = cw.stay_g[k] * gg + (1.0 - cw.eta) * cw.em[k] * ge;
      he1 = cw.stay_e[k] * he + (1.0 - cw.eta) * cw.ab[k] * fa * hg;
      hg1 = cw.stay_g[k] * hg + (1.0 - cw.eta) * cw.em[k] * fe * he;
    }
    double sg = ge1 + gg1, sh = he1 + hg1;
    if (sg <= 0.0 || sh <= 0.0)
      throw std::runtime_error("sigma_exact: record has zero probability");
    ge = ge1 / sg;
    gg = gg1 / sg;
    he = he1 / sh;
    hg = hg1 / sh;
    log_g += std::log(sg);
    log_h += std::log(sh);
  }
  double pg = traj.final_outcome == 0 ? ge : gg;
  double ph = traj.final_outcome == 0 ? he : hg;
  if (pg <= 0.0 || ph <= 0.0)
    throw std::runtime_error("sigma_exact: record has zero probability");
  double log_sum = (log_h + std::log(ph)) - (log_g + std::log(pg));
  return -(log_sum - traj.Q_cl_eta / T);
}

// Monte-Carlo correction from conditionally drawn completions.
inline double sigma_mc(const ImperfectTrajectory& traj,
                       const std::vector<FictitiousTrajectory>& samples, double T) {
  if (T <= 0.0) throw std::invalid_argument("sigma_mc: T must be > 0");
  if (samples.empty()) throw std::invalid_argument("sigma_mc: no samples");
  double acc = 0.0;
  for (const FictitiousTrajectory& f : samples)
    acc += std::exp((f.Q_cl_full - traj.Q_cl_eta) / T);
  return -std::log(acc / double(samples.size()));
}

// Policy wrapper: the completion sum is evaluated exactly whenever the
// declared completion count 3^{N_0} fits the exhaustive budget, and from the
// provided samples otherwise.
inline double sigma_correction(const ImperfectTrajectory& traj,
                               const std::vector<FictitiousTrajectory>& samples, double T) {
  std::size_t n0 = 0;
  for (int r : traj.record)
    if (r == 0) ++n0;
  if (std::pow(3.0, double(n0)) <= 1e4) return sigma_exact(traj, T);
  return sigma_mc(traj, samples, T);
}

// Entropy production inferred from the detected clicks alone, in k_B units.
inline double measured_entropy_production(const ImperfectTrajectory& traj, double delta_F) {
  return (traj.U_final - traj.U_init - traj.Q_cl_eta - delta_F) / traj.stark.T;
}

// <exp(-(Delta U - Q_cl_eta - Delta F)/k_B T)>: biased away from 1 once
// clicks are missed.
inline FTEstimate uncorrected_je(const std::vector<ImperfectTrajectory>& trajs,
                                 double delta_F, double T) {
  std::vector<double> ex(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i)
    ex[i] = (trajs[i].U_final - trajs[i].U_init - trajs[i].Q_cl_eta - delta_F) / T;
  return exp_mean_estimator(ex);
}

// <exp(-measured entropy production - sigma)>: equals 1 for any eta.
inline FTEstimate corrected_je(const std::vector<ImperfectTrajectory>& trajs,
                               const std::vector<double>& sigmas, double delta_F, double T) {
  if (sigmas.size() != trajs.size())
    throw std::invalid_argument("corrected_je: one sigma per trajectory required");
  std::vector<double> ex(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i)
    ex[i] = (trajs[i].U_final - trajs[i].U_init - trajs[i].Q_cl_eta - delta_F) / T + sigmas[i];
  return exp_mean_estimator(ex);
}

}  // namespace qtraj
