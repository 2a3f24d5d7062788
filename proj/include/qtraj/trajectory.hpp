#pragma once

#include <cstdint>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/kraus.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

struct StepThermo {
  double dW = 0.0;
  double dQ_cl = 0.0;
  double dQ_q = 0.0;
  double dQ_L = 0.0;
};

struct StepOutcome {
  int label = 0;
  StepThermo thermo;
};

struct InitialBranch {
  double prob = 1.0;
  Ket2 state;
};

// One realized trajectory. states (when kept) brackets record: one state per
// step boundary, so states.size() == record.size() + 1.
struct TrajectoryRecord {
  std::vector<double> t;
  std::vector<Ket2> states;
  std::vector<StepOutcome> record;
  double log_prob = 0.0;  // log of the realized conditional branch probability
  int initial_branch = 0;
  double p_init = 1.0;     // reference probability of the initial draw
  int final_outcome = -1;  // -1: protocol has no terminal measurement
  double p_final_born = 1.0;
  StepThermo final_thermo;
  Ket2 final_state;
};

// Born probabilities of every Kraus branch; returns their sum.
inline double qj_branch_probs(const Ket2& psi, const KrausSet& ks, double* probs) {
  double total = 0.0;
  for (std::size_t r = 0; r < ks.ops.size(); ++r) {
    probs[r] = (ks.ops[r] * psi).norm2();
    total += probs[r];
  }
  return total;
}

// One quantum-jump step: inverse-CDF sample over branch probabilities in label
// order, renormalize, and accumulate the normalized branch log-probability.
inline int qj_step(Ket2& psi, const KrausSet& ks, double& log_prob, Rng& rng) {
  double probs[8];
  if (ks.ops.size() > 8) throw std::invalid_argument("qj_step: too many Kraus branches");
  double total = qj_branch_probs(psi, ks, probs);
  if (total < 1e-15) throw std::runtime_error("qj_step: all branch probabilities vanish");
  double u = rng.uniform() * total;
  std::size_t label = ks.ops.size() - 1;
  double acc = 0.0;
  for (std::size_t r = 0; r + 1 < ks.ops.size(); ++r) {
    acc += probs[r];
    if (u < acc) {
      label = r;
      break;
    }
  }
  psi = normalized(ks.ops[label] * psi);
  log_prob += std::log(probs[label] / total);
  return static_cast<int>(label);
}

// Deterministic branch application for tree enumeration; returns the normalized
// branch probability and leaves psi untouched on a vanishing branch.
inline double qj_step_forced(Ket2& psi, const KrausSet& ks, int label, double& log_prob) {
  double probs[8];
  if (ks.ops.size() > 8) throw std::invalid_argument("qj_step_forced: too many Kraus branches");
  double total = qj_branch_probs(psi, ks, probs);
  if (total < 1e-15) throw std::runtime_error("qj_step_forced: all branch probabilities vanish");
  double p = probs[label] / total;
  if (probs[label] <= 0.0) return 0.0;
  psi = normalized(ks.ops[label] * psi);
  log_prob += std::log(p);
  return p;
}

// Diffusive (homodyne) step monitoring Hermitian X at rate gamma_meas:
//   dpsi = [-iH dt + sqrt(g)(X - <X>) dw - (g/2)(X - <X>)^2 dt] psi,
// renormalized. Returns the readout r = <X> + dw / (2 sqrt(g) dt).
inline double qsd_step(Ket2& psi, const Mat2& H, const Mat2& X, double gamma_meas,
                       double dt, double dw) {
  if (gamma_meas <= 0.0 || dt <= 0.0)
    throw std::invalid_argument("qsd_step: gamma_meas and dt must be > 0");
  if (gamma_meas * dt > 0.05)
    throw std::invalid_argument("qsd_step: gamma_meas dt must be <= 0.05");
  if (hermiticity_residual(X) > 1e-12)
    throw std::invalid_argument("qsd_step: monitored operator must be Hermitian");
  double x = std::real(inner(psi, X * psi)) / psi.norm2();
  Mat2 dX = X - x * identity2();
  double sg = std::sqrt(gamma_meas);
  Ket2 xpsi = dX * psi;
  Ket2 dpsi = cplx(0.0, -dt) * (H * psi) + (sg * dw) * xpsi
            - (0.5 * gamma_meas * dt) * (dX * xpsi);
  psi = normalized(psi + dpsi);
  return x + dw / (2.0 * sg * dt);
}

inline double qsd_step(Ket2& psi, const Mat2& H, const Mat2& X, double gamma_meas,
                       double dt, Rng& rng) {
  return qsd_step(psi, H, X, gamma_meas, dt, rng.gauss() * std::sqrt(dt));
}

struct LindbladTerm {
  double rate = 0.0;
  Mat2 L;
};

inline Mat2 lindblad_rhs(const Mat2& rho, const Mat2& H,
                         const std::vector<LindbladTerm>& terms) {
  Mat2 out = cplx(0.0, -1.0) * (H * rho - rho * H);
  for (const LindbladTerm& t : terms) {
    Mat2 ld = t.L.adjoint();
    Mat2 ldl = ld * t.L;
    out = out + t.rate * ((t.L * rho) * ld - 0.5 * (ldl * rho + rho * ldl));
  }
  return out;
}

// Euler by default, optional RK4; aborts when the trace drifts.
inline void lindblad_step(Mat2& rho, const Mat2& H, const std::vector<LindbladTerm>& terms,
                          double dt, bool rk4 = false) {
  if (rk4) {
    Mat2 k1 = lindblad_rhs(rho, H, terms);
    Mat2 k2 = lindblad_rhs(rho + (0.5 * dt) * k1, H, terms);
    Mat2 k3 = lindblad_rhs(rho + (0.5 * dt) * k2, H, terms);
    Mat2 k4 = lindblad_rhs(rho + dt * k3, H, terms);
    rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  } else {
    rho = rho + dt * lindblad_rhs(rho, H, terms);
  }
  if (std::abs(rho.trace() - cplx(1.0, 0.0)) > 1e-6)
    throw std::runtime_error("lindblad_step: trace drift exceeds 1e-6");
}

// Default step: resolve both the fastest rate and the Hamiltonian scale.
inline double default_dt(double gamma_tot, double h_norm) {
  if (gamma_tot <= 0.0 && h_norm <= 0.0)
    throw std::invalid_argument("default_dt: no scale to resolve");
  double dt = 1e300;
  if (gamma_tot > 0.0) dt = std::min(dt, 0.01 / gamma_tot);
  if (h_norm > 0.0) dt = std::min(dt, 0.01 / h_norm);
  return dt;
}

// --- protocol-driven runners ---------------------------------------------
//
// A QJ protocol supplies per-step Kraus sets and per-branch thermodynamic
// increments; all stochasticity is Born sampling, so the same interface drives
// Monte-Carlo sampling and exhaustive tree enumeration:
//   int n_steps() const;
//   double time(int k) const;                         // k = 0 .. n_steps
//   const std::vector<InitialBranch>& initial_branches() const;
//   void kraus(int k, KrausSet& out) const;
//   StepThermo thermo(int k, int label, const Ket2& pre, const Ket2& post) const;
//   int n_final_outcomes() const;                     // 0: no terminal measurement
//   double final_branch(int m, const Ket2& psi, Ket2& post, StepThermo& th) const;

template <class Proto>
TrajectoryRecord run_trajectory(const Proto& proto, Rng& rng, bool keep_states = true) {
  TrajectoryRecord rec;
  const auto& inits = proto.initial_branches();
  double u = rng.uniform();
  std::size_t b = inits.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < inits.size(); ++i) {
    acc += inits[i].prob;
    if (u < acc) {
      b = i;
      break;
    }
  }
  rec.initial_branch = static_cast<int>(b);
  rec.p_init = inits[b].prob;
  Ket2 psi = inits[b].state;

  int n = proto.n_steps();
  rec.record.reserve(n);
  if (keep_states) {
    rec.states.reserve(n + 1);
    rec.t.reserve(n + 1);
    rec.states.push_back(psi);
    rec.t.push_back(proto.time(0));
  }
  KrausSet ks;
  for (int k = 0; k < n; ++k) {
    proto.kraus(k, ks);
    Ket2 pre = psi;
    int label = qj_step(psi, ks, rec.log_prob, rng);
    rec.record.push_back({label, proto.thermo(k, label, pre, psi)});
    if (keep_states) {
      rec.states.push_back(psi);
      rec.t.push_back(proto.time(k + 1));
    }
  }

  int nf = proto.n_final_outcomes();
  if (nf > 0) {
    double probs[8];
    Ket2 posts[8];
    StepThermo ths[8];
    double total = 0.0;
    for (int m = 0; m < nf; ++m) {
      probs[m] = proto.final_branch(m, psi, posts[m], ths[m]);
      total += probs[m];
    }
    double v = rng.uniform() * total;
    int pick = nf - 1;
    double a2 = 0.0;
    for (int m = 0; m + 1 < nf; ++m) {
      a2 += probs[m];
      if (v < a2) {
        pick = m;
        break;
      }
    }
    rec.final_outcome = pick;
    rec.p_final_born = probs[pick] / total;
    rec.log_prob += std::log(rec.p_final_born);
    rec.final_thermo = ths[pick];
    psi = posts[pick];
  }
  rec.final_state = psi;
  return rec;
}

// Runs fn(i, rng) for i in [0, n_traj) with rng seeded from derive_seed(base, i),
// split over contiguous index blocks: results never depend on the thread count.
// fn runs concurrently across blocks; writers must target distinct slots.
template <class Fn>
void parallel_trajectories(std::size_t n_traj, std::uint64_t base_seed, int n_threads,
                           Fn&& fn) {
  if (n_traj == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (n_threads <= 0) n_threads = hw ? static_cast<int>(hw) : 1;
  std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(n_threads), n_traj);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n_traj; ++i) {
      Rng rng = trajectory_rng(base_seed, i);
      fn(i, rng);
    }
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nt);
  std::size_t chunk = (n_traj + nt - 1) / nt;
  for (std::size_t w = 0; w < nt; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n_traj, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&fn, base_seed, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) {
        Rng rng = trajectory_rng(base_seed, i);
        fn(i, rng);
      }
    });
  }
  for (auto& t : workers) t.join();
}

// Trajectory i always uses derive_seed(base_seed, i): results are reproducible
// and independent of thread count. per_traj(i, rec) runs on the worker thread
// that owns i; writers must target distinct slots.
template <class Proto, class PerTraj>
void run_ensemble(const Proto& proto, std::size_t n_traj, std::uint64_t base_seed,
                  int n_threads, PerTraj&& per_traj, bool keep_states = false) {
  if (n_traj == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (n_threads <= 0) n_threads = hw ? static_cast<int>(hw) : 1;
  std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(n_threads), n_traj);
  if (nt <= 1) {
    Proto local(proto);
    for (std::size_t i = 0; i < n_traj; ++i) {
      Rng rng = trajectory_rng(base_seed, i);
      per_traj(i, run_trajectory(local, rng, keep_states));
    }
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nt);
  std::size_t chunk = (n_traj + nt - 1) / nt;
  for (std::size_t w = 0; w < nt; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n_traj, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&, lo, hi] {
      Proto local(proto);
      for (std::size_t i = lo; i < hi; ++i) {
        Rng rng = trajectory_rng(base_seed, i);
        per_traj(i, run_trajectory(local, rng, keep_states));
      }
    });
  }
  for (auto& t : workers) t.join();
}

// Exhaustive Born-tree walk over initial branches, step labels, and terminal
// outcomes. visit(rec, path_prob) fires at every leaf with nonzero probability;
// normalized branch probabilities make the leaf probabilities sum to 1.
template <class Proto, class Visit>
void enumerate_paths(const Proto& proto, Visit&& visit) {
  Proto local(proto);
  int n = local.n_steps();
  const auto& inits = local.initial_branches();
  TrajectoryRecord rec;
  KrausSet ks;

  struct Frame {
    Ket2 psi;
    double prob;
    double log_prob;
  };
  std::vector<Frame> stack(static_cast<std::size_t>(n) + 1);

  auto descend = [&](auto&& self, int k) -> void {
    if (k == n) {
      Ket2 psi = stack[k].psi;
      int nf = local.n_final_outcomes();
      rec.final_state = psi;
      if (nf == 0) {
        rec.final_outcome = -1;
        rec.p_final_born = 1.0;
        rec.final_thermo = {};
        rec.log_prob = stack[k].log_prob;
        visit(rec, stack[k].prob);
        return;
      }
      double probs[8];
      Ket2 posts[8];
      StepThermo ths[8];
      double total = 0.0;
      for (int m = 0; m < nf; ++m) {
        probs[m] = local.final_branch(m, psi, posts[m], ths[m]);
        total += probs[m];
      }
      for (int m = 0; m < nf; ++m) {
        if (probs[m] <= 0.0) continue;
        rec.final_outcome = m;
        rec.p_final_born = probs[m] / total;
        rec.final_thermo = ths[m];
        rec.final_state = posts[m];
        rec.log_prob = stack[k].log_prob + std::log(rec.p_final_born);
        visit(rec, stack[k].prob * (probs[m] / total));
      }
      return;
    }
    local.kraus(k, ks);
    Ket2 pre = stack[k].psi;
    double probs[8];
    double total = qj_branch_probs(pre, ks, probs);
    if (total < 1e-15) throw std::runtime_error("enumerate_paths: branch probabilities vanish");
    for (std::size_t r = 0; r < ks.ops.size(); ++r) {
      if (probs[r] <= 0.0) continue;
      double p = probs[r] / total;
      Ket2 post = normalized(ks.ops[r] * pre);
      rec.record[k] = {static_cast<int>(r), local.thermo(k, static_cast<int>(r), pre, post)};
      stack[k + 1] = {post, stack[k].prob * p, stack[k].log_prob + std::log(p)};
      if ((int)rec.states.size() == n + 1) rec.states[k + 1] = post;
      self(self, k + 1);
      local.kraus(k, ks);  // restore: deeper levels may have rebuilt the buffer
      total = qj_branch_probs(pre, ks, probs);
    }
  };

  rec.record.resize(n);
  rec.states.resize(n + 1);
  rec.t.resize(n + 1);
  for (int k = 0; k <= n; ++k) rec.t[k] = local.time(k);
  for (std::size_t b = 0; b < inits.size(); ++b) {
    if (inits[b].prob <= 0.0) continue;
    rec.initial_branch = static_cast<int>(b);
    rec.p_init = inits[b].prob;
    rec.states[0] = inits[b].state;
    stack[0] = {inits[b].state, inits[b].prob, 0.0};
    descend(descend, 0);
  }
}

}  // namespace qtraj
