// qtraj: batch runner for the monitored-qubit trajectory experiments.
//
// `qtraj run <experiment>` resolves a flat key = value config (defaults,
// then --config file, then --set overrides), validates it, executes the
// experiment, and writes CSV/JSON artifacts plus a manifest with per-file
// checksums into the output directory. Reruns from an emitted resolved.cfg
// reproduce every data file byte for byte. `qtraj plot <run_dir>` turns a
// run's CSVs into columnar figure data with a gnuplot script.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "qtraj/core.hpp"
#include "qtraj/finite_eta.hpp"
#include "qtraj/fme_obe.hpp"
#include "qtraj/io.hpp"
#include "qtraj/kraus.hpp"
#include "qtraj/ledger.hpp"
#include "qtraj/optomech.hpp"
#include "qtraj/protocols.hpp"
#include "qtraj/rng.hpp"
#include "qtraj/trajectory.hpp"

namespace {

using namespace qtraj;
namespace fs = std::filesystem;

constexpr double k_nan = std::numeric_limits<double>::quiet_NaN();

struct RunContext {
  ConfigMap cfg;
  std::size_t n_traj = 0;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct RunOutput {
  std::vector<std::pair<std::string, std::string>> files;  // name -> content
  RunSummary summary;
  std::vector<std::string> lines;  // one line per headline metric
};

std::string fmt(double v) { return format_double(v); }

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

void require_traj(const RunContext& c, std::size_t minimum) {
  if (c.n_traj < minimum)
    throw std::invalid_argument("n_traj must be at least " + std::to_string(minimum) +
                                " for this experiment");
}

// qubit von Neumann entropy of the Bloch state (P_e, coherence s), in k_B
double qubit_svn(double pe, cplx s) {
  return von_neumann_entropy(Mat2{pe, s, std::conj(s), 1.0 - pe});
}

std::string ledger_csv(const std::vector<double>& W, const std::vector<double>& Qcl,
                       const std::vector<double>& Qq, const std::vector<double>& dis) {
  CsvTable t({"traj_id", "W", "Q_cl", "Q_q", "entropy_kB"});
  for (std::size_t i = 0; i < W.size(); ++i)
    t.add_row({std::to_string(i), fmt(W[i]), fmt(Qcl[i]), fmt(Qq[i]), fmt(dis[i])});
  return t.to_string();
}

// Per-step dump of the first few trajectories; amplitudes are the post-step
// state at each boundary, increments the step's ledger entries.
template <class Proto>
std::string trajectory_dump_csv(const Proto& proto, std::size_t n_dump, std::uint64_t seed) {
  CsvTable t({"traj_id", "step", "t", "outcome", "re_amp_e", "im_amp_e", "re_amp_g",
              "im_amp_g", "dW", "dQ_cl", "dQ_q", "dQ_L"});
  for (std::size_t i = 0; i < n_dump; ++i) {
    Rng rng = trajectory_rng(seed, i);
    TrajectoryRecord rec = run_trajectory(proto, rng, true);
    for (std::size_t k = 0; k < rec.record.size(); ++k) {
      const Ket2& post = rec.states[k + 1];
      const StepThermo& th = rec.record[k].thermo;
      t.add_row({std::to_string(i), std::to_string(k), fmt(rec.t[k]),
                 std::to_string(rec.record[k].label), fmt(post.e.real()), fmt(post.e.imag()),
                 fmt(post.g.real()), fmt(post.g.imag()), fmt(th.dW), fmt(th.dQ_cl),
                 fmt(th.dQ_q), fmt(th.dQ_L)});
    }
  }
  return t.to_string();
}

// --------------------------------------------------------------------------
// experiment runners

RunOutput run_stark_je(const RunContext& c) {
  StarkParams p;
  p.gamma_q = config_double(c.cfg, "gamma_q");
  p.omega0 = config_double(c.cfg, "omega0");
  p.mu = config_double(c.cfg, "mu");
  p.T = config_double(c.cfg, "T");
  p.t_f = config_double(c.cfg, "t_f");
  p.n_steps = static_cast<int>(config_int(c.cfg, "n_steps"));
  StarkProtocol proto(p);
  require_traj(c, 100);

  std::vector<double> W(c.n_traj), Qcl(c.n_traj), Qq(c.n_traj), dis(c.n_traj);
  run_ensemble(proto, c.n_traj, c.seed, c.threads,
               [&](std::size_t i, TrajectoryRecord&& rec) {
                 EnergyLedger led = accumulate_flows(rec);
                 W[i] = led.W;
                 Qcl[i] = led.Q_cl;
                 Qq[i] = led.Q_q;
                 dis[i] = proto.entropy_production(rec);
               });
  FTEstimate ift = ift_estimator(dis);

  RunOutput out;
  out.files.emplace_back("ledger.csv", ledger_csv(W, Qcl, Qq, dis));
  out.files.emplace_back(
      "histogram.csv",
      histogram_table(dis, static_cast<int>(config_int(c.cfg, "bins"))).to_string());
  auto n_dump = static_cast<std::size_t>(config_int(c.cfg, "dump_traj"));
  out.files.emplace_back("trajectories.csv",
                         trajectory_dump_csv(proto, std::min(n_dump, c.n_traj), c.seed));
  out.summary.protocol = "stark-je";
  out.summary.ift_mean = ift.mean;
  out.summary.ift_stderr = ift.err;
  out.summary.mean_entropy = mean_of(dis);
  out.summary.mean_W = mean_of(W);
  out.summary.mean_Qcl = mean_of(Qcl);
  out.summary.mean_Qq = mean_of(Qq);
  out.lines.push_back("stark-je: ift_mean = " + fmt(ift.mean) + " +- " + fmt(ift.err));
  out.lines.push_back("stark-je: mean_entropy = " + fmt(out.summary.mean_entropy) +
                      " kB, mean_W = " + fmt(out.summary.mean_W) +
                      ", mean_Qcl = " + fmt(out.summary.mean_Qcl));
  return out;
}

RunOutput run_rabi_je(const RunContext& c) {
  RabiParams p;
  p.g = config_double(c.cfg, "g");
  p.delta = config_double(c.cfg, "delta");
  p.omega_0 = config_double(c.cfg, "omega_0");
  p.gamma_q = config_double(c.cfg, "gamma_q");
  p.T = config_double(c.cfg, "T");
  p.t_f = config_double(c.cfg, "t_f");
  p.n_steps = static_cast<int>(config_int(c.cfg, "n_steps"));
  RabiJeProtocol proto(p);
  require_traj(c, 100);

  std::vector<double> W(c.n_traj), Qcl(c.n_traj), Qq(c.n_traj), dis(c.n_traj);
  run_ensemble(proto, c.n_traj, c.seed, c.threads,
               [&](std::size_t i, TrajectoryRecord&& rec) {
                 EnergyLedger led = accumulate_flows(rec);
                 W[i] = led.W;
                 Qcl[i] = led.Q_cl;
                 Qq[i] = led.Q_q;
                 dis[i] = proto.entropy_production(rec);
               });
  FTEstimate ift = ift_estimator(dis);

  RunOutput out;
  out.files.emplace_back("ledger.csv", ledger_csv(W, Qcl, Qq, dis));
  out.files.emplace_back(
      "histogram.csv",
      histogram_table(dis, static_cast<int>(config_int(c.cfg, "bins"))).to_string());
  auto n_dump = static_cast<std::size_t>(config_int(c.cfg, "dump_traj"));
  out.files.emplace_back("trajectories.csv",
                         trajectory_dump_csv(proto, std::min(n_dump, c.n_traj), c.seed));
  out.summary.protocol = "rabi-je";
  out.summary.ift_mean = ift.mean;
  out.summary.ift_stderr = ift.err;
  out.summary.mean_entropy = mean_of(dis);
  out.summary.mean_W = mean_of(W);
  out.summary.mean_Qcl = mean_of(Qcl);
  out.summary.mean_Qq = mean_of(Qq);
  out.lines.push_back("rabi-je: ift_mean = " + fmt(ift.mean) + " +- " + fmt(ift.err));
  out.lines.push_back("rabi-je: mean_entropy = " + fmt(out.summary.mean_entropy) +
                      " kB, mean_W = " + fmt(out.summary.mean_W));
  return out;
}

RunOutput run_spont_em(const RunContext& c) {
  SpontEmParams p;
  p.gamma_q = config_double(c.cfg, "gamma_q");
  p.omega0 = config_double(c.cfg, "omega0");
  p.t_f = config_double(c.cfg, "t_f");
  p.n_steps = static_cast<int>(config_int(c.cfg, "n_steps"));
  SpontEmProtocol proto(p);
  require_traj(c, 1);

  double p_jump = spont_em_jump_prob(p.gamma_q, p.t_f);
  std::vector<double> Qcl(c.n_traj), Qq(c.n_traj), s_b(c.n_traj);
  std::vector<unsigned char> jumped(c.n_traj, 0);
  run_ensemble(proto, c.n_traj, c.seed, c.threads,
               [&](std::size_t i, TrajectoryRecord&& rec) {
                 EnergyLedger led = accumulate_flows(rec);
                 Qcl[i] = led.Q_cl;
                 Qq[i] = led.Q_q;
                 for (const StepOutcome& s : rec.record)
                   if (s.label != 0) jumped[i] = 1;
                 s_b[i] = jumped[i] ? -std::log(p_jump) : -std::log1p(-p_jump);
               });

  CsvTable t({"traj_id", "jumped", "Q_cl", "Q_q", "s_boundary_kB"});
  double frac = 0.0;
  for (std::size_t i = 0; i < c.n_traj; ++i) {
    frac += jumped[i];
    t.add_row({std::to_string(i), std::to_string(int(jumped[i])), fmt(Qcl[i]), fmt(Qq[i]),
               fmt(s_b[i])});
  }
  frac /= static_cast<double>(c.n_traj);

  RunOutput out;
  out.files.emplace_back("ledger.csv", t.to_string());
  auto n_dump = static_cast<std::size_t>(config_int(c.cfg, "dump_traj"));
  out.files.emplace_back("trajectories.csv",
                         trajectory_dump_csv(proto, std::min(n_dump, c.n_traj), c.seed));
  out.summary.protocol = "spont-em";
  out.summary.mean_entropy = mean_of(s_b);
  out.summary.mean_W = 0.0;
  out.summary.mean_Qcl = mean_of(Qcl);
  out.summary.mean_Qq = mean_of(Qq);
  out.lines.push_back("spont-em: jump_fraction = " + fmt(frac) + " (exact " + fmt(p_jump) +
                      ")");
  out.lines.push_back("spont-em: mean_Qq = " + fmt(out.summary.mean_Qq) +
                      ", mean_boundary_entropy = " + fmt(out.summary.mean_entropy) + " kB");
  return out;
}

RunOutput run_mpe(const RunContext& c) {
  MpeParams p;
  p.theta = config_double(c.cfg, "theta");
  p.theta_n = config_double(c.cfg, "theta_n");
  p.phi_n = config_double(c.cfg, "phi_n");
  p.omega0 = config_double(c.cfg, "omega0");
  p.T_C = config_double(c.cfg, "T_C");
  p.tau_m = config_double(c.cfg, "tau_m");
  p.tau_fb = config_double(c.cfg, "tau_fb");
  p.g = config_double(c.cfg, "g");
  p.validate();
  require_traj(c, 1);

  MpeCycleMeans m = mpe_cycle_simulate(p, c.n_traj, c.seed, c.threads);
  double eta_cf = mpe_efficiency(p.theta, p.omega0, p.T_C);
  MpePower pw = mpe_power(p);
  double p_minus_cf = mpe_p_minus(p);

  CsvTable t({"W_ext", "W_fb", "W_er", "Q_q", "S_D", "p_minus", "eta", "power_real", "se_W",
              "n_cycles", "eta_closed", "p_minus_closed", "power_ideal_closed",
              "power_real_closed"});
  t.add_row({fmt(m.W_ext), fmt(m.W_fb), fmt(m.W_er), fmt(m.Q_q), fmt(m.S_D), fmt(m.p_minus),
             fmt(m.eta), fmt(m.power_real), fmt(m.se_W), std::to_string(m.n_cycles),
             fmt(eta_cf), fmt(p_minus_cf), fmt(pw.ideal), fmt(pw.real)});

  RunOutput out;
  out.files.emplace_back("cycle_means.csv", t.to_string());
  out.summary.protocol = "mpe";
  out.summary.mean_W = m.W_ext - m.W_fb - m.W_er;
  out.summary.mean_Qq = m.Q_q;
  out.summary.mean_entropy = m.S_D;
  out.lines.push_back("mpe: eta = " + fmt(m.eta) + " (closed form " + fmt(eta_cf) + ")");
  out.lines.push_back("mpe: power_real = " + fmt(m.power_real) + " (closed form " +
                      fmt(pw.real) + "), net W per cycle = " + fmt(out.summary.mean_W) +
                      " +- " + fmt(m.se_W));
  return out;
}

RunOutput run_feedback(const RunContext& c) {
  FeedbackParams p;
  p.target_theta = config_double(c.cfg, "target_theta");
  p.gamma_meas = config_double(c.cfg, "gamma_meas");
  p.omega0 = config_double(c.cfg, "omega0");
  p.w_cutoff = config_double(c.cfg, "w_cutoff");
  p.t_f = config_double(c.cfg, "t_f");
  p.n_steps = static_cast<int>(config_int(c.cfg, "n_steps"));
  p.validate();
  require_traj(c, 1);

  FeedbackResult r = feedback_protocol(p, c.n_traj, c.seed, c.threads);

  CsvTable res({"mean_fidelity", "heat_std", "ks_heat_work", "n_heat", "n_work"});
  res.add_row({fmt(r.mean_fidelity), fmt(r.heat_std), fmt(r.ks_heat_work),
               std::to_string(r.heat_increments.size()),
               std::to_string(r.work_increments.size())});

  // joint histogram of heat and applied-work increments on shared edges
  int bins = static_cast<int>(config_int(c.cfg, "bins"));
  double lo = r.heat_increments.front(), hi = lo;
  for (double x : r.heat_increments) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  for (double x : r.work_increments) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CsvTable hist({"bin_lo", "bin_hi", "count_heat", "count_work"});
  if (lo == hi) {
    hist.add_row({fmt(lo), fmt(hi), std::to_string(r.heat_increments.size()),
                  std::to_string(r.work_increments.size())});
  } else {
    double width = (hi - lo) / bins;
    std::vector<std::size_t> ch(bins, 0), cw(bins, 0);
    auto slot = [&](double x) {
      return static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>((x - lo) / width), 0,
                                     bins - 1));
    };
    for (double x : r.heat_increments) ++ch[slot(x)];
    for (double x : r.work_increments) ++cw[slot(x)];
    for (int i = 0; i < bins; ++i)
      hist.add_row({fmt(lo + i * width), fmt(i + 1 == bins ? hi : lo + (i + 1) * width),
                    std::to_string(ch[i]), std::to_string(cw[i])});
  }

  RunOutput out;
  out.files.emplace_back("result.csv", res.to_string());
  out.files.emplace_back("increments_hist.csv", hist.to_string());
  out.summary.protocol = "feedback";
  out.lines.push_back("feedback: mean_fidelity = " + fmt(r.mean_fidelity));
  out.lines.push_back("feedback: heat_std = " + fmt(r.heat_std) +
                      ", ks_heat_work = " + fmt(r.ks_heat_work));
  return out;
}

RunOutput run_fme_obe_compare(const RunContext& c) {
  double delta = config_double(c.cfg, "delta");
  double omega_L = config_double(c.cfg, "omega_L");
  double gamma_q = config_double(c.cfg, "gamma_q");
  double T = config_double(c.cfg, "T");
  auto n_theta = config_int(c.cfg, "n_theta");
  if (n_theta < 1) throw std::invalid_argument("fme-obe-compare: n_theta must be >= 1");

  CsvTable t({"theta", "g", "Pe_obe", "Pe_fme", "re_s", "im_s_obe", "im_s_fme", "PL_obe",
              "PL_fme", "Pres_obe", "Pres_fme", "sigma_i"});
  double max_closure = 0.0, max_pe_dev = 0.0, max_pl_dev = 0.0;
  for (long long k = 1; k <= n_theta; ++k) {
    double theta = 0.25 * pi * static_cast<double>(k) / static_cast<double>(n_theta + 1);
    ComparisonRow r = fme_obe_comparison_row(theta, delta, omega_L, gamma_q, T);
    t.add_row({fmt(r.theta), fmt(r.g), fmt(r.Pe_obe), fmt(r.Pe_fme), fmt(r.re_s),
               fmt(r.im_s_obe), fmt(r.im_s_fme), fmt(r.PL_obe), fmt(r.PL_fme),
               fmt(r.Pres_obe), fmt(r.Pres_fme), fmt(r.sigma_i)});
    max_closure = std::max({max_closure, std::abs(r.PL_obe + r.Pres_obe),
                            std::abs(r.PL_fme + r.Pres_fme)});
    max_pe_dev = std::max(max_pe_dev, std::abs(r.Pe_obe - r.Pe_fme) / std::abs(r.Pe_obe));
    max_pl_dev = std::max(max_pl_dev, std::abs(r.PL_obe - r.PL_fme) / std::abs(r.PL_obe));
  }

  RunOutput out;
  out.files.emplace_back("compare.csv", t.to_string());
  out.summary.protocol = "fme-obe-compare";
  out.lines.push_back("fme-obe-compare: max |P_L + P_res| = " + fmt(max_closure));
  out.lines.push_back("fme-obe-compare: max rel dev Pe = " + fmt(max_pe_dev) +
                      ", P_L = " + fmt(max_pl_dev));
  return out;
}

RunOutput run_finite_eta(const RunContext& c) {
  StarkParams sp;
  sp.gamma_q = config_double(c.cfg, "gamma_q");
  sp.omega0 = config_double(c.cfg, "omega0");
  sp.mu = config_double(c.cfg, "mu");
  sp.T = config_double(c.cfg, "T");
  sp.t_f = config_double(c.cfg, "t_f");
  sp.n_steps = static_cast<int>(config_int(c.cfg, "n_steps"));
  double eta = config_double(c.cfg, "eta");
  auto n_fict = static_cast<std::size_t>(config_int(c.cfg, "n_fict"));
  if (n_fict < 1) throw std::invalid_argument("finite-eta: n_fict must be >= 1");
  FiniteEtaStark fe(sp, eta);
  require_traj(c, 100);

  std::vector<ImperfectTrajectory> trajs(c.n_traj);
  std::vector<double> sigmas(c.n_traj);
  parallel_trajectories(c.n_traj, c.seed, c.threads, [&](std::size_t i, Rng& rng) {
    trajs[i] = fe.run(rng);
    auto samples = sample_fictitious(trajs[i], n_fict, rng);
    sigmas[i] = sigma_correction(trajs[i], samples, sp.T);
  });
  double dF = fe.delta_F();
  FTEstimate unc = uncorrected_je(trajs, dF, sp.T);
  FTEstimate cor = corrected_je(trajs, sigmas, dF, sp.T);
  std::vector<double> meas(c.n_traj);
  for (std::size_t i = 0; i < c.n_traj; ++i)
    meas[i] = measured_entropy_production(trajs[i], dF) + sigmas[i];

  CsvTable t({"eta", "uncorrected_mean", "uncorrected_err", "corrected_mean",
              "corrected_err", "n_traj", "n_fict"});
  t.add_row({fmt(eta), fmt(unc.mean), fmt(unc.err), fmt(cor.mean), fmt(cor.err),
             std::to_string(c.n_traj), std::to_string(n_fict)});

  RunOutput out;
  out.files.emplace_back("results.csv", t.to_string());
  out.summary.protocol = "finite-eta";
  out.summary.ift_mean = cor.mean;
  out.summary.ift_stderr = cor.err;
  out.summary.mean_entropy = mean_of(meas);
  out.lines.push_back("finite-eta: eta = " + fmt(eta) + ", uncorrected = " + fmt(unc.mean) +
                      " +- " + fmt(unc.err));
  out.lines.push_back("finite-eta: corrected ift_mean = " + fmt(cor.mean) + " +- " +
                      fmt(cor.err));
  return out;
}

OptomechParams optomech_params(const ConfigMap& cfg, bool driven) {
  OptomechParams pm;
  pm.omega_0 = config_double(cfg, "omega_0");
  pm.Omega_m = config_double(cfg, "Omega_m");
  pm.g_m = config_double(cfg, "g_m");
  pm.g = driven ? config_double(cfg, "g") : 0.0;
  pm.omega_L = driven ? config_double(cfg, "omega_L") : 0.0;
  pm.gamma_q = config_double(cfg, "gamma_q");
  pm.T = config_double(cfg, "T");
  pm.validate();
  return pm;
}

// rows of the shared optomech CSV layout
void optomech_row(CsvTable& t, double time, double x, double p, double vx, double vp,
                  double cxp, double pe, cplx s, double gam, double um, double w, double q) {
  t.add_row({fmt(time), fmt(x), fmt(p), fmt(vx), fmt(vp), fmt(cxp), fmt(pe),
             fmt(std::real(s)), fmt(std::imag(s)), fmt(gam), fmt(um), fmt(w), fmt(q),
             fmt(qubit_svn(pe, s))});
}

const std::vector<std::string> k_optomech_cols = {
    "t", "x", "p", "V_X", "V_P", "C_XP", "P_e", "re_s", "im_s", "Gamma_opt", "U_m",
    "W_cum", "Q_cum", "S_VN"};

RunOutput run_optomech_semicl(const RunContext& c) {
  OptomechParams pm = optomech_params(c.cfg, true);
  HybridSemiclassicalState init;
  init.beta = cplx(config_double(c.cfg, "beta_re"), config_double(c.cfg, "beta_im"));
  double pe_init = config_double(c.cfg, "pe_init");
  if (pe_init >= 0.0) {
    init.P_e = pe_init;
  } else if (pm.g > 0.0) {
    ObeSteady st = obe_steady_state(pm.g, pm.delta_T_at(init.x()), pm.gamma_q,
                                    pm.T > 0.0 ? pm.n_at(init.x()) : 0.0);
    init.P_e = st.P_e;
    init.s_tilde = st.s;
  } else {
    init.P_e = equilibrium_pe(pm.omega_q_at(init.x()), pm.T);
  }

  double t_f = config_double(c.cfg, "t_f");
  if (t_f <= 0.0) t_f = 2.0 * (2.0 * pi / pm.Omega_m);
  SemiclassicalRun run = run_semiclassical(pm, init, t_f, config_double(c.cfg, "dt"));

  auto every = static_cast<std::size_t>(config_int(c.cfg, "sample_every"));
  if (every < 1) every = 1;
  CsvTable t(k_optomech_cols);
  auto emit = [&](std::size_t i) {
    const HybridSemiclassicalState& s = run.states[i];
    double um = pm.Omega_m * (s.x() * s.x() + s.p() * s.p()) / 4.0;
    optomech_row(t, run.t(i), s.x(), s.p(), k_nan, k_nan, k_nan, s.P_e, s.s_tilde,
                 gamma_opt(pm.delta_T_at(s.x()), pm), um, s.W_cum, s.Q_cum);
  };
  for (std::size_t i = 0; i < run.states.size(); i += every) emit(i);
  if ((run.states.size() - 1) % every != 0) emit(run.states.size() - 1);

  RunOutput out;
  out.files.emplace_back("semicl.csv", t.to_string());
  const HybridSemiclassicalState& fin = run.states.back();
  out.summary.protocol = "optomech-semicl";
  out.summary.mean_W = fin.W_cum;
  out.summary.mean_Qcl = fin.Q_cum;
  for (const std::string& w : pm.regime_warnings())
    out.lines.push_back("optomech-semicl: warning: " + w);
  if (pm.g == 0.0) {
    BatteryCheck bc = battery_work_check(run);
    out.lines.push_back("optomech-semicl: W = " + fmt(bc.W) + ", dU_m = " + fmt(bc.dU_m) +
                        ", battery_residual = " + fmt(std::abs(bc.W + bc.dU_m)));
  }
  out.lines.push_back("optomech-semicl: final P_e = " + fmt(fin.P_e) +
                      ", x = " + fmt(fin.x()) + ", W_cum = " + fmt(fin.W_cum) +
                      ", Q_cum = " + fmt(fin.Q_cum));
  return out;
}

RunOutput run_optomech_noise(const RunContext& c) {
  OptomechParams pm = optomech_params(c.cfg, true);
  require_traj(c, 1);
  auto periods = config_int(c.cfg, "periods");
  if (periods < 1) throw std::invalid_argument("optomech-noise: periods must be >= 1");
  double period = 2.0 * pi / pm.Omega_m;

  // one conditional record on its own stream, past the drift-record streams
  auto every = static_cast<std::size_t>(config_int(c.cfg, "sample_every"));
  if (every < 1) every = 1;
  double dtq = period / 640.0;
  std::size_t n_steps = static_cast<std::size_t>(periods) * 640;
  Rng rng = trajectory_rng(c.seed, c.n_traj);
  GaussianMOState s;
  CsvTable traj(k_optomech_cols);
  CsvTable wig({"t", "a", "b", "c"});
  auto emit = [&](std::size_t step) {
    double time = static_cast<double>(step) * dtq;
    double gam = gamma_opt(pm.delta_T_at(s.x), pm);
    ObeSteady st = obe_steady_state(pm.g, pm.delta_T_at(s.x), pm.gamma_q,
                                    pm.T > 0.0 ? pm.n_at(s.x) : 0.0);
    optomech_row(traj, time, s.x, s.p, s.V_X, s.V_P, s.C_XP, st.P_e, st.s, gam,
                 mech_energy(s, pm.Omega_m), k_nan, k_nan);
    WignerParams w = wigner_params(s);
    wig.add_row({fmt(time), fmt(w.a), fmt(w.b), fmt(w.c)});
  };
  for (std::size_t step = 0; step < n_steps; ++step) {
    if (step % every == 0) emit(step);
    double gam = gamma_opt(pm.delta_T_at(s.x), pm);
    s = gaussian_qsd_step(s, gam, pm.Omega_m, dtq, rng).state;
  }
  emit(n_steps);

  // drift ensemble: per-oscillation averages over n_traj records
  std::vector<DriftSeries> ds(c.n_traj);
  for (std::size_t k = 0; k < c.n_traj; ++k) {
    Rng r = trajectory_rng(c.seed, k);
    ds[k] = long_time_run(pm, GaussianMOState{}, static_cast<double>(periods) * period, r);
  }
  CsvTable drift({"osc", "t_mid", "U_m", "P_e", "Gamma_opt"});
  std::size_t n_osc = ds[0].t.size();
  for (std::size_t o = 0; o < n_osc; ++o) {
    double um = 0.0, pe = 0.0, gm = 0.0;
    for (const DriftSeries& d : ds) {
      um += d.U_m[o];
      pe += d.P_e[o];
      gm += d.Gamma_opt[o];
    }
    double n = static_cast<double>(c.n_traj);
    drift.add_row({std::to_string(o), fmt(ds[0].t[o]), fmt(um / n), fmt(pe / n),
                   fmt(gm / n)});
  }

  RunOutput out;
  out.files.emplace_back("trajectory.csv", traj.to_string());
  out.files.emplace_back("wigner.csv", wig.to_string());
  out.files.emplace_back("drift.csv", drift.to_string());
  out.summary.protocol = "optomech-noise";
  out.lines.push_back("optomech-noise: final V_X = " + fmt(s.V_X) +
                      ", V_P = " + fmt(s.V_P) + ", x = " + fmt(s.x));
  double du = 0.0;
  if (n_osc >= 2) {
    double per_osc = 0.0;
    for (const DriftSeries& d : ds) per_osc += d.U_m.back() - d.U_m.front();
    du = per_osc / (static_cast<double>(c.n_traj) * static_cast<double>(n_osc - 1));
  }
  out.lines.push_back("optomech-noise: mean U_m drift per oscillation = " + fmt(du) +
                      " over " + std::to_string(n_osc) + " oscillations x " +
                      std::to_string(c.n_traj) + " records");
  return out;
}

RunOutput run_landauer(const RunContext& c) {
  OptomechParams pm = optomech_params(c.cfg, false);
  if (pm.T <= 0.0) throw std::invalid_argument("landauer: T must be > 0");
  double fraction = config_double(c.cfg, "fraction");
  if (fraction <= 0.0) throw std::invalid_argument("landauer: fraction must be > 0");

  HybridSemiclassicalState init;
  init.beta = cplx(config_double(c.cfg, "beta_re"), config_double(c.cfg, "beta_im"));
  init.P_e = equilibrium_pe(pm.omega_q_at(init.x()), pm.T);
  double t_f = fraction * (2.0 * pi / pm.Omega_m);
  SemiclassicalRun run = run_semiclassical(pm, init, t_f, config_double(c.cfg, "dt"));

  auto every = static_cast<std::size_t>(config_int(c.cfg, "sample_every"));
  if (every < 1) every = 1;
  CsvTable t(k_optomech_cols);
  auto u_m = [&](const HybridSemiclassicalState& s) {
    return pm.Omega_m * (s.x() * s.x() + s.p() * s.p()) / 4.0;
  };
  auto emit = [&](std::size_t i) {
    const HybridSemiclassicalState& s = run.states[i];
    optomech_row(t, run.t(i), s.x(), s.p(), k_nan, k_nan, k_nan, s.P_e, s.s_tilde,
                 gamma_opt(pm.delta_T_at(s.x()), pm), u_m(s), s.W_cum, s.Q_cum);
  };
  for (std::size_t i = 0; i < run.states.size(); i += every) emit(i);
  if ((run.states.size() - 1) % every != 0) emit(run.states.size() - 1);

  const HybridSemiclassicalState& a = run.states.front();
  const HybridSemiclassicalState& b = run.states.back();
  double W = b.W_cum, Q = b.Q_cum;
  double dU_m = u_m(b) - u_m(a);
  double dS = qubit_svn(b.P_e, b.s_tilde) - qubit_svn(a.P_e, a.s_tilde);

  RunOutput out;
  out.files.emplace_back("conversion.csv", t.to_string());
  out.summary.protocol = "landauer";
  out.summary.mean_W = W;
  out.summary.mean_Qcl = Q;
  out.summary.mean_entropy = dS;
  out.lines.push_back("landauer: W = " + fmt(W) + ", dU_m = " + fmt(dU_m) +
                      ", battery_residual = " + fmt(std::abs(W + dU_m)));
  double mismatch = Q != 0.0 ? std::abs(Q - pm.T * dS) / std::abs(Q) : k_nan;
  out.lines.push_back("landauer: Q = " + fmt(Q) + ", T*dS = " + fmt(pm.T * dS) +
                      ", kT*ln2 = " + fmt(pm.T * std::log(2.0)) +
                      ", heat_mismatch = " + fmt(mismatch));
  return out;
}

// --------------------------------------------------------------------------
// registry

struct Experiment {
  const char* name;
  const char* blurb;
  ConfigMap defaults;
  std::size_t default_traj;
  RunOutput (*run)(const RunContext&);
};

const std::vector<Experiment>& registry() {
  static const std::vector<Experiment> r = {
      {"stark-je", "Jarzynski check on the driven-splitting jump unraveling",
       {{"gamma_q", "1"}, {"omega0", "0.3"}, {"mu", "1"}, {"T", "0.1"}, {"t_f", "1"},
        {"n_steps", "200"}, {"bins", "40"}, {"dump_traj", "3"}},
       2000, run_stark_je},
      {"rabi-je", "Jarzynski check on the resonantly driven qubit",
       {{"g", "1"}, {"delta", "0"}, {"omega_0", "10"}, {"gamma_q", "1"}, {"T", "10"},
        {"t_f", "12.566370614359172"}, {"n_steps", "2000"}, {"bins", "40"},
        {"dump_traj", "3"}},
       2000, run_rabi_je},
      {"spont-em", "spontaneous emission from a superposition",
       {{"gamma_q", "1"}, {"omega0", "0.01"}, {"t_f", "10"}, {"n_steps", "1000"},
        {"dump_traj", "3"}},
       2000, run_spont_em},
      {"mpe", "measurement-powered engine cycle statistics",
       {{"theta", "0.7853981633974483"}, {"theta_n", "1.5707963267948966"}, {"phi_n", "0"},
        {"omega0", "1"}, {"T_C", "0.1"}, {"tau_m", "0"}, {"tau_fb", "0"}, {"g", "1"}},
       5000, run_mpe},
      {"feedback", "diffusive state stabilization by feedback",
       {{"target_theta", "1.5707963267948966"}, {"gamma_meas", "0.1"}, {"omega0", "1"},
        {"w_cutoff", "inf"}, {"t_f", "15"}, {"n_steps", "300"}, {"bins", "60"}},
       200, run_feedback},
      {"fme-obe-compare", "steady-state comparison of the two driven-qubit descriptions",
       {{"delta", "0.01"}, {"omega_L", "1"}, {"gamma_q", "0.001"}, {"T", "0.1"},
        {"n_theta", "20"}},
       1, run_fme_obe_compare},
      {"finite-eta", "detector-efficiency corrected Jarzynski estimator",
       {{"eta", "0.3"}, {"gamma_q", "1"}, {"omega0", "0.3"}, {"mu", "1"}, {"T", "0.1"},
        {"t_f", "1"}, {"n_steps", "100"}, {"n_fict", "2000"}},
       500, run_finite_eta},
      {"optomech-semicl", "semiclassical qubit-oscillator evolution",
       {{"omega_0", "10"}, {"Omega_m", "0.05"}, {"g_m", "0.1"}, {"g", "5"},
        {"omega_L", "10"}, {"gamma_q", "1"}, {"T", "0"}, {"beta_re", "0"},
        {"beta_im", "20"}, {"pe_init", "-1"}, {"t_f", "0"}, {"dt", "0"},
        {"sample_every", "25"}},
       1, run_optomech_semicl},
      {"optomech-noise", "measurement noise heating of the monitored oscillator",
       {{"omega_0", "10"}, {"Omega_m", "0.05"}, {"g_m", "0.1"}, {"g", "5"},
        {"omega_L", "10"}, {"gamma_q", "1"}, {"T", "0"}, {"periods", "10"},
        {"sample_every", "16"}},
       4, run_optomech_noise},
      {"landauer", "mechanical-to-qubit energy conversion over an erasure sweep",
       {{"omega_0", "10000"}, {"Omega_m", "0.01"}, {"g_m", "0.1"}, {"gamma_q", "1"},
        {"T", "30000"}, {"beta_re", "0"}, {"beta_im", "100000"}, {"fraction", "0.25"},
        {"dt", "0.005"}, {"sample_every", "200"}},
       1, run_landauer},
  };
  return r;
}

std::string registry_names() {
  std::string s;
  for (const Experiment& e : registry()) {
    if (!s.empty()) s += ", ";
    s += e.name;
  }
  return s;
}

// --------------------------------------------------------------------------
// run command

int do_run(const std::string& experiment, const std::string& config_path,
           const std::vector<std::string>& set_kv, bool has_traj, long long traj,
           bool has_seed, std::uint64_t seed, int threads, std::string out_dir) {
  const Experiment* exp = nullptr;
  for (const Experiment& e : registry())
    if (experiment == e.name) exp = &e;
  if (!exp) {
    std::fprintf(stderr, "unknown experiment '%s' (valid: %s)\n", experiment.c_str(),
                 registry_names().c_str());
    return 2;
  }

  ConfigMap cfg = exp->defaults;
  cfg["n_traj"] = std::to_string(exp->default_traj);
  cfg["seed"] = "1";
  std::vector<std::string> allowed;
  for (const auto& [k, v] : cfg) allowed.push_back(k);

  if (!config_path.empty()) {
    ConfigMap file_cfg = parse_config_text(read_text_file(config_path));
    reject_unknown_keys(file_cfg, allowed);
    for (const auto& [k, v] : file_cfg) cfg[k] = v;
  }
  for (const std::string& kv : set_kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    ConfigMap one;
    one[trim_ws(kv.substr(0, eq))] = trim_ws(kv.substr(eq + 1));
    reject_unknown_keys(one, allowed);
    cfg[one.begin()->first] = one.begin()->second;
  }
  if (has_traj) cfg["n_traj"] = std::to_string(traj);
  if (has_seed) cfg["seed"] = std::to_string(seed);

  RunContext ctx;
  ctx.cfg = cfg;
  auto n_traj = config_int(cfg, "n_traj");
  if (n_traj < 1) throw std::invalid_argument("n_traj must be >= 1");
  ctx.n_traj = static_cast<std::size_t>(n_traj);
  ctx.seed = config_u64(cfg, "seed");
  ctx.threads = threads;

  if (out_dir.empty()) {
    const char* env = std::getenv("QTRAJ_OUT");
    out_dir = (env && *env ? std::string(env) : std::string("qtraj-runs")) + "/" +
              experiment;
  }

  auto t0 = std::chrono::steady_clock::now();
  RunOutput out = exp->run(ctx);  // throws before any file is written on bad config
  out.summary.n_traj = static_cast<long long>(ctx.n_traj);
  out.summary.seed = ctx.seed;

  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.experiment = experiment;
  manifest.config = cfg;
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("resolved.cfg", config_to_text(cfg));
  for (auto& f : out.files) files.push_back(std::move(f));
  files.emplace_back("summary.json", out.summary.to_json());
  for (const auto& [name, content] : files) {
    write_text_file(out_dir + "/" + name, content);
    manifest.file_checksums[name] = hex64(fnv1a64(content));
  }
  manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_file(out_dir + "/manifest.json", manifest.to_json());

  for (const std::string& line : out.lines) std::printf("%s\n", line.c_str());
  std::printf("wrote %zu files to %s\n", files.size() + 1, out_dir.c_str());
  return 0;
}

// --------------------------------------------------------------------------
// plot command

void write_dat(const std::string& fig_dir, const std::string& name, const CsvData& csv,
               const std::vector<std::string>& cols) {
  std::vector<std::size_t> idx;
  idx.reserve(cols.size());
  for (const std::string& c : cols) idx.push_back(require_column(csv, c));
  std::string out = "#";
  for (const std::string& c : cols) out += " " + c;
  out += "\n";
  for (const auto& row : csv.rows) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (j) out += ' ';
      out += row[idx[j]];
    }
    out += '\n';
  }
  write_text_file(fig_dir + "/" + name, out);
}

CsvData load_csv(const std::string& run_dir, const std::string& name) {
  return parse_csv(read_text_file(run_dir + "/" + name));
}

void fig_stark_shift(const std::string& run_dir, const std::string& fig_dir) {
  write_dat(fig_dir, "entropy_hist.dat", load_csv(run_dir, "histogram.csv"),
            {"bin_lo", "bin_hi", "count"});
  write_text_file(fig_dir + "/plot.gp",
                  "set terminal pngcairo size 900,600\n"
                  "set output 'stark_shift.png'\n"
                  "set style fill solid 0.6\n"
                  "set xlabel 'entropy production [k_B]'\n"
                  "set ylabel 'trajectories'\n"
                  "plot 'entropy_hist.dat' using (($1+$2)/2):3:($2-$1) "
                  "with boxes notitle\n");
}

void fig_finite_eff(const std::string& run_dir, const std::string& fig_dir) {
  write_dat(fig_dir, "je_vs_eta.dat", load_csv(run_dir, "results.csv"),
            {"eta", "uncorrected_mean", "uncorrected_err", "corrected_mean",
             "corrected_err"});
  write_text_file(fig_dir + "/plot.gp",
                  "set terminal pngcairo size 900,600\n"
                  "set output 'finite_eff.png'\n"
                  "set xlabel 'detector efficiency'\n"
                  "set ylabel 'exponential average'\n"
                  "set yrange [0:*]\n"
                  "plot 1 with lines dt 2 title 'ideal', \\\n"
                  "     'je_vs_eta.dat' using 1:2:3 with yerrorbars title 'uncorrected', \\\n"
                  "     'je_vs_eta.dat' using 1:4:5 with yerrorbars title 'corrected'\n");
}

void fig_je(const std::string& run_dir, const std::string& fig_dir) {
  CsvData ledger = load_csv(run_dir, "ledger.csv");
  std::size_t col = require_column(ledger, "entropy_kB");
  std::vector<double> dis;
  dis.reserve(ledger.rows.size());
  for (const auto& row : ledger.rows) dis.push_back(std::strtod(row[col].c_str(), nullptr));
  write_text_file(fig_dir + "/entropy_hist.dat",
                  [&] {
                    CsvData h = parse_csv(histogram_table(dis, 40).to_string());
                    std::string s = "# bin_lo bin_hi count\n";
                    for (const auto& r : h.rows) s += r[0] + " " + r[1] + " " + r[2] + "\n";
                    return s;
                  }());
  auto j = nlohmann::json::parse(read_text_file(run_dir + "/summary.json"));
  double ift = j.at("ift_mean").is_null() ? k_nan : j.at("ift_mean").get<double>();
  double err = j.at("ift_stderr").is_null() ? k_nan : j.at("ift_stderr").get<double>();
  write_text_file(fig_dir + "/plot.gp",
                  "set terminal pngcairo size 900,600\n"
                  "set output 'je.png'\n"
                  "set style fill solid 0.6\n"
                  "set xlabel 'entropy production [k_B]'\n"
                  "set ylabel 'trajectories'\n"
                  "set title 'ift mean = " + fmt(ift) + " +- " + fmt(err) + "'\n"
                  "plot 'entropy_hist.dat' using (($1+$2)/2):3:($2-$1) "
                  "with boxes notitle\n");
}

void fig_comparison(const std::string& run_dir, const std::string& fig_dir) {
  CsvData c = load_csv(run_dir, "compare.csv");
  write_dat(fig_dir, "panel_pe.dat", c, {"theta", "Pe_obe", "Pe_fme"});
  write_dat(fig_dir, "panel_coherence.dat", c, {"theta", "re_s", "im_s_obe", "im_s_fme"});
  write_dat(fig_dir, "panel_power.dat", c,
            {"theta", "PL_obe", "PL_fme", "Pres_obe", "Pres_fme"});
  write_dat(fig_dir, "panel_entropy.dat", c, {"theta", "sigma_i"});
  write_text_file(
      fig_dir + "/plot.gp",
      "set terminal pngcairo size 1200,900\n"
      "set output 'comparison.png'\n"
      "set multiplot layout 2,2\n"
      "set xlabel 'dressed angle'\n"
      "set ylabel 'excited population'\n"
      "plot 'panel_pe.dat' u 1:2 w l t 'OBE', '' u 1:3 w p pt 6 t 'FME'\n"
      "set ylabel 'steady coherence'\n"
      "plot 'panel_coherence.dat' u 1:2 w l t 'Re s', '' u 1:3 w l t 'Im s OBE', "
      "'' u 1:4 w p pt 6 t 'Im s FME'\n"
      "set ylabel 'power'\n"
      "plot 'panel_power.dat' u 1:2 w l t 'P_L OBE', '' u 1:3 w p pt 6 t 'P_L FME', "
      "'' u 1:4 w l t 'P_{res} OBE', '' u 1:5 w p pt 4 t 'P_{res} FME'\n"
      "set ylabel 'entropy flow rate'\n"
      "plot 'panel_entropy.dat' u 1:2 w l notitle\n"
      "unset multiplot\n");
}

void fig_conversion(const std::string& run_dir, const std::string& fig_dir) {
  write_dat(fig_dir, "conversion.dat", load_csv(run_dir, "conversion.csv"),
            {"t", "x", "P_e", "U_m", "W_cum", "Q_cum", "S_VN"});
  write_text_file(fig_dir + "/plot.gp",
                  "set terminal pngcairo size 900,900\n"
                  "set output 'conversion.png'\n"
                  "set multiplot layout 2,1\n"
                  "set xlabel 't'\n"
                  "set ylabel 'energy'\n"
                  "plot 'conversion.dat' u 1:5 w l t 'W', '' u 1:6 w l t 'Q', "
                  "'' u 1:($4-" +
                      [&] {
                        CsvData c = load_csv(run_dir, "conversion.csv");
                        return c.rows.empty()
                                   ? std::string("0")
                                   : c.rows.front()[require_column(c, "U_m")];
                      }() +
                      ") w l t 'dU_m'\n"
                      "set ylabel 'qubit'\n"
                      "plot 'conversion.dat' u 1:3 w l t 'P_e', '' u 1:7 w l t 'S_{VN}'\n"
                      "unset multiplot\n");
}

void fig_gamopt_av(const std::string& run_dir, const std::string& fig_dir) {
  write_dat(fig_dir, "gamma_av.dat", load_csv(run_dir, "semicl.csv"),
            {"t", "x", "P_e", "Gamma_opt"});
  write_text_file(fig_dir + "/plot.gp",
                  "set terminal pngcairo size 900,600\n"
                  "set output 'gamopt_av.png'\n"
                  "set xlabel 't'\n"
                  "set ylabel 'Gamma_{opt}'\n"
                  "set y2label 'x'\n"
                  "set y2tics\n"
                  "plot 'gamma_av.dat' u 1:4 w l t 'Gamma_{opt}', "
                  "'' u 1:2 w l axes x1y2 t 'x'\n");
}

void fig_gamopt_traj(const std::string& run_dir, const std::string& fig_dir) {
  write_dat(fig_dir, "variances.dat", load_csv(run_dir, "trajectory.csv"),
            {"t", "V_X", "V_P", "C_XP", "x"});
  write_text_file(fig_dir + "/plot.gp",
                  "set terminal pngcairo size 900,600\n"
                  "set output 'gamopt_traj.png'\n"
                  "set xlabel 't'\n"
                  "set ylabel 'conditional variance'\n"
                  "plot 'variances.dat' u 1:2 w l t 'V_X', '' u 1:3 w l t 'V_P', "
                  "'' u 1:4 w l t 'C_{XP}'\n");
}

void fig_drift(const std::string& run_dir, const std::string& fig_dir) {
  write_dat(fig_dir, "drift.dat", load_csv(run_dir, "drift.csv"),
            {"t_mid", "U_m", "P_e", "Gamma_opt"});
  write_text_file(fig_dir + "/plot.gp",
                  "set terminal pngcairo size 900,600\n"
                  "set output 'drift.png'\n"
                  "set xlabel 't'\n"
                  "set ylabel 'mechanical energy'\n"
                  "set y2label 'Gamma_{opt}'\n"
                  "set y2tics\n"
                  "plot 'drift.dat' u 1:2 w lp t 'U_m', "
                  "'' u 1:4 w lp axes x1y2 t 'Gamma_{opt}'\n");
}

struct Figure {
  const char* name;
  void (*emit)(const std::string&, const std::string&);
};

const std::vector<Figure>& figures() {
  static const std::vector<Figure> f = {
      {"f2:StarkShift", fig_stark_shift}, {"f2:FiniteEff", fig_finite_eff},
      {"f3:JE", fig_je},                  {"f3:Comparison", fig_comparison},
      {"f4:Conversion", fig_conversion},  {"f4:GamOptAv", fig_gamopt_av},
      {"f4:GamOptTraj", fig_gamopt_traj}, {"f4:DriftMO", fig_drift},
  };
  return f;
}

int do_plot(const std::string& run_dir, const std::string& figure) {
  for (const Figure& f : figures()) {
    if (figure != f.name) continue;
    std::string safe = figure;
    std::replace(safe.begin(), safe.end(), ':', '_');
    std::string fig_dir = run_dir + "/fig_" + safe;
    fs::create_directories(fig_dir);
    f.emit(run_dir, fig_dir);
    std::printf("wrote figure data for %s to %s\n", figure.c_str(), fig_dir.c_str());
    return 0;
  }
  std::string names;
  for (const Figure& f : figures()) {
    if (!names.empty()) names += ", ";
    names += f.name;
  }
  std::fprintf(stderr, "unknown figure '%s' (supported: %s)\n", figure.c_str(),
               names.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory thermodynamics batch runner"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run one experiment and write its artifacts");
  std::string experiment, config_path, out_dir;
  std::vector<std::string> set_kv;
  long long traj = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  run_cmd->add_option("experiment", experiment, "experiment name")->required();
  run_cmd->add_option("--config", config_path, "flat key = value config file");
  run_cmd->add_option("--set", set_kv, "override one config key (key=value)");
  auto* traj_opt = run_cmd->add_option("--traj", traj, "trajectory / cycle count");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "base RNG seed");
  run_cmd->add_option("--threads", threads, "worker threads (default: logical cores)");
  run_cmd->add_option("--out", out_dir,
                      "output directory (default: $QTRAJ_OUT/<experiment>)");

  auto* plot_cmd = app.add_subcommand("plot", "emit figure data from a run directory");
  std::string run_dir, figure;
  plot_cmd->add_option("run_dir", run_dir, "directory written by `qtraj run`")->required();
  plot_cmd->add_option("--figure", figure, "figure name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed())
      return do_run(experiment, config_path, set_kv, traj_opt->count() > 0, traj,
                    seed_opt->count() > 0, seed, threads, out_dir);
    return do_plot(run_dir, figure);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
