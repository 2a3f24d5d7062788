#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/fme_obe.hpp"
#include "qtraj/ledger.hpp"
#include "qtraj/optomech.hpp"
#include "qtraj/rng.hpp"

using namespace qtraj;
using Catch::Approx;

namespace {

// independent ground truth: zero-temperature noise rate as an explicit
// rational function of the detuning
double rate_at_zero_temperature(double g_m, double g, double delta, double gamma) {
  double d2 = 4.0 * delta * delta;
  double num = 2.0 * g_m * g_m * g * g * (d2 + gamma * gamma) * (g * g + 2.0 * gamma * gamma);
  double den = gamma * std::pow(d2 + 2.0 * g * g + gamma * gamma, 3);
  return num / den;
}

// independent ground truth: undriven population noise is a two-state telegraph
// with rates gamma*n up and gamma*(n+1) down, whose zero-frequency spectrum is
// 2 * variance * correlation time
double rate_telegraph(double g_m, double gamma, double n) {
  double tot = 2.0 * n + 1.0;
  return 2.0 * g_m * g_m * n * (n + 1.0) / (gamma * tot * tot * tot);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v) {
  double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

double covariance_of(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = mean_of(a), mb = mean_of(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - ma) * (b[i] - mb);
  return acc / static_cast<double>(a.size() - 1);
}

}  // namespace

TEST_CASE("a free oscillator rotates the coherent amplitude without decay") {
  OptomechParams pm{.omega_0 = 10.0, .Omega_m = 0.05, .g_m = 0.1, .g = 0.0,
                    .omega_L = 0.0, .gamma_q = 1.0, .T = 0.0};
  HybridSemiclassicalState init;
  init.beta = cplx(0.0, 20.0);
  double period = 2.0 * pi / pm.Omega_m;
  auto run = run_semiclassical(pm, init, 2.0 * period);

  bool qubit_untouched = true;
  double max_radius_dev = 0.0;
  for (const auto& st : run.states) {
    qubit_untouched = qubit_untouched && st.P_e == 0.0 && st.s_tilde == cplx(0.0, 0.0) &&
                      st.W_cum == 0.0 && st.Q_cum == 0.0;
    max_radius_dev = std::max(max_radius_dev, std::abs(std::abs(st.beta) - 20.0));
  }
  REQUIRE(qubit_untouched);
  REQUIRE(max_radius_dev <= 1e-8);
  REQUIRE(std::abs(run.states.back().beta - init.beta) <= 1e-8);

  auto bc = battery_work_check(run);
  REQUIRE(bc.W == 0.0);
  REQUIRE(std::abs(bc.dU_m) <= 1e-7);
}

TEST_CASE("a pinned excited population drives the displaced-orbit solution") {
  OptomechParams pm{.omega_0 = 10.0, .Omega_m = 0.05, .g_m = 0.1, .g = 0.0,
                    .omega_L = 0.0, .gamma_q = 1e-12, .T = 0.0};
  HybridSemiclassicalState init;
  init.P_e = 1.0;
  init.beta = cplx(0.0, 3.0);
  double period = 2.0 * pi / pm.Omega_m;
  auto run = run_semiclassical(pm, init, 2.0 * period, 0.02);

  // with P_e pinned at 1 the amplitude circles the force-displaced center
  cplx center(-pm.g_m / pm.Omega_m, 0.0);
  double max_dev = 0.0, max_w_dev = 0.0;
  for (std::size_t i = 0; i < run.states.size(); ++i) {
    double t = run.t(i);
    cplx expect = (init.beta - center) * std::exp(cplx(0.0, -pm.Omega_m * t)) + center;
    max_dev = std::max(max_dev, std::abs(run.states[i].beta - expect));
    max_w_dev = std::max(
        max_w_dev, std::abs(run.states[i].W_cum - pm.g_m * (run.states[i].x() - init.x())));
  }
  REQUIRE(max_dev <= 1e-6);
  REQUIRE(max_w_dev <= 1e-6);
  REQUIRE(run.states.back().P_e >= 1.0 - 1e-9);
}

TEST_CASE("strong driving modulates the population along an asymmetric orbit") {
  OptomechParams pm{.omega_0 = 1e4, .Omega_m = 0.05, .g_m = 0.1, .g = 5.0,
                    .omega_L = 1e4, .gamma_q = 1.0, .T = 0.0};
  HybridSemiclassicalState init;
  ObeSteady ss = obe_steady_state(pm.g, 0.0, pm.gamma_q, 0.0);
  init.P_e = ss.P_e;
  init.s_tilde = ss.s;
  init.beta = cplx(0.0, 20.0);
  double period = 2.0 * pi / pm.Omega_m;
  auto run = run_semiclassical(pm, init, 2.0 * period, 0.01);

  // scan the second oscillation, after the initial transient
  double pe_min = 1.0, pe_max = 0.0, r_min = 1e18, r_max = 0.0;
  for (std::size_t i = 0; i < run.states.size(); ++i) {
    if (run.t(i) < period) continue;
    const auto& st = run.states[i];
    pe_min = std::min(pe_min, st.P_e);
    pe_max = std::max(pe_max, st.P_e);
    double r = std::abs(st.beta);
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  REQUIRE(pe_max - pe_min >= 0.1);  // population modulated by the Stark sweep
  REQUIRE(r_max - r_min >= 0.2);    // work exchange distorts the orbit
}

TEST_CASE("an erasure quarter cycle converts mechanical energy into qubit work") {
  OptomechParams pm{.omega_0 = 1e4, .Omega_m = 0.01, .g_m = 0.1, .g = 0.0,
                    .omega_L = 0.0, .gamma_q = 1.0, .T = 3e4};
  HybridSemiclassicalState init;
  init.P_e = equilibrium_pe(pm.omega_0, pm.T);
  init.beta = cplx(0.0, 1e5);
  double t_f = pi / (2.0 * pm.Omega_m);
  auto run = run_semiclassical(pm, init, t_f, 0.005);
  const auto& fin = run.states.back();

  auto bc = battery_work_check(run);
  REQUIRE(bc.W > 0.0);
  REQUIRE(std::abs(bc.W + bc.dU_m) <= 1e-6 * std::abs(bc.W));

  // first law on the qubit
  double dU_q = pm.omega_q_at(fin.x()) * fin.P_e - pm.omega_0 * init.P_e;
  REQUIRE(std::abs(dU_q - bc.W - fin.Q_cum) <= 1e-9 * (std::abs(bc.W) + std::abs(fin.Q_cum)));

  // the sweep is quasistatic: the population tracks equilibrium, the work cost
  // approaches the free-energy difference and the heat approaches T dS
  REQUIRE(std::abs(fin.P_e - equilibrium_pe(pm.omega_q_at(fin.x()), pm.T)) <= 1e-3);
  double w_rev = reversible_work(fin.x(), pm.omega_0, pm.g_m, pm.T);
  double diss = (bc.W - w_rev) / std::abs(w_rev);
  REQUIRE(diss >= -1e-9);
  REQUIRE(diss <= 0.01);
  double dS = shannon_entropy(fin.P_e) - shannon_entropy(init.P_e);
  REQUIRE(dS < 0.0);
  REQUIRE(fin.Q_cum < 0.0);
  REQUIRE(std::abs(fin.Q_cum - pm.T * dS) <= 0.05 * std::abs(fin.Q_cum));
}

TEST_CASE("slow sweeps approach the reversible work bound") {
  auto sweep = [](double Omega_m) {
    OptomechParams pm{.omega_0 = 3.0, .Omega_m = Omega_m, .g_m = 0.1, .g = 0.0,
                      .omega_L = 0.0, .gamma_q = 1.0, .T = 1.0};
    HybridSemiclassicalState init;
    init.P_e = equilibrium_pe(pm.omega_0, pm.T);
    init.beta = cplx(0.0, 10.0);
    auto run = run_semiclassical(pm, init, pi / (2.0 * Omega_m), 0.01);
    const auto& fin = run.states.back();
    auto bc = battery_work_check(run);
    REQUIRE(std::abs(bc.W + bc.dU_m) <= 1e-6 * std::abs(bc.W));
    double w_rev = reversible_work(fin.x(), pm.omega_0, pm.g_m, pm.T);
    double dS = shannon_entropy(fin.P_e) - shannon_entropy(init.P_e);
    double heat_rel = std::abs(fin.Q_cum - pm.T * dS) / std::abs(fin.Q_cum);
    return std::tuple{(bc.W - w_rev) / std::abs(w_rev), heat_rel};
  };
  auto [diss_slow, heat_slow] = sweep(1e-3);
  auto [diss_fast, heat_fast] = sweep(0.05);

  REQUIRE(diss_slow >= -1e-8);
  REQUIRE(diss_slow <= 0.01);
  REQUIRE(heat_slow <= 0.05);
  REQUIRE(diss_fast > 0.02);
  REQUIRE(diss_fast > 5.0 * diss_slow);
  REQUIRE(heat_fast > heat_slow);
}

TEST_CASE("cycle metrics close the books over full oscillations") {
  OptomechParams pm{.omega_0 = 1e4, .Omega_m = 0.01, .g_m = 0.1, .g = 0.0,
                    .omega_L = 0.0, .gamma_q = 1.0, .T = 1e4};
  double period = 2.0 * pi / pm.Omega_m;
  HybridSemiclassicalState init;
  init.P_e = equilibrium_pe(pm.omega_0, pm.T);
  init.beta = cplx(0.0, 1000.0);
  auto run = run_semiclassical(pm, init, 2.0 * period, 0.01);
  auto met = landauer_cycle_metrics(run);

  REQUIRE(met.W.size() == 8);
  REQUIRE(met.Q.size() == 8);
  REQUIRE(met.dS_VN.size() == 8);
  REQUIRE(met.dU_m.size() == 2);

  const auto& fin = run.states.back();
  double sum_W = std::accumulate(met.W.begin(), met.W.end(), 0.0);
  double sum_Q = std::accumulate(met.Q.begin(), met.Q.end(), 0.0);
  double sum_dS = std::accumulate(met.dS_VN.begin(), met.dS_VN.end(), 0.0);
  double abs_W = 0.0, abs_Q = 0.0;
  for (double w : met.W) abs_W += std::abs(w);
  for (double q : met.Q) abs_Q += std::abs(q);
  REQUIRE(std::abs(sum_W - fin.W_cum) <= 1e-9 * (abs_W + 1.0));
  REQUIRE(std::abs(sum_Q - fin.Q_cum) <= 1e-9 * (abs_Q + 1.0));
  double dS_total = shannon_entropy(fin.P_e) - shannon_entropy(init.P_e);
  REQUIRE(std::abs(sum_dS - dS_total) <= 1e-10);

  for (std::size_t q = 0; q < met.Q.size(); ++q) {
    double t_ds = pm.T * met.dS_VN[q];
    REQUIRE(t_ds - met.Q[q] >= -1e-8 * pm.T);  // per-quarter entropy production
    if (std::abs(met.Q[q]) > 1.0)
      REQUIRE(std::abs(met.Q[q] - t_ds) <= 0.05 * std::abs(met.Q[q]));
  }

  // per-period battery identity, and the net transfer is a vanishing fraction
  // of the energy shuttled back and forth within the period
  for (std::size_t c = 0; c < met.dU_m.size(); ++c) {
    double w_period = 0.0, exchanged = 0.0;
    for (std::size_t q = 4 * c; q < 4 * c + 4; ++q) {
      w_period += met.W[q];
      exchanged += std::abs(met.W[q]);
    }
    REQUIRE(std::abs(met.dU_m[c] + w_period) <= 1e-5);
    REQUIRE(std::abs(met.dU_m[c]) <= 0.01 * exchanged);
  }

  // irreversibility grows with the sweep amplitude
  HybridSemiclassicalState init2 = init;
  init2.beta = cplx(0.0, 2000.0);
  auto run2 = run_semiclassical(pm, init2, period, 0.01);
  auto met2 = landauer_cycle_metrics(run2);
  REQUIRE(met2.dU_m.size() == 1);
  auto sigma_of = [&](const LandauerMetrics& m, std::size_t c) {
    double acc = 0.0;
    for (std::size_t q = 4 * c; q < 4 * c + 4; ++q) acc += m.dS_VN[q] - m.Q[q] / pm.T;
    return acc;
  };
  double sig_small = sigma_of(met, 0);
  double sig_large = sigma_of(met2, 0);
  REQUIRE(sig_small > 0.0);
  REQUIRE(sig_large > 2.0 * sig_small);
}

TEST_CASE("the driven population tracks its quasi-steady value in the adiabatic regime") {
  OptomechParams pm{.omega_0 = 1e4, .Omega_m = 0.01, .g_m = 0.1, .g = 5.0,
                    .omega_L = 1e4, .gamma_q = 1.0, .T = 0.0};
  HybridSemiclassicalState init;
  ObeSteady ss = obe_steady_state(pm.g, 0.0, pm.gamma_q, 0.0);
  init.P_e = ss.P_e;
  init.s_tilde = ss.s;
  init.beta = cplx(0.0, 20.0);
  double period = 2.0 * pi / pm.Omega_m;
  auto run = run_semiclassical(pm, init, period, 0.01);

  double max_dev = 0.0;
  for (std::size_t i = 0; i < run.states.size(); i += 100) {
    const auto& st = run.states[i];
    double pe_ss = obe_steady_state(pm.g, pm.delta_T_at(st.x()), pm.gamma_q, 0.0).P_e;
    max_dev = std::max(max_dev, std::abs(st.P_e - pe_ss));
  }
  REQUIRE(max_dev <= 0.05);
}

TEST_CASE("the regression rate matches the zero-temperature closed form on a detuning grid") {
  for (double g : {0.2, 1.0, 5.0, 20.0}) {
    OptomechParams pm{.omega_0 = 1.0, .Omega_m = 0.01, .g_m = 0.1, .g = g,
                      .omega_L = 1.0, .gamma_q = 1.0, .T = 0.0};
    double max_rel = 0.0;
    for (int i = 0; i < 100; ++i) {
      double delta = -10.0 + 20.0 * static_cast<double>(i) / 99.0;
      double got = gamma_opt(delta, pm);
      double want = rate_at_zero_temperature(pm.g_m, g, delta, pm.gamma_q);
      max_rel = std::max(max_rel, std::abs(got - want) / want);
    }
    REQUIRE(max_rel <= 1e-9);
  }
}

TEST_CASE("the regression rate matches the undriven telegraph spectrum at finite temperature") {
  for (double n : {0.05, 0.2, 1.0, 2.53, 10.0, 100.0}) {
    double T = 1.0 / std::log1p(1.0 / n);  // occupation n at unit splitting
    OptomechParams pm{.omega_0 = 1.0, .Omega_m = 0.01, .g_m = 0.1, .g = 0.0,
                      .omega_L = 0.0, .gamma_q = 1.0, .T = T};
    double got = gamma_opt(1.0, pm);  // delta_T equals omega_q when omega_L = 0
    REQUIRE(got == Approx(rate_telegraph(pm.g_m, pm.gamma_q, n)).epsilon(1e-10));
  }

  OptomechParams frozen{.omega_0 = 1.0, .Omega_m = 0.01, .g_m = 0.1, .g = 0.0,
                        .omega_L = 0.0, .gamma_q = 1.0, .T = 0.0};
  REQUIRE(gamma_opt(1.0, frozen) == 0.0);  // no drive, no bath, no noise

  OptomechParams driven{.omega_0 = 5.0, .Omega_m = 0.01, .g_m = 0.1, .g = 3.0,
                        .omega_L = 5.0, .gamma_q = 1.0, .T = 2.0};
  for (double delta : {-3.0, 0.5, 2.0}) REQUIRE(gamma_opt(delta, driven) > 0.0);
}

TEST_CASE("ensemble moments follow the constant-rate closed forms") {
  double Om = 0.05, G = 1e-3, dt = 0.2;
  auto closed = [&](double t) {
    double s = std::sin(2.0 * Om * t), c = std::cos(2.0 * Om * t);
    GaussianMOState out;
    out.V_X = 1.0 + 2.0 * G * t - G / Om * s;
    out.V_P = 1.0 + 2.0 * G * t + G / Om * s;
    out.C_XP = 2.0 * G / Om * (1.0 - c);
    return out;
  };

  GaussianMOState s{3.0, -4.0, 1.0, 1.0, 0.0};
  GaussianMOState undiffused = s;
  int step = 0;
  for (int target : {25, 125, 300, 600}) {
    for (; step < target; ++step) {
      s = gaussian_ensemble_step(s, G, Om, dt);
      undiffused = gaussian_ensemble_step(undiffused, 0.0, Om, dt);
    }
    double t = dt * target;
    GaussianMOState want = closed(t);
    REQUIRE(s.V_X == Approx(want.V_X).epsilon(1e-6));
    REQUIRE(s.V_P == Approx(want.V_P).epsilon(1e-6));
    REQUIRE(s.C_XP == Approx(want.C_XP).margin(1e-6));
    // diffusion leaves the means untouched, and they rotate freely
    REQUIRE(s.x == undiffused.x);
    REQUIRE(s.p == undiffused.p);
    REQUIRE(s.x == Approx(3.0 * std::cos(Om * t) - 4.0 * std::sin(Om * t)).margin(1e-8));
    REQUIRE(s.p == Approx(-4.0 * std::cos(Om * t) - 3.0 * std::sin(Om * t)).margin(1e-8));
  }

  // over a short window the fresh variance grows at rate 4 Gamma
  GaussianMOState w{0.0, 0.0, 1.0, 1.0, 0.0};
  double t_s = 0.02 * 2.0 * pi / Om;
  int n_w = 13;
  for (int i = 0; i < n_w; ++i) w = gaussian_ensemble_step(w, G, Om, t_s / n_w);
  REQUIRE((w.V_P - 1.0) / t_s == Approx(4.0 * G).epsilon(0.01));

  // a free coherent state is invariant
  GaussianMOState inv{0.5, -0.25, 1.0, 1.0, 0.0};
  for (int i = 0; i < 50; ++i) inv = gaussian_ensemble_step(inv, 0.0, Om, dt);
  REQUIRE(inv.V_X == 1.0);
  REQUIRE(inv.V_P == 1.0);
  REQUIRE(inv.C_XP == 0.0);
}

TEST_CASE("conditional variances hold the uncertainty shell") {
  double Om = 0.05, dt = 0.2;

  SECTION("free rotation of a squeezed state follows the closed form") {
    double r = 0.5;
    GaussianMOState s{0.0, 0.0, std::exp(-2.0 * r), std::exp(2.0 * r), 0.0};
    Rng rng(321);
    double ch = std::cosh(2.0 * r), sh = std::sinh(2.0 * r);
    double max_dev = 0.0, max_shell = 0.0;
    bool readout_blank = true;
    for (int i = 0; i < 628; ++i) {
      auto res = gaussian_qsd_step(s, 0.0, Om, dt, rng);
      readout_blank = readout_blank && std::isnan(res.readout);
      s = res.state;
      double t = dt * (i + 1);
      max_dev = std::max({max_dev, std::abs(s.V_X - (ch - sh * std::cos(2.0 * Om * t))),
                          std::abs(s.V_P - (ch + sh * std::cos(2.0 * Om * t))),
                          std::abs(s.C_XP - 2.0 * sh * std::sin(2.0 * Om * t))});
      max_shell = std::max(max_shell, std::abs(uncertainty_product(s) - 4.0));
    }
    REQUIRE(readout_blank);
    REQUIRE(max_dev <= 1e-6);
    REQUIRE(max_shell <= 1e-6);
  }

  SECTION("a monitored pure state stays on the shell") {
    GaussianMOState s{0.0, 12.0, 1.0, 1.0, 0.0};
    Rng rng(654);
    double lo = 1e18, hi = 0.0;
    for (int i = 0; i < 3141; ++i) {
      s = gaussian_qsd_step(s, 2e-3, Om, dt, rng).state;
      double prod = uncertainty_product(s);
      lo = std::min(lo, prod);
      hi = std::max(hi, prod);
    }
    REQUIRE(lo >= 4.0 * (1.0 - 1e-9));
    REQUIRE(hi <= 4.0 + 1e-7);
  }

  SECTION("a mixed state contracts monotonically toward the shell") {
    GaussianMOState s{0.0, 0.0, 1.5, 1.2, 0.0};
    Rng rng(987);
    double prev = uncertainty_product(s);
    double excess0 = prev - 4.0;
    for (int block = 0; block < 5; ++block) {
      for (int i = 0; i < 628; ++i) s = gaussian_qsd_step(s, 2e-3, Om, dt, rng).state;
      double prod = uncertainty_product(s);
      REQUIRE(prod <= prev + 1e-12);
      REQUIRE(prod >= 4.0 - 1e-12);
      prev = prod;
    }
    REQUIRE(prev - 4.0 <= 0.05 * excess0);
  }
}

TEST_CASE("conditioning splits the ensemble variance into spread plus conditional parts") {
  double Om = 0.05, G = 8e-4, dt = 0.2;
  int n_steps = 1250, n_traj = 300;
  GaussianMOState ens{0.0, 40.0, 1.0, 1.0, 0.0};
  for (int i = 0; i < n_steps; ++i) ens = gaussian_ensemble_step(ens, G, Om, dt);

  std::vector<double> xs, ps, vxs, vps, cs;
  for (int k = 0; k < n_traj; ++k) {
    Rng rng = trajectory_rng(9090, static_cast<std::uint64_t>(k));
    GaussianMOState s{0.0, 40.0, 1.0, 1.0, 0.0};
    for (int i = 0; i < n_steps; ++i) s = gaussian_qsd_step(s, G, Om, dt, rng).state;
    xs.push_back(s.x);
    ps.push_back(s.p);
    vxs.push_back(s.V_X);
    vps.push_back(s.V_P);
    cs.push_back(s.C_XP);
  }
  double n1 = static_cast<double>(n_traj - 1);
  double var_x = variance_of(xs), var_p = variance_of(ps), cov_xp = covariance_of(xs, ps);

  double total_x = mean_of(vxs) + var_x;
  double se_x = std::sqrt(2.0 * var_x * var_x / n1 + variance_of(vxs) / n_traj);
  REQUIRE(std::abs(total_x - ens.V_X) <= 4.0 * se_x);

  double total_p = mean_of(vps) + var_p;
  double se_p = std::sqrt(2.0 * var_p * var_p / n1 + variance_of(vps) / n_traj);
  REQUIRE(std::abs(total_p - ens.V_P) <= 4.0 * se_p);

  double total_c = mean_of(cs) + 2.0 * cov_xp;
  double se_c = std::sqrt(4.0 * (var_x * var_p + cov_xp * cov_xp) / n1 + variance_of(cs) / n_traj);
  REQUIRE(std::abs(total_c - ens.C_XP) <= 4.0 * se_c);

  REQUIRE(std::abs(mean_of(xs) - ens.x) <= 4.0 * std::sqrt(var_x / n_traj));
  REQUIRE(std::abs(mean_of(ps) - ens.p) <= 4.0 * std::sqrt(var_p / n_traj));
}

TEST_CASE("the monitored oscillator keeps order-one conditional variances") {
  OptomechParams pm{.omega_0 = 1e4, .Omega_m = 0.05, .g_m = 0.1, .g = 5.0,
                    .omega_L = 1e4, .gamma_q = 1.0, .T = 0.0};
  double period = 2.0 * pi / pm.Omega_m;
  int steps_per_period = 640;
  double dt = period / steps_per_period;

  for (std::uint64_t seed : {11ull, 12ull}) {
    Rng rng(seed);
    GaussianMOState s{0.0, 40.0, 1.0, 1.0, 0.0};
    double v_lo = 1e18, v_hi = 0.0, shell_lo = 1e18, g_hi = 0.0;
    double innovation_sum = 0.0;
    int n = 10 * steps_per_period;
    for (int i = 0; i < n; ++i) {
      double G = gamma_opt(pm.delta_T_at(s.x), pm);
      g_hi = std::max(g_hi, G);
      auto res = gaussian_qsd_step(s, G, pm.Omega_m, dt, rng);
      innovation_sum += res.readout - s.x;
      s = res.state;
      v_lo = std::min({v_lo, s.V_X, s.V_P});
      v_hi = std::max({v_hi, s.V_X, s.V_P});
      shell_lo = std::min(shell_lo, uncertainty_product(s));
    }
    REQUIRE(v_lo >= 0.2);
    REQUIRE(v_hi <= 5.0);
    REQUIRE(shell_lo >= 4.0 - 1e-6);
    REQUIRE(g_hi > 0.0);
    REQUIRE(g_hi < 0.01);
    // the record noise averages out around the filtered mean
    REQUIRE(std::abs(innovation_sum / n) <= 6.0);
  }
}

TEST_CASE("drift runs heat on average and decouple at large amplitude") {
  OptomechParams pm{.omega_0 = 1e4, .Omega_m = 0.05, .g_m = 0.1, .g = 5.0,
                    .omega_L = 1e4, .gamma_q = 1.0, .T = 0.0};
  double period = 2.0 * pi / pm.Omega_m;

  Rng rng_small(71001), rng_large(71002);
  GaussianMOState small_amp{0.0, 40.0, 1.0, 1.0, 0.0};
  GaussianMOState large_amp{0.0, 320.0, 1.0, 1.0, 0.0};
  auto ds = long_time_run(pm, small_amp, 3.0 * period, rng_small);
  auto dl = long_time_run(pm, large_amp, 3.0 * period, rng_large);

  REQUIRE(ds.t.size() == 3);
  REQUIRE(dl.U_m.size() == 3);
  REQUIRE(ds.t[1] == Approx(1.5 * period).epsilon(1e-12));
  // far off resonance the qubit barely excites and barely heats the motion
  REQUIRE(mean_of(dl.P_e) < 0.25 * mean_of(ds.P_e));
  REQUIRE(mean_of(dl.Gamma_opt) < 0.5 * mean_of(ds.Gamma_opt));

  // from near vacuum the recorded energy drifts upward on average
  int n_seeds = 48, n_osc = 30;
  std::vector<double> gains;
  bool energy_nonnegative = true;
  for (int k = 0; k < n_seeds; ++k) {
    Rng rng = trajectory_rng(555, static_cast<std::uint64_t>(k));
    auto d = long_time_run(pm, GaussianMOState{}, n_osc * period, rng);
    energy_nonnegative = energy_nonnegative && d.U_m.front() >= 0.0;
    gains.push_back(d.U_m.back() - d.U_m.front());
  }
  REQUIRE(energy_nonnegative);
  double m = mean_of(gains);
  double se = std::sqrt(variance_of(gains) / n_seeds);
  REQUIRE(m > 0.0);
  REQUIRE(m > 2.0 * se);
}

TEST_CASE("wigner coefficients invert the covariance matrix") {
  GaussianMOState coherent{1.5, -2.0, 1.0, 1.0, 0.0};
  auto wc = wigner_params(coherent);
  REQUIRE(wc.a == Approx(0.5).epsilon(1e-12));
  REQUIRE(wc.b == Approx(0.0).margin(1e-15));
  REQUIRE(wc.c == Approx(0.5).epsilon(1e-12));
  REQUIRE(uncertainty_product(coherent) == 4.0);

  GaussianMOState squeezed{0.0, 0.0, 0.5, 2.5, 1.0};
  double d = uncertainty_product(squeezed);
  auto ws = wigner_params(squeezed);
  REQUIRE(ws.a == Approx(2.0 * 2.5 / d).epsilon(1e-12));
  REQUIRE(ws.b == Approx(1.0 / d).epsilon(1e-12));
  REQUIRE(ws.c == Approx(2.0 * 0.5 / d).epsilon(1e-12));
  REQUIRE(ws.a * ws.c - ws.b * ws.b == Approx(1.0 / d).epsilon(1e-12));

  GaussianMOState degenerate{0.0, 0.0, 0.5, 0.5, 1.0};
  REQUIRE_THROWS_AS(wigner_params(degenerate), std::invalid_argument);

  REQUIRE(mech_energy(GaussianMOState{}, 0.05) == 0.0);
  REQUIRE(mech_energy(GaussianMOState{2.0, 0.0, 1.0, 1.0, 0.0}, 0.05) == Approx(0.05));
}

TEST_CASE("reversible work vanishes at trivial endpoints and grows with the sweep") {
  REQUIRE(reversible_work(0.0, 3.0, 0.1, 1.0) == 0.0);
  REQUIRE(std::abs(reversible_work(1.0, 500.0, 0.1, 1.0)) < 1e-200);  // frozen qubit
  REQUIRE(reversible_work(5.0, 3.0, 0.1, 1.0) > 0.0);
  REQUIRE(reversible_work(-5.0, 3.0, 0.1, 1.0) < 0.0);
}

TEST_CASE("out-of-contract calls are rejected") {
  OptomechParams good{.omega_0 = 1e4, .Omega_m = 0.05, .g_m = 0.1, .g = 5.0,
                      .omega_L = 1e4, .gamma_q = 1.0, .T = 0.0};

  SECTION("parameter validation") {
    OptomechParams bad = good;
    bad.omega_0 = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.T = -1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.g_m = -0.1;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    OptomechParams narrow{.omega_0 = 1.0, .Omega_m = 0.05, .g_m = 0.1, .g = 0.0,
                          .omega_L = 0.0, .gamma_q = 1.0, .T = 0.0};
    REQUIRE_THROWS_AS(narrow.n_at(-30.0), std::runtime_error);
    REQUIRE_THROWS_AS(equilibrium_pe(-1.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(equilibrium_pe(1.0, -1.0), std::invalid_argument);
    REQUIRE(equilibrium_pe(1.0, 0.0) == 0.0);
  }

  SECTION("step preconditions") {
    HybridSemiclassicalState st;
    REQUIRE_THROWS_AS(semiclassical_step(st, good, 0.02), std::invalid_argument);
    REQUIRE_THROWS_AS(semiclassical_step(st, good, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(run_semiclassical(good, st, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(run_semiclassical(good, st, 1.0, 0.02), std::invalid_argument);

    GaussianMOState gs;
    REQUIRE_THROWS_AS(gaussian_ensemble_step(gs, -1.0, 0.05, 0.1), std::invalid_argument);
    REQUIRE_THROWS_AS(gaussian_ensemble_step(gs, 0.0, 0.0, 0.1), std::invalid_argument);
    REQUIRE_THROWS_AS(gaussian_ensemble_step(gs, 0.0, 0.05, 0.5), std::invalid_argument);
    Rng rng(5);
    REQUIRE_THROWS_AS(gaussian_qsd_step(gs, -1.0, 0.05, 0.1, rng), std::invalid_argument);
    GaussianMOState runaway{0.0, 0.0, 1e9, 1.0, 0.0};
    REQUIRE_THROWS_AS(gaussian_qsd_step(runaway, 1e-3, 0.05, 0.2, rng), std::runtime_error);
  }

  SECTION("ledger preconditions") {
    SemiclassicalRun run;
    run.params = good;  // driven
    run.dt = 0.01;
    run.states.resize(2);
    REQUIRE_THROWS_AS(battery_work_check(run), std::invalid_argument);
    REQUIRE_THROWS_AS(landauer_cycle_metrics(run), std::invalid_argument);
    run.params.g = 0.0;
    REQUIRE_THROWS_AS(landauer_cycle_metrics(run), std::invalid_argument);  // partial period
    run.states.resize(1);
    REQUIRE_THROWS_AS(battery_work_check(run), std::invalid_argument);

    REQUIRE_THROWS_AS(reversible_work(1.0, 3.0, 0.1, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(reversible_work(-31.0, 3.0, 0.1, 1.0), std::invalid_argument);

    Rng rng(6);
    double period = 2.0 * pi / good.Omega_m;
    REQUIRE_THROWS_AS(long_time_run(good, GaussianMOState{}, 0.5 * period, rng),
                      std::invalid_argument);

    OptomechParams warm{.omega_0 = 1.0, .Omega_m = 0.01, .g_m = 0.1, .g = 0.0,
                        .omega_L = 0.0, .gamma_q = 1.0, .T = 1.0};
    REQUIRE_THROWS_AS(gamma_opt(-0.5, warm), std::invalid_argument);
  }
}

TEST_CASE("regime warnings flag marginal parameters") {
  OptomechParams good{.omega_0 = 1e4, .Omega_m = 0.05, .g_m = 0.1, .g = 5.0,
                      .omega_L = 1e4, .gamma_q = 1.0, .T = 0.0};
  REQUIRE(good.regime_warnings().empty());

  OptomechParams slow_qubit = good;
  slow_qubit.Omega_m = 0.15;
  slow_qubit.g_m = 0.2;
  auto w1 = slow_qubit.regime_warnings();
  REQUIRE(w1.size() == 1);
  REQUIRE(w1[0].find("adiabatic") != std::string::npos);

  OptomechParams strong_coupling = good;
  strong_coupling.g_m = 0.5;
  auto w2 = strong_coupling.regime_warnings();
  REQUIRE(w2.size() == 1);
  REQUIRE(w2[0].find("semiclassical") != std::string::npos);

  OptomechParams weak_backaction = good;
  weak_backaction.g_m = 0.01;
  auto w3 = weak_backaction.regime_warnings();
  REQUIRE(w3.size() == 1);
  REQUIRE(w3[0].find("ultrastrong") != std::string::npos);
}
