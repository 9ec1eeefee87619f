// One PASS/FAIL line per acceptance criterion.  Exit status 1 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hartree/dynamics.hpp"
#include "hartree/ground_state.hpp"
#include "hartree/kernels.hpp"
#include "hartree/linearized.hpp"
#include "hartree/modulation_bw.hpp"
#include "hartree/qt_family.hpp"

using namespace hartree;

namespace {

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string g3(double x) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", x);
  return b;
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "[+] " : "[x] ") + what);
  }
};

double max_rel(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff(); }
double rel_err(const Scheme& s, const CVec& a, const CVec& b) { return s.norm(CVec(a - b)) / s.norm(b); }

// continuum reference for S(t)
const GroundState& q_ref() {
  static const GroundState q = find_ground_state_shooting(Scheme(make_grid(2048, 30.0), SchemeKind::fv4));
  return q;
}

struct Lin {
  Scheme sch;
  GroundState gs;
  LinearizedSystem lin;
  Lin(int n, double R)
      : sch(make_grid(n, R), SchemeKind::fv4), gs(find_ground_state_shooting(sch)), lin(assemble(sch, gs.profile.real())) {}
};
const Lin& lin_coarse() {
  static const Lin l(256, 20.0);
  return l;
}
const Lin& lin_medium() {
  static const Lin l(1024, 30.0);
  return l;
}
const Lin& lin_fine() {
  static const Lin l(2048, 30.0);
  return l;
}

void c1(Verdict& v) {
  const auto g = make_grid(512, 12.0);
  const auto t0 = Clock::now();
  const KernelMatrix m = build_kernel_matrix(KernelSpec::newton(), g);
  const double secs = since(t0);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> amp(0.0, 1.0), wid(0.3, 2.0), cen(0.0, 3.0);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    double a[3], b[3], c[3];
    for (int l = 0; l < 3; ++l) a[l] = amp(rng), b[l] = wid(rng), c[l] = cen(rng);
    const RadialField rho = sample(g, [&](double r) {
      double s = 0;
      for (int l = 0; l < 3; ++l) s += a[l] * std::exp(-b[l] * (r - c[l]) * (r - c[l]));
      return s;
    });
    worst = std::max(worst, max_rel(convolve(m, rho).real(), newton_potential(rho).real()));
  }
  v.check(worst <= 1e-8, "20 random densities, worst relative error " + g3(worst) + " <= 1e-8");
  v.check(secs < 60, "assembly at n=512 took " + g3(secs) + " s < 60 s");
}

void c2(Verdict& v) {
  const Scheme sch(make_grid(1024, 30.0), SchemeKind::fv4);
  const GroundState s = find_ground_state_shooting(sch);
  const GroundState f =
      find_ground_state_gradient_flow(sch, sample(sch.grid_ptr(), [](double r) { return std::exp(-r * r / 4); }));
  const double dmax = max_rel(f.profile.real(), s.profile.real());
  const double dmass = std::abs(f.mass - s.mass) / s.mass;
  v.check(dmax <= 1e-5, "shooting vs flow max-norm " + g3(dmax) + " <= 1e-5");
  v.check(dmass <= 1e-5, "shooting vs flow mass " + g3(dmass) + " <= 1e-5");
  for (const GroundState* q : {&s, &f}) {
    const std::string tag = to_string(q->method);
    v.check(q->residual <= 1e-8, tag + " residual " + g3(q->residual) + " <= 1e-8");
    const double e = std::abs(q->energy) / q->grad_norm_sq;
    v.check(e <= 1e-6, tag + " |E(Q)| / |grad Q|^2 = " + g3(e) + " <= 1e-6");
  }
}

void c3(Verdict& v) {
  const Scheme sch(make_grid(1024, 30.0), SchemeKind::fv4);
  const GroundState q = find_ground_state_shooting(sch);
  const double j = weinstein_functional(sch, q.profile.values);
  const double dj = std::abs(j - 0.5 * q.mass) / (0.5 * q.mass);
  v.check(dj <= 1e-4, "J(Q) vs |Q|^2/2 relative " + g3(dj) + " <= 1e-4");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.2, 3.0);
  double worst = kInf;
  for (int trial = 0; trial < 50; ++trial) {
    const double a = 2 * u(rng), b = w(rng), c = u(rng), ph = 3 * u(rng);
    const RadialField f = sample(sch.grid_ptr(), [&](double r) {
      return cplx(a, c) * std::exp(-b * r * r) * std::exp(cplx(0, ph * r * r)) * (1.0 + c * r);
    });
    worst = std::min(worst, gwp_margin(sch, f.values, q) / sch.grad_norm_sq(f.values));
  }
  v.check(worst >= -1e-6, "50 random fields, min gwp_margin / |grad u|^2 = " + g3(worst) + " >= -1e-6");
}

void c4(Verdict& v) {
  const Margins m1 = nondegeneracy_margin(lin_medium().lin), m2 = nondegeneracy_margin(lin_fine().lin);
  const double drift = std::abs(m2.lplus - m1.lplus) / m1.lplus;
  v.check(m1.lplus > 0 && m2.lplus > 0, "smallest |eig L+| = " + g3(m1.lplus) + " (n=1024), " + g3(m2.lplus) +
                                            " (n=2048), both positive");
  v.check(drift <= 0.2, "change under grid doubling " + g3(drift) + " <= 0.2");
  const KernelRelations k = kernel_relations(lin_fine().lin);
  v.check(k.lminus_q <= 1e-8, "|L- Q| / |Q| = " + g3(k.lminus_q) + " <= 1e-8");
  v.check(k.lplus_q1 <= 1e-6, "|L+ Q1 + 2Q| / |Q| = " + g3(k.lplus_q1) + " <= 1e-6");
}

void c5(Verdict& v) {
  const ChainCheck c = jordan_chain_check(lin_fine().lin);
  v.check(c.residuals[0] <= 1e-8, "|H phi1| / |phi1| = " + g3(c.residuals[0]) + " <= 1e-8");
  const double span = std::max({c.residuals[1], c.residuals[2], c.residuals[3]});
  v.check(span <= 1e-6, "chain span-fit residuals max " + g3(span) + " <= 1e-6");
  const double nil = *std::max_element(c.nilpotency.begin(), c.nilpotency.end());
  v.check(nil <= 1e-6, "max |H^4 phi_i| / |phi_i| = " + g3(nil) + " <= 1e-6");
  const LinearizedSystem& s = lin_coarse().lin;
  const RieszResult r = riesz_projection(s);
  v.check(std::abs(r.trace_re - 4.0) <= 1e-6 && std::abs(r.trace_im) <= 1e-6,
          "Riesz trace " + g3(r.trace_re) + " (error " + g3(std::abs(r.trace_re - 4)) + ") = 4 +- 1e-6, n=256");
  const auto p = propagate_linearized(s, s.phi[3], {200.0, 400.0});
  const double slope = std::log(s.norm(p[1]) / s.norm(p[0])) / std::log(2.0);
  v.check(std::abs(slope - 3.0) <= 0.1, "root-space growth log-log slope " + g3(slope) + " -> 3 (+- 0.1)");
}

void c6(Verdict& v) {
  const RootCoefficients rc = root_coefficients(lin_fine().lin, lin_fine().lin.phi[0]);
  v.check(rc.rho_q > 0, "<rho,Q> = " + g3(rc.rho_q) + " > 0");
  v.check(rc.x2q_q > 0, "<|x|^2 Q,Q> = " + g3(rc.x2q_q) + " > 0");
  v.check(rc.x2q_rho > 0, "<|x|^2 Q,rho> = " + g3(rc.x2q_rho) + " > 0");
}

void c7(Verdict& v) {
  const Scheme sch(make_grid(512, 30.0), SchemeKind::fv4);
  const Vec q_inf = find_ground_state_shooting(sch).profile.real();
  std::vector<double> ts;
  for (int i = 0; i <= 8; ++i) ts.push_back(1000.0 * std::pow(10.0, -i / 4.0));
  const ProfileFamily fam = continuation_sweep(sch, q_inf, 5.0, Phi::rational(), ts);
  bool monotone = true;
  double prev = kInf;
  for (const Vec& q : fam.profiles) {  // t increasing
    const double d = sch.h1_norm(Vec(q - q_inf));
    monotone = monotone && d < prev;
    prev = d;
  }
  v.check(monotone, "H1 distance to Q decreasing in t on [10, 1000]");
  const DecayFit f = dt_decay_exponent(fam);
  v.check(!f.degenerate && std::abs(f.slope + 6.0) <= 0.2, "decay exponent of |d_t Q^(t)|_H1 = " + g3(f.slope) +
                                                               " = -6 +- 0.2");
  const EnvelopeCheck e = uniform_decay_check(fam);
  v.check(e.pass, "uniform exponential envelope, delta = " + g3(e.delta));
}

void c8(Verdict& v) {
  double worst_mass = 0, worst_energy = 0;
  auto account = [&](const TrajectoryLog& l) {
    worst_mass = std::max(worst_mass, l.max_mass_drift);
    worst_energy = std::max(worst_energy, l.max_energy_drift);
  };
  auto soliton = [&](int n, double dt) {
    const auto g = make_grid(n, 20.0);
    const RadialField q = transfer(q_ref().profile, g);
    const TrajectoryLog log = evolve(q, 0.0, 1.0, dt, KernelSpec::newton());
    account(log);
    return std::make_pair(log.final_state.values,
                          rel_err(Scheme(g), log.final_state.values, CVec(q.values * std::exp(cplx(0, 1)))));
  };
  auto s_run = [&](int n, double dt) {
    const auto g = make_grid(n, 20.0);
    const TrajectoryLog log = evolve(exact_S(-1.0, g, q_ref(), SConvention::forward), -1.0, -0.5, dt,
                                     KernelSpec::newton());
    account(log);
    return std::make_pair(log.final_state.values,
                          rel_err(Scheme(g), log.final_state.values,
                                  exact_S(-0.5, g, q_ref(), SConvention::forward).values));
  };
  auto orders = [](double a, double b, double c) { return std::min(std::log2(a / b), std::log2(b / c)); };
  auto dt_orders = [&](auto run, int n, double dt0, double dtref) {
    const Scheme s(make_grid(n, 20.0));
    const CVec r = run(n, dtref).first;
    double d[3];
    for (int k = 0; k < 3; ++k) d[k] = s.norm(CVec(run(n, dt0 / (1 << k)).first - r));
    return orders(d[0], d[1], d[2]);
  };

  const double sr = orders(soliton(128, 1e-3).second, soliton(256, 1e-3).second, soliton(512, 1e-3).second);
  v.check(sr >= 1.9, "solitary wave, order in dr " + g3(sr) + " >= 1.9");
  const double st = dt_orders(soliton, 256, 0.01, 1e-4);
  v.check(st >= 1.9, "solitary wave, order in dt " + g3(st) + " >= 1.9");
  const double xr = orders(s_run(256, 1e-4).second, s_run(512, 1e-4).second, s_run(1024, 1e-4).second);
  v.check(xr >= 1.9, "S(t) on [-1, -0.5], order in dr " + g3(xr) + " >= 1.9");
  const double xt = dt_orders(s_run, 512, 4e-3, 1e-4);
  v.check(xt >= 1.9, "S(t) on [-1, -0.5], order in dt " + g3(xt) + " >= 1.9");

  const auto g = make_grid(1024, 10.0);
  EvolveOptions o;
  o.monitor_every = 2e-3;
  const RadialField u0 = sample(g, [](double r) { return 2.0 * std::exp(-r * r); });
  const TrajectoryLog log = evolve(u0, 0.0, 0.3, 1e-4, KernelSpec::newton(), o);
  account(log);
  const VirialCheck vc = virial_check(log);
  v.check(vc.deviation <= 0.01, "virial deviation " + g3(vc.deviation) + " <= 1% (E0 = " + g3(log.energy0) + ")");
  v.check(worst_mass <= 1e-6, "worst mass drift over all runs " + g3(worst_mass) + " <= 1e-6");
  v.check(worst_energy <= 1e-4, "worst energy drift over all runs " + g3(worst_energy) + " <= 1e-4");
}

void c9(Verdict& v) {
  const auto t0 = Clock::now();
  {
    const auto g = make_grid(512, 8.0);
    const Propagator p(g, KernelSpec::newton());
    std::vector<double> ts;
    std::vector<RadialField> fs;
    for (int i = 0; i <= 200; ++i) {
      ts.push_back(-std::pow(10.0, -2.0 * i / 200.0));
      fs.push_back(exact_S(ts.back(), g, q_ref(), SConvention::forward));
    }
    const TrajectoryLog log = log_from_samples(p, ts, fs);
    const auto w = resolved_window(log);
    const BlowupFit f = blowup_rate_fit(log, w.first, w.second);
    v.check(std::abs(f.exponent + 1) <= 0.05 && f.max_proxy < 0.5,
            "(a) exact S, exponent " + g3(f.exponent) + " on [" + g3(w.first) + ", " + g3(w.second) +
                "], proxy max " + g3(f.max_proxy));
  }
  {
    const auto g = make_grid(512, 20.0);
    const Propagator p(g, KernelSpec::newton());
    const double ds = 0.01;
    const StrangSoliton ss = strang_soliton(p, find_ground_state_shooting(Scheme(g)).profile.real(), ds);
    const RadialField v0(g, CVec(ss.profile * std::exp(cplx(0, 2.0))));
    EvolveOptions o;
    o.monitor_every = 0.5;
    const TrajectoryLog log = evolve_pseudo_conformal(p, v0, 2.0, 250.0, ds, o);
    const auto w = resolved_window(log);
    const BlowupFit f = blowup_rate_fit(log, w.first, w.second);
    v.check(std::abs(f.exponent + 1) <= 0.05 && f.max_proxy < 0.5,
            "(b) run seeded at S(-0.5), exponent " + g3(f.exponent) + " on [" + g3(w.first) + ", " + g3(w.second) +
                "], proxy max " + g3(f.max_proxy) + ", mass drift " + g3(log.max_mass_drift));
  }
  const double secs = since(t0);
  v.check(secs < 600, "runtime at n=512 " + g3(secs) + " s < 600 s");
}

void c10(Verdict& v) {
  const RadialField psi0 = poly_profile(make_grid(1200, 12.0), 6);
  BwConfig cfg;
  cfg.N = 6;
  cfg.monitor_every = 5.0;
  BwGrid grid = cfg.grid;
  grid.r_max = bw_auto_radius(psi0, 200.0, grid);
  const BwReference ref = make_bw_reference(grid, cfg.ds);
  const BwRun run = bw_simulate(psi0, 1e-2, 20.0, 200.0, cfg, &ref);
  v.check(!run.tube_exit, "alpha = 1e-2 run stayed in the tube to s = " + g3(run.records.back().s) +
                              " (n = " + std::to_string(run.grid_points) + ")");
  const BwTrend t = bw_trend(run.records);
  auto series = [&](const char* name, const SeriesFit& f) {
    v.check(std::abs(f.slope) <= 0.3, std::string(name) + " slope " + g3(f.slope) + ", max " + g3(f.bound));
  };
  series("|gamma| s", t.gamma);
  series("|eps|_H1 s^3", t.eps);
  series("|lambda - 1| s^3", t.lambda);
  v.notes.push_back("[.] reported only: |y eps| s^2 slope " + g3(t.weighted.slope) + ", max " + g3(t.weighted.bound));
  const BwRun ctl = bw_simulate(psi0, 0.0, 20.0, 200.0, cfg, &ref);
  double worst = 0;
  for (const ModulationRecord& r : ctl.records)
    worst = std::max({worst, std::abs(r.gamma), std::abs(r.lambda - 1), r.eps_h1});
  v.check(!ctl.tube_exit && worst <= 1e-6, "alpha = 0 control, max of |gamma|, |lambda-1|, |eps| = " + g3(worst) +
                                               " <= 1e-6");
}

void c11(Verdict& v) {
  const auto g = make_grid(1200, 12.0);
  const int N = 3;
  const RadialField psi = sample(g, [&](double r) { return 1e-2 * std::pow(r, 2 * N) * std::exp(-r * r); });
  const FlatnessResult a = flatness_bound(z_psi_evolve(psi, 0.1, KernelSpec::newton(), N), N);
  const FlatnessResult b = flatness_bound(z_psi_evolve(psi, 0.05, KernelSpec::newton(), N), N);
  v.check(a.pass && b.pass, "bound holds on the probe lattice for delta0 = 0.1 and 0.05");
  const double ratio = a.C / b.C;
  v.check(std::abs(ratio - 1) <= 0.1, "C = " + g3(a.C) + " vs " + g3(b.C) + " under delta0 halving (ratio " +
                                          g3(ratio) + ", within 10%)");
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria = {
      {"Newton equivalence", c1},
      {"ground-state cross-validation", c2},
      {"sharp-constant identity", c3},
      {"nondegeneracy", c4},
      {"Jordan structure", c5},
      {"positivity of the root coefficients", c6},
      {"Q^(t) family", c7},
      {"dynamics regression", c8},
      {"blowup rate", c9},
      {"modulation trends", c10},
      {"z_psi flatness", c11},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    std::printf("criterion %zu: %s  %s (%.1f s)\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first, since(t0));
    for (const auto& n : v.notes) std::printf("    %s\n", n.c_str());
    failed += !v.pass;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
