#include "hartree/modulation_bw.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "hartree/ground_state.hpp"
#include "hartree/io.hpp"

namespace hartree {

namespace {

const cplx I(0.0, 1.0);

double wrap_angle(double a) { return std::remainder(a, 2 * kPi); }

// (e^{ix} - 1) / x
cplx phi1(double x) {
  if (std::abs(x) < 1e-6) return cplx(-0.5 * x, 1.0 - x * x / 6);
  return (std::exp(I * x) - 1.0) / x;
}

}  // namespace

BwReference make_bw_reference(const BwGrid& g, double ds) {
  if (!(g.h0 > 0) || !(g.stretch >= 1.0) || !(g.r_core > 10 * g.h0) || !(g.r_max > g.r_core))
    throw ConfigError("bw grid: need h0 > 0, stretch >= 1 and h0 << r_core < r_max");
  BwReference ref;
  if (g.stretch == 1.0) {
    const int n = static_cast<int>(std::ceil(g.r_max / g.h0 - 1e-9));
    ref.grid = make_grid(n, n * g.h0);
    ref.m = static_cast<int>(std::ceil(g.r_core / g.h0 - 1e-9));
    ref.core = make_grid(ref.m, ref.m * g.h0);
  } else {
    const double q = g.stretch;
    const int n = static_cast<int>(std::ceil(std::log1p(g.r_max * (q - 1) / g.h0) / std::log(q)));
    ref.grid = make_grid(n, g.h0 * std::expm1(n * std::log(q)) / (q - 1), Spacing::stretched, q);
    const Vec& f = ref.grid->faces;
    ref.m = static_cast<int>(std::lower_bound(f.data(), f.data() + f.size(), g.r_core) - f.data());
    ref.core = make_grid(ref.m, f[ref.m], Spacing::stretched, q);
  }
  const Scheme cs(ref.core);
  ref.q = find_ground_state_shooting(cs).profile.real();
  ref.sys = std::make_shared<const LinearizedSystem>(assemble(cs, ref.q));
  ref.ds = ds;
  if (ds > 0) {
    const StrangSoliton ss = strang_soliton(Propagator(ref.core, KernelSpec::newton()), ref.q, ds);
    if (!(ss.residual < 1e-12))
      throw NumericalError("bw reference: Strang equilibrium residual " + fmt_double(ss.residual));
    ref.profile = ss.profile;
  } else {
    ref.profile = ref.q.cast<cplx>();
  }
  return ref;
}

CVec dilate(const BwReference& ref, double lambda) {
  if (!(lambda > 0)) throw ConfigError("dilate: lambda must be positive");
  const int n = ref.grid->n_points;
  CVec out = CVec::Zero(n);
  if (lambda == 1.0) {
    out.head(ref.m) = ref.profile;
    return out;
  }
  const Vec& y = ref.grid->nodes;
  int k = 0;
  while (k < n && lambda * y[k] < ref.core->r_max) ++k;
  out.head(k) = lambda * lambda * interpolate(*ref.core, ref.profile, Vec(lambda * y.head(k)));
  return out;
}

CVec reconstruct(const BwReference& ref, double s, double lambda, double gamma, const CVec& eps, const CVec* zeta) {
  CVec v = std::exp(I * (s + gamma)) * (dilate(ref, lambda) + eps);
  if (zeta) v += *zeta;
  return v;
}

Decomposition decompose(const RadialField& v, double s, const BwReference& ref, const CVec* zeta,
                        const DecomposeOptions& opt) {
  const int n = ref.grid->n_points, m = ref.m;
  if (v.size() != n) throw ConfigError("decompose: field is not on the reference grid");
  if (zeta && zeta->size() != n) throw ConfigError("decompose: radiation term has the wrong size");
  const CVec w = zeta ? CVec(v.values - *zeta) : v.values;
  const Vec& wt = ref.core->weights;
  const Vec& x2q = ref.sys->x2Q;
  const Vec& rho = ref.sys->rho;

  double lam = opt.lambda0, gam = opt.gamma0;
  ModulationRecord rec;
  rec.s = s;
  auto fail = [&](const std::string& why) {
    rec.lambda = lam;
    rec.gamma = wrap_angle(gam);
    throw TubeExit("decompose at s=" + fmt_double(s) + ": " + why + " (lambda=" + fmt_double(lam) +
                       ", gamma=" + fmt_double(gam) + ")",
                   rec);
  };
  CVec eps;
  bool done = false;
  double prev = kInf;
  for (int it = 0; it < opt.max_iter; ++it) {
    rec.iterations = it + 1;
    const cplx e = std::exp(-I * (s + gam));
    const CVec ew = e * w.head(m);
    const CVec W = dilate(ref, lam).head(m);
    const CVec ec = ew - W;
    const double f1 = wt.dot(ec.real().cwiseProduct(x2q));
    const double f2 = wt.dot(ec.imag().cwiseProduct(rho));
    const double d = 1e-6 * lam;
    const CVec dW = (dilate(ref, lam + d).head(m) - dilate(ref, lam - d).head(m)) / (2 * d);
    Eigen::Matrix2d J;
    J(0, 0) = -wt.dot(dW.real().cwiseProduct(x2q));
    J(0, 1) = wt.dot(ew.imag().cwiseProduct(x2q));
    J(1, 0) = -wt.dot(dW.imag().cwiseProduct(rho));
    J(1, 1) = -wt.dot(ew.real().cwiseProduct(rho));
    const Eigen::Vector2d step = J.partialPivLu().solve(Eigen::Vector2d(f1, f2));
    if (!step.allFinite()) fail("singular modulation Jacobian");
    lam -= step[0];
    gam -= step[1];
    if (!(lam > 0.25 && lam < 4.0)) fail("scale left the tube");
    // converged, or stalled at the rounding level
    const double size = std::abs(step[0]) / lam + std::abs(step[1]);
    if (size < 1e-14 || (size < 1e-10 && size > 0.5 * prev)) {
      done = true;
      break;
    }
    prev = size;
  }
  if (!done) fail("Newton did not converge");
  const CVec Wl = dilate(ref, lam);
  eps = std::exp(-I * (s + gam)) * w - Wl;
  const Scheme sch(ref.grid);
  const double wn = sch.norm(Wl);
  if (!(sch.norm(eps) <= opt.tube * wn)) fail("remainder exceeds the tube");

  rec.lambda = lam;
  rec.gamma = wrap_angle(gam);
  rec.eps_h1 = std::sqrt(sch.norm(eps) * sch.norm(eps) + sch.grad_norm_sq(eps));
  rec.eps_weighted = std::sqrt(sch.weights().dot((ref.grid->nodes.array().square() * eps.cwiseAbs2().array()).matrix()));
  rec.b = root_coefficients(*ref.sys, pair_vector(eps.head(m))).b;
  const CVec back = reconstruct(ref, s, lam, gam, eps, zeta);
  rec.residual = sch.norm(CVec(back - v.values)) / sch.norm(v.values);
  return {rec, eps, gam};
}

CVec ZFrame::at(double t) const {
  if (z.empty()) throw ConfigError("z frame is empty");
  if (t > 1e-14 || t < t_min() - 1e-12 * dt) throw ConfigError("z frame: t=" + fmt_double(t) + " outside the run");
  const int K = static_cast<int>(z.size()) - 1;
  if (K < 3) return z[std::clamp(static_cast<int>(std::lround(-t / dt)), 0, K)];
  const double x = -t / dt;
  const int j = std::clamp(static_cast<int>(std::floor(x)) - 1, 0, K - 3);
  // cubic Lagrange through z[j..j+3]
  CVec out = CVec::Zero(z[0].size());
  for (int a = 0; a < 4; ++a) {
    double l = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) l *= (x - (j + b)) / static_cast<double>(a - b);
    out += l * z[j + a];
  }
  return out;
}

ZFrame make_z_frame(const RadialField& psi, double t_min, double dt) {
  if (!(t_min < 0) || !(dt > 0)) throw ConfigError("z frame: need t_min < 0 and dt > 0");
  const int K = static_cast<int>(std::ceil(-t_min / dt - 1e-9)) + 1;
  const Propagator p(psi.grid, KernelSpec::newton());
  EvolveOptions o;
  o.monitor_every = dt;
  o.snapshot_every = 1;
  const TrajectoryLog log = evolve(p, psi, 0.0, -K * dt, dt, o);
  ZFrame zf{p.scheme(), dt, {}};
  for (const RadialField& f : log.snapshots) zf.z.push_back(f.values);
  if (static_cast<int>(zf.z.size()) != K + 1) throw NumericalError("z frame: snapshot count mismatch");
  return zf;
}

CVec zeta_field(const ZFrame& zf, double s, const GridPtr& g) {
  if (!(s > 0)) throw ConfigError("zeta: s must be positive");
  const CVec zt = zf.at(-1.0 / s);
  const Vec& y = g->nodes;
  CVec out = interpolate(zf.sch.grid(), zt, Vec(y / s));
  for (int i = 0; i < out.size(); ++i) {
    if (out[i] == cplx(0.0)) continue;
    out[i] *= std::exp(I * (y[i] * y[i] / (4 * s))) / (s * s);
  }
  return out;
}

double gamma1_rate(const ZFrame& zf, const RadialField& eps, double gamma, double s) {
  const CVec zt = zf.at(-1.0 / s);
  const double far = zf.sch.potential_at_origin(zt.cwiseAbs2()) / (s * s);
  const CVec zeta = zeta_field(zf, s, eps.grid);
  const Vec cross = 2.0 * (std::exp(I * (s + gamma)) * eps.values.array() * zeta.conjugate().array()).real().matrix();
  return far + Scheme(eps.grid).potential_at_origin(cross);
}

RadialField poly_profile(const GridPtr& g, int N) {
  if (N < 0) throw ConfigError("poly profile: N must be non-negative");
  const double peak = N == 0 ? 1.0 : std::pow(N, N) * std::exp(-static_cast<double>(N));
  return sample(g, [&](double r) { return cplx(std::pow(r, 2 * N) * std::exp(-r * r) / peak, 0.0); });
}

double bw_auto_radius(const RadialField& psi0, double s1, const BwGrid& g) {
  const double top = psi0.values.cwiseAbs().maxCoeff();
  double supp = 0.0;
  for (int i = 0; i < psi0.size(); ++i)
    if (std::abs(psi0.values[i]) > 1e-10 * top) supp = psi0.grid->nodes[i];
  return std::max(2 * g.r_core, 1.05 * supp * s1);
}

BwRun bw_simulate(const RadialField& psi0, double alpha, double s0, double s1, const BwConfig& cfg,
                  const BwReference* ref_in) {
  if (std::abs(alpha) > cfg.alpha0) throw ConfigError("bw: |alpha| exceeds alpha0 = " + fmt_double(cfg.alpha0));
  if (!(s0 > 0) || !(s1 > s0)) throw ConfigError("bw: need 0 < s0 < s1");
  if (!(cfg.ds > 0) || !(cfg.monitor_every >= cfg.ds)) throw ConfigError("bw: need 0 < ds <= monitor_every");
  const double slope = origin_slope(psi0);
  if (slope < 2.0 * cfg.N - 0.5)
    throw ConfigError("bw: psi is not flat enough at the origin (slope " + fmt_double(slope) + ")");

  BwReference own;
  if (!ref_in) {
    BwGrid g = cfg.grid;
    if (!(g.r_max > 0)) g.r_max = bw_auto_radius(psi0, s1, g);
    own = make_bw_reference(g, cfg.ds);
    ref_in = &own;
  }
  const BwReference& ref = *ref_in;
  if (std::abs(ref.ds - cfg.ds) > 1e-15) throw ConfigError("bw: reference built for a different step");

  const bool radiation = alpha != 0.0;
  std::optional<ZFrame> zf;
  if (radiation) zf = make_z_frame(RadialField(psi0.grid, CVec(alpha * psi0.values)), -1.0 / s0, cfg.z_dt);

  const Propagator p(ref.grid, KernelSpec::newton());
  const int n = ref.grid->n_points;
  CVec w = CVec::Zero(n);
  w.head(ref.m) = std::exp(I * s0) * ref.profile;

  BwRun run;
  run.grid_points = n;
  run.r_max = ref.grid->r_max;
  const long long steps = std::llround((s1 - s0) / cfg.ds);
  const long long every = std::max(1LL, std::llround(cfg.monitor_every / cfg.ds));
  double m0 = 0.0, lam = 1.0, gam = 0.0;

  auto monitor = [&](double s) {
    CVec zeta = radiation ? zeta_field(*zf, s, ref.grid) : CVec();
    const RadialField v(ref.grid, radiation ? CVec(w + zeta) : w);
    const double m = p.mass(v.values);
    if (run.records.empty()) m0 = m;
    run.max_mass_drift = std::max(run.max_mass_drift, std::abs(m - m0) / m0);
    DecomposeOptions o;
    o.lambda0 = lam;
    o.gamma0 = gam;
    o.tube = cfg.tube;
    Decomposition d = decompose(v, s, ref, radiation ? &zeta : nullptr, o);
    lam = d.record.lambda;
    gam = d.gamma_unwrapped;
    if (radiation) d.record.gamma1_dot = gamma1_rate(*zf, RadialField(ref.grid, d.eps), gam, s);
    run.records.push_back(d.record);
  };

  try {
    monitor(s0);
    for (long long k = 0; k < steps; ++k) {
      const double s = s0 + static_cast<double>(k) * cfg.ds;
      const double ds = cfg.ds;
      p.linear_step(w, 0.5 * ds);
      if (!radiation) {
        const Vec V = p.potential(w.cwiseAbs2());
        for (int i = 0; i < n; ++i) w[i] *= std::exp(I * (ds * V[i]));
      } else {
        // i w_s + Lap w + V(|w + zeta|^2) w + V(|w|^2 + 2 Re(conj(w) zeta)) zeta = 0,
        // potentials frozen at a half-step predictor, zeta at the midpoint
        const CVec zeta = zeta_field(*zf, s + 0.5 * ds, ref.grid);
        const Vec Vz = p.potential(zeta.cwiseAbs2());
        const CVec w0 = w;
        auto stage = [&](const CVec& at, double tau) {
          const Vec D = at.cwiseAbs2() + 2.0 * (at.conjugate().array() * zeta.array()).real().matrix();
          const Vec VD = p.potential(D);
          CVec out(n);
          for (int i = 0; i < n; ++i) {
            const double x = (VD[i] + Vz[i]) * tau;
            out[i] = std::exp(I * x) * w0[i] + VD[i] * zeta[i] * tau * phi1(x);
          }
          return out;
        };
        w = stage(stage(w0, 0.5 * ds), ds);
      }
      p.linear_step(w, 0.5 * ds);
      ++run.steps;
      if (!w.allFinite()) throw NumericalError("bw: non-finite field at s=" + fmt_double(s + ds));
      if ((k + 1) % every == 0 || k + 1 == steps) monitor(s0 + static_cast<double>(k + 1) * cfg.ds);
    }
  } catch (const TubeExit& e) {
    run.tube_exit = true;
    run.message = e.what();
  }
  return run;
}

BwTrend bw_trend(const std::vector<ModulationRecord>& records, double max_slope) {
  auto fit = [&](auto value) {
    SeriesFit f;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const ModulationRecord& r : records) {
      // the seed has no remainder by construction
      if (r.s <= records.front().s) continue;
      const double v = value(r);
      f.bound = std::max(f.bound, v);
      if (!(v > 0) || !std::isfinite(v)) continue;
      const double x = std::log(r.s), y = std::log(v);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++f.used;
    }
    if (f.used >= 3) f.slope = (f.used * sxy - sx * sy) / (f.used * sxx - sx * sx);
    return f;
  };
  BwTrend t;
  t.gamma = fit([](const ModulationRecord& r) { return std::abs(r.gamma) * r.s; });
  t.eps = fit([](const ModulationRecord& r) { return r.eps_h1 * std::pow(r.s, 3); });
  t.lambda = fit([](const ModulationRecord& r) { return std::abs(r.lambda - 1.0) * std::pow(r.s, 3); });
  t.weighted = fit([](const ModulationRecord& r) { return r.eps_weighted * r.s * r.s; });
  t.pass = t.gamma.used >= 3 && t.eps.used >= 3 && t.lambda.used >= 3 && std::abs(t.gamma.slope) <= max_slope &&
           std::abs(t.eps.slope) <= max_slope && std::abs(t.lambda.slope) <= max_slope;
  return t;
}

void write_records_csv(const std::string& path, const std::vector<ModulationRecord>& records) {
  CsvWriter w(path, {"s", "lambda", "gamma", "eps_h1", "eps_weighted", "b1", "b2", "b3", "b4"},
              {"b_i as moduli of the complex root coefficients"});
  for (const ModulationRecord& r : records)
    w.row({r.s, r.lambda, r.gamma, r.eps_h1, r.eps_weighted, std::abs(r.b[0]), std::abs(r.b[1]), std::abs(r.b[2]),
           std::abs(r.b[3])});
}

}  // namespace hartree
