#include "hartree/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hartree/io.hpp"

namespace hartree {

namespace {

constexpr cplx I{0.0, 1.0};

double rel_mass_drift(double m, double m0) { return m0 > 0 ? std::abs(m - m0) / m0 : std::abs(m); }

double rel_energy_drift(double e, double e0, double grad_sq) {
  const double den = std::max(std::abs(e0), 1e-3 * grad_sq);
  return den > 0 ? std::abs(e - e0) / den : 0.0;
}

struct Line {
  double slope, intercept;
};

Line fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i];
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double b = sxx > 0 ? sxy / sxx : 0.0;
  return {b, my - b * mx};
}

}  // namespace

Propagator::Propagator(GridPtr grid, KernelSpec spec, const KernelOptions& kopt)
    : sch_(std::move(grid), SchemeKind::fv2), spec_(std::move(spec)) {
  if (!spec_.is_newton_limit()) dense_ = kernel_operator(sch_, spec_, kopt);
  K_ = fv2_stiffness(sch_.grid());
  const Vec& f = sch_.grid().faces;
  for (int i = 0; i + 1 < f.size(); ++i) dr_max_ = std::max(dr_max_, f[i + 1] - f[i]);
}

Vec Propagator::potential(const Vec& rho) const {
  if (dense_.size() > 0) return dense_ * rho;  // coupling already inside
  return spec_.coupling * sch_.potential(rho);
}

const Propagator::Factor& Propagator::factor(double dt) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = factors_.find(dt);
  if (it != factors_.end()) return it->second;
  if (factors_.size() > 16) factors_.clear();
  const Vec& w = sch_.weights();
  const int n = sch_.size();
  Factor f{CVec(n), CVec(std::max(n - 1, 0))};
  const cplx c = -I * (0.5 * dt);
  cplx prev_upper = 0.0;
  for (int i = 0; i < n; ++i) {
    cplx m = w[i] + c * K_.diag[i];
    if (i > 0) m -= c * K_.off[i - 1] * prev_upper;
    if (std::abs(m) == 0.0) throw NumericalError("Crank-Nicolson: singular tridiagonal pivot");
    f.inv_diag[i] = 1.0 / m;
    if (i + 1 < n) prev_upper = f.upper[i] = c * K_.off[i] * f.inv_diag[i];
  }
  return factors_.emplace(dt, std::move(f)).first->second;
}

void Propagator::linear_step(CVec& u, double dt) const {
  const int n = sch_.size();
  if (u.size() != n) throw ConfigError("linear_step: field size does not match the grid");
  const Factor& f = factor(dt);
  const Vec& w = sch_.weights();
  const cplx c = I * (0.5 * dt);
  CVec rhs(n);
  for (int i = 0; i < n; ++i) {
    cplx ku = K_.diag[i] * u[i];
    if (i > 0) ku += K_.off[i - 1] * u[i - 1];
    if (i + 1 < n) ku += K_.off[i] * u[i + 1];
    rhs[i] = w[i] * u[i] + c * ku;
  }
  // sub-diagonal of the system matrix is -c K_off
  for (int i = 0; i < n; ++i) {
    if (i > 0) rhs[i] -= -c * K_.off[i - 1] * rhs[i - 1];
    rhs[i] *= f.inv_diag[i];
  }
  for (int i = n - 2; i >= 0; --i) rhs[i] -= f.upper[i] * rhs[i + 1];
  u = std::move(rhs);
}

void Propagator::step(CVec& u, double dt) const {
  linear_step(u, 0.5 * dt);
  const Vec v = potential(u.cwiseAbs2());
  for (int i = 0; i < u.size(); ++i) u[i] *= std::exp(I * (dt * v[i]));
  linear_step(u, 0.5 * dt);
}

double Propagator::energy(const CVec& u) const {
  const Vec rho = u.cwiseAbs2();
  return 0.5 * sch_.grad_norm_sq(u) - 0.25 * sch_.inner(potential(rho), rho);
}

double Propagator::variance(const CVec& u) const {
  return sch_.weights().dot((sch_.nodes().array().square() * u.cwiseAbs2().array()).matrix());
}

double Propagator::resolution_proxy(const CVec& u) const {
  const double m = sch_.norm(u);
  return m > 0 ? dr_max_ * grad_norm(u) / m : 0.0;
}

EvolutionState make_state(const Propagator& p, RadialField u, double t, double dt) {
  if (!u.grid || u.grid->hash() != p.grid()->hash()) throw ConfigError("make_state: field lives on another grid");
  EvolutionState s;
  s.mass0 = p.mass(u.values);
  s.energy0 = p.energy(u.values);
  s.u = std::move(u);
  s.t = t;
  s.dt = dt;
  return s;
}

EvolutionState step(const Propagator& p, const EvolutionState& s, double mass_gate, double energy_gate) {
  EvolutionState out = s;
  p.step(out.u.values, s.dt);
  out.t = s.t + s.dt;
  const double md = rel_mass_drift(p.mass(out.u.values), s.mass0);
  const double ed = rel_energy_drift(p.energy(out.u.values), s.energy0, p.scheme().grad_norm_sq(out.u.values));
  if (!(md <= mass_gate) || !(ed <= energy_gate)) {
    std::ostringstream os;
    os << "conservation gate at t=" << fmt_double(out.t) << ": mass drift " << md << ", energy drift " << ed;
    throw NumericalError(os.str());
  }
  return out;
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::completed: return "completed";
    case StopReason::ceiling: return "gradient ceiling";
    case StopReason::resolution: return "resolution proxy";
    case StopReason::gate: return "conservation gate";
  }
  return "?";
}

TrajectoryLog evolve(const Propagator& p, const RadialField& u0, double t0, double t1, double dt,
                     const EvolveOptions& opt) {
  if (!(dt > 0) || !std::isfinite(t0) || !std::isfinite(t1)) throw ConfigError("evolve: dt must be positive, times finite");
  if (std::abs(t1 - t0) / dt > 1e7) throw ConfigError("evolve: more than 1e7 steps requested");
  if (!u0.grid || u0.grid->hash() != p.grid()->hash()) throw ConfigError("evolve: field lives on another grid");
  if (opt.monitor_every < 0) throw ConfigError("evolve: negative monitor interval");

  TrajectoryLog log;
  CVec u = u0.values;
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  log.mass0 = p.mass(u);
  log.energy0 = p.energy(u);
  const double g0 = p.grad_norm(u);

  int sample_index = 0;
  auto record = [&](double t) {
    LogEntry e;
    e.t = t;
    e.mass = p.mass(u);
    e.energy = p.energy(u);
    e.variance = p.variance(u);
    e.grad_norm = p.grad_norm(u);
    e.proxy = p.resolution_proxy(u);
    const double md = rel_mass_drift(e.mass, log.mass0);
    const double ed = rel_energy_drift(e.energy, log.energy0, e.grad_norm * e.grad_norm);
    log.max_mass_drift = std::max(log.max_mass_drift, md);
    log.max_energy_drift = std::max(log.max_energy_drift, ed);
    if (opt.snapshot_every > 0 && sample_index % opt.snapshot_every == 0) {
      e.snapshot = static_cast<int>(log.snapshots.size());
      log.snapshots.emplace_back(u0.grid, u);
    }
    ++sample_index;
    log.entries.push_back(e);
    if (!(md <= opt.mass_gate) || !(ed <= opt.energy_gate)) {
      std::ostringstream os;
      os << "conservation gate at t=" << fmt_double(t) << ": mass drift " << md << ", energy drift " << ed;
      log.stop = StopReason::gate;
      log.message = os.str();
      if (opt.throw_on_gate) throw NumericalError(log.message);
      return false;
    }
    return true;
  };

  double t = t0;
  bool alive = record(t);
  const double span = std::abs(t1 - t0);
  long long next_k = 1;
  auto next_target = [&]() {
    if (opt.monitor_every <= 0) return t1;
    const double tm = t0 + dir * static_cast<double>(next_k) * opt.monitor_every;
    return dir * (tm - t1) >= 0 ? t1 : tm;
  };
  double dt_cur = dt;
  const double snap = 1e-9 * std::min(dt, opt.monitor_every > 0 ? opt.monitor_every : dt);

  while (alive && dir * (t1 - t) > snap && span > 0) {
    const double target = next_target();
    double h = std::min(dt_cur, std::abs(target - t));
    const bool lands = std::abs(std::abs(target - t) - h) <= snap || h == std::abs(target - t);
    if (++log.steps > opt.max_steps) throw NumericalError("evolve: step-count overflow");
    if (opt.adaptive_tol > 0) {
      CVec one = u, two = u;
      p.step(one, dir * h);
      p.step(two, 0.5 * dir * h);
      p.step(two, 0.5 * dir * h);
      const double err = p.scheme().norm(CVec(one - two)) / std::max(p.scheme().norm(two), 1e-300);
      if (err > opt.adaptive_tol) {
        ++log.rejected;
        dt_cur = 0.5 * h;
        if (dt_cur < opt.min_dt) throw NumericalError("evolve: adaptive step fell below min_dt at t=" + fmt_double(t));
        continue;
      }
      u = std::move(two);
      if (err < opt.adaptive_tol / 16 && dt_cur < dt) dt_cur = std::min(dt, 2 * dt_cur);
    } else {
      p.step(u, dir * h);
    }
    t = lands ? target : t + dir * h;

    // the final sample sits on the monitor clock only when the interval divides the span
    if (opt.monitor_every > 0 && lands && target != t1) ++next_k;
    if (opt.monitor_every <= 0 || lands) alive = record(t);
    if (alive && opt.blowup_stops) {
      const double g = p.grad_norm(u);
      if (g0 > 0 && g > opt.grad_ceiling * g0) {
        log.stop = StopReason::ceiling;
        break;
      }
      if (p.resolution_proxy(u) > opt.proxy_limit) {
        log.stop = StopReason::resolution;
        break;
      }
    }
  }
  log.final_state = RadialField(u0.grid, u);
  log.t_final = t;
  return log;
}

TrajectoryLog evolve(const RadialField& u0, double t0, double t1, double dt, const KernelSpec& spec,
                     const EvolveOptions& opt) {
  if (!u0.grid) throw ConfigError("evolve: field without grid");
  const Propagator p(u0.grid, spec);
  return evolve(p, u0, t0, t1, dt, opt);
}

void write_log_csv(const std::string& path, const TrajectoryLog& log) {
  CsvWriter w(path, {"t", "mass", "energy", "variance", "grad_norm"},
              {"stop=" + to_string(log.stop), "steps=" + std::to_string(log.steps)});
  for (const LogEntry& e : log.entries) w.row({e.t, e.mass, e.energy, e.variance, e.grad_norm});
}

TrajectoryLog log_from_samples(const Propagator& p, const std::vector<double>& t,
                               const std::vector<RadialField>& fields) {
  if (t.size() != fields.size()) throw ConfigError("log_from_samples: size mismatch");
  TrajectoryLog log;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0 && !(t[i] > t[i - 1])) throw ConfigError("log_from_samples: times must increase");
    const CVec& u = fields[i].values;
    LogEntry e{t[i], p.mass(u), p.energy(u), p.variance(u), p.grad_norm(u), p.resolution_proxy(u), -1};
    log.entries.push_back(e);
  }
  if (!log.entries.empty()) {
    log.mass0 = log.entries.front().mass;
    log.energy0 = log.entries.front().energy;
    log.t_final = t.back();
    log.final_state = fields.back();
  }
  return log;
}

RadialField exact_S(double t, const GridPtr& grid, const RadialField& q, SConvention conv) {
  if (!(t < 0)) throw ConfigError("exact_S: needs t < 0");
  const Vec& r = grid->nodes;
  const Vec amp = interpolate(*q.grid, Vec(q.values.real()), Vec(r / std::abs(t)));
  CVec v(r.size());
  for (int i = 0; i < r.size(); ++i) {
    const double phase = 1.0 / t - r[i] * r[i] / (4.0 * t);
    v[i] = amp[i] / (t * t) * std::exp(I * (conv == SConvention::forward ? -phase : phase));
  }
  return RadialField(grid, std::move(v));
}

RadialField exact_S(double t, const GridPtr& grid, const GroundState& q, SConvention conv) {
  return exact_S(t, grid, q.profile, conv);
}

RadialField pseudo_conformal(const RadialField& f, double t, PcDirection dir) {
  if (t == 0 || !std::isfinite(t)) throw ConfigError("pseudo_conformal: t must be nonzero");
  const RadialGrid& g = *f.grid;
  const Vec& r = g.nodes;
  const double a = std::abs(t);
  CVec out(r.size());
  if (dir == PcDirection::forward) {
    const CVec v = interpolate(g, f.values, Vec(r / a));
    for (int i = 0; i < r.size(); ++i) out[i] = v[i] * std::exp(I * (r[i] * r[i] / (4 * t))) / (t * t);
  } else {
    const CVec u = interpolate(g, f.values, Vec(r * a));
    for (int i = 0; i < r.size(); ++i) out[i] = u[i] * std::exp(-I * (t * r[i] * r[i] / 4)) * (t * t);
  }
  return RadialField(f.grid, std::move(out));
}

VirialCheck virial_check(const TrajectoryLog& log) {
  const auto& e = log.entries;
  if (e.size() < 5) throw ConfigError("virial_check: needs at least 5 samples");
  const double h = e[1].t - e[0].t;
  for (std::size_t i = 1; i < e.size(); ++i)
    if (std::abs((e[i].t - e[i - 1].t) - h) > 1e-6 * std::abs(h)) throw ConfigError("virial_check: nonuniform sampling");
  VirialCheck v;
  const double target = 16.0 * log.energy0;
  v.scale = std::max(std::abs(target), 16e-3 * e[0].grad_norm * e[0].grad_norm);
  v.concave = true;
  for (std::size_t i = 1; i + 1 < e.size(); ++i) {
    const double d2 = (e[i + 1].variance - 2 * e[i].variance + e[i - 1].variance) / (h * h);
    v.t.push_back(e[i].t);
    v.second_diff.push_back(d2);
    v.max_abs = std::max(v.max_abs, std::abs(d2 - target));
    if (!(d2 < 0)) v.concave = false;
  }
  v.deviation = v.scale > 0 ? v.max_abs / v.scale : v.max_abs;
  return v;
}

BlowupFit blowup_rate_fit(const TrajectoryLog& log, double t_a, double t_b, double t_star) {
  if (log.entries.empty()) throw ConfigError("blowup_rate_fit: empty log");
  const double lo = std::min(t_a, t_b), hi = std::max(t_a, t_b);
  const double first = log.entries.front().t, last = log.entries.back().t;
  const double slack = 1e-9 * std::max(1.0, std::abs(hi - lo));
  if (lo < std::min(first, last) - slack || hi > std::max(first, last) + slack)
    throw ConfigError("blowup_rate_fit: window outside the log");
  BlowupFit f;
  f.t_a = lo;
  f.t_b = hi;
  std::vector<double> x, y;
  double prev = -kInf;
  for (const LogEntry& e : log.entries) {
    if (e.t < lo - slack || e.t > hi + slack) continue;
    const double d = std::abs(e.t - t_star);
    if (!(d > 0) || !(e.grad_norm > 0)) continue;
    if (!(e.grad_norm > prev)) f.monotone = false;
    prev = e.grad_norm;
    x.push_back(std::log(d));
    y.push_back(std::log(e.grad_norm));
    f.max_proxy = std::max(f.max_proxy, e.proxy);
  }
  f.used = static_cast<int>(x.size());
  if (f.used < 3) throw ConfigError("blowup_rate_fit: fewer than 3 samples in the window");
  const Line l = fit_line(x, y);
  f.exponent = l.slope;
  f.constant = std::exp(l.intercept);
  return f;
}

std::pair<double, double> resolved_window(const TrajectoryLog& log, double limit, double ratio, double t_star) {
  const auto& e = log.entries;
  int last = -1;
  for (int i = 0; i < static_cast<int>(e.size()); ++i) {
    if (e[i].proxy < limit && e[i].t < t_star) last = i;
    else break;
  }
  if (last < 2) throw NumericalError("resolved_window: no resolved samples before t_star");
  const double tb = e[last].t;
  const double ta = std::max(e.front().t, t_star - ratio * (t_star - tb));
  return {ta, tb};
}

StrangSoliton strang_soliton(const Propagator& p, const Vec& q0, double dt, double omega, int max_iter) {
  const int n = p.scheme().size();
  if (q0.size() != n || !(dt > 0)) throw ConfigError("strang_soliton: bad profile or step");
  const Vec& w = p.scheme().weights();
  const cplx rot = std::exp(-I * (omega * dt));
  auto G = [&](const Vec& x) {
    CVec u(n);
    for (int i = 0; i < n; ++i) u[i] = cplx(x[i], x[n + i]);
    CVec v = u;
    p.step(v, dt);
    v = v * rot - u;
    Vec g(2 * n + 1);
    g.head(n) = v.real();
    g.segment(n, n) = v.imag();
    g[2 * n] = w.dot(q0.cwiseProduct(x.tail(n)));
    return g;
  };
  Vec x = Vec::Zero(2 * n);
  x.head(n) = q0;
  StrangSoliton out;
  const double scale = q0.norm();
  double prev = kInf;
  for (int it = 0; it <= max_iter; ++it) {
    const Vec g = G(x);
    const double res = g.head(2 * n).norm() / scale;
    out.residual = res;
    out.iterations = it;
    if (res < 1e-15 || res > 0.5 * prev || it == max_iter) break;
    prev = res;
    Mat J(2 * n + 1, 2 * n);
    const double eps = 1e-7 * scale / std::sqrt(static_cast<double>(n));
    for (int j = 0; j < 2 * n; ++j) {
      Vec xp = x;
      xp[j] += eps;
      J.col(j) = (G(xp) - g) / eps;
    }
    x -= J.colPivHouseholderQr().solve(g);
  }
  out.profile = CVec(n);
  for (int i = 0; i < n; ++i) out.profile[i] = cplx(x[i], x[n + i]);
  out.omega = omega;
  return out;
}

TrajectoryLog to_physical_frame(const Propagator& p, const TrajectoryLog& vlog) {
  if (!p.spec().is_newton_limit() || p.spec().kind != KernelKind::newton)
    throw ConfigError("to_physical_frame: the pseudo-conformal map is a symmetry of the Newton kernel only");
  const Vec& y = p.scheme().nodes();
  const Vec& f = p.scheme().grid().faces;
  double h = 0.0;
  for (int i = 0; i + 1 < f.size(); ++i) h = std::max(h, f[i + 1] - f[i]);
  TrajectoryLog out;
  for (const LogEntry& e : vlog.entries) {
    if (e.snapshot < 0) throw ConfigError("to_physical_frame: every entry needs a snapshot");
    if (!(e.t > 0)) throw ConfigError("to_physical_frame: s must be positive");
    const CVec& v = vlog.snapshots[e.snapshot].values;
    const double t = -1.0 / e.t;
    CVec wv(v.size());
    for (int i = 0; i < v.size(); ++i) wv[i] = v[i] * std::exp(I * (t * y[i] * y[i] / 4));
    const double gw = p.scheme().grad_norm_sq(wv);
    const Vec rho = v.cwiseAbs2();
    LogEntry u;
    u.t = t;
    u.mass = e.mass;
    u.grad_norm = std::sqrt(gw) / std::abs(t);
    u.energy = (0.5 * gw - 0.25 * p.scheme().inner(p.potential(rho), rho)) / (t * t);
    u.variance = t * t * e.variance;
    const double m = std::sqrt(e.mass);
    u.proxy = m > 0 ? h * std::sqrt(gw) / m : 0.0;
    u.snapshot = e.snapshot;
    out.entries.push_back(u);
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const LogEntry& a, const LogEntry& b) { return a.t < b.t; });
  out.snapshots = vlog.snapshots;
  if (!out.entries.empty()) {
    out.mass0 = out.entries.front().mass;
    out.energy0 = out.entries.front().energy;
    out.t_final = out.entries.back().t;
  }
  out.max_mass_drift = vlog.max_mass_drift;
  out.max_energy_drift = vlog.max_energy_drift;
  out.steps = vlog.steps;
  out.rejected = vlog.rejected;
  out.stop = vlog.stop;
  out.message = vlog.message;
  out.final_state = vlog.final_state;  // still in the v frame
  return out;
}

TrajectoryLog evolve_pseudo_conformal(const Propagator& p, const RadialField& v0, double s0, double s1, double ds,
                                      EvolveOptions opt) {
  if (!(s0 > 0) || !(s1 > s0)) throw ConfigError("evolve_pseudo_conformal: needs 0 < s0 < s1");
  opt.snapshot_every = 1;
  opt.blowup_stops = false;
  return to_physical_frame(p, evolve(p, v0, s0, s1, ds, opt));
}

double origin_slope(const RadialField& psi, double r_probe) {
  std::vector<double> x, y;
  const Vec& r = psi.grid->nodes;
  for (int i = 0; i < r.size() && r[i] <= r_probe; ++i) {
    const double a = std::abs(psi.values[i]);
    if (a > 0) {
      x.push_back(std::log(r[i]));
      y.push_back(std::log(a));
    }
  }
  if (x.empty() && psi.values.cwiseAbs().maxCoeff() == 0.0) return kInf;
  if (x.size() < 2) throw ConfigError("origin_slope: fewer than two nonzero samples near the origin");
  return fit_line(x, y).slope;
}

TrajectoryLog z_psi_evolve(const RadialField& psi, double delta0, const KernelSpec& spec, int N, const ZOptions& opt) {
  if (!(delta0 > 0) || N < 0 || opt.samples < 1) throw ConfigError("z_psi_evolve: needs delta0 > 0, N >= 0");
  const double slope = origin_slope(psi, opt.r_probe);
  if (slope < 2.0 * N - 0.5)
    throw ConfigError("z_psi_evolve: psi is not flat enough at the origin (slope " + fmt_double(slope) + ")");
  const Propagator p(psi.grid, spec);
  EvolveOptions eo;
  eo.monitor_every = delta0 / opt.samples;
  eo.snapshot_every = 1;
  const TrajectoryLog fw = evolve(p, psi, 0.0, delta0, opt.dt, eo);
  const TrajectoryLog bw = evolve(p, psi, 0.0, -delta0, opt.dt, eo);

  TrajectoryLog out;
  auto take = [&](const TrajectoryLog& l, const LogEntry& e) {
    LogEntry c = e;
    c.snapshot = static_cast<int>(out.snapshots.size());
    out.snapshots.push_back(l.snapshots[e.snapshot]);
    out.entries.push_back(c);
  };
  for (auto it = bw.entries.rbegin(); it != bw.entries.rend(); ++it)
    if (it->t < 0) take(bw, *it);
  for (const LogEntry& e : fw.entries) take(fw, e);
  out.mass0 = fw.mass0;
  out.energy0 = fw.energy0;
  out.max_mass_drift = std::max(fw.max_mass_drift, bw.max_mass_drift);
  out.max_energy_drift = std::max(fw.max_energy_drift, bw.max_energy_drift);
  out.steps = fw.steps + bw.steps;
  out.final_state = fw.final_state;
  out.t_final = fw.t_final;
  return out;
}

FlatnessResult flatness_bound(const TrajectoryLog& log, int N, double x_lo, double x_hi, int nx) {
  if (N < 0 || !(x_lo > 0) || !(x_hi > x_lo) || nx < 2) throw ConfigError("flatness_bound: bad probe lattice");
  FlatnessResult res;
  double c_inner = 0.0, c_outer = 0.0;
  double t_max = 0.0;
  for (const LogEntry& e : log.entries) t_max = std::max(t_max, std::abs(e.t));
  const double x_mid = std::sqrt(x_lo * x_hi);
  for (const LogEntry& e : log.entries) {
    if (e.snapshot < 0) continue;
    const RadialField& z = log.snapshots[e.snapshot];
    const double at = std::abs(e.t);
    for (int k = 0; k < nx; ++k) {
      const double x = x_lo * std::pow(x_hi / x_lo, static_cast<double>(k) / (nx - 1));
      double bound = 0.0;
      for (int l = 0; l <= N; ++l) bound += std::pow(at, l) * std::pow(x, 2 * (N - l));
      const double ratio = std::abs(interpolate_at(*z.grid, z.values, x)) / bound;
      ++res.probes;
      if (ratio > res.C) {
        res.C = ratio;
        res.worst_t = e.t;
        res.worst_x = x;
      }
      if (x <= x_mid && at <= 0.5 * t_max) c_inner = std::max(c_inner, ratio);
      else c_outer = std::max(c_outer, ratio);
    }
  }
  // a non-flat z makes the ratio climb toward the origin of the (t, x) lattice
  res.pass = std::isfinite(res.C) && c_inner <= 2.0 * c_outer;
  return res;
}

bool flatness_check(const TrajectoryLog& log, int N) { return flatness_bound(log, N).pass; }

}  // namespace hartree
