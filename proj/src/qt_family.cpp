#include "hartree/qt_family.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

namespace hartree {

namespace {

Vec forcing(const QtOperator& op, const Vec& u) { return -(op.N * u.cwiseAbs2()).cwiseProduct(u); }

double h1(const Scheme& sch, const Vec& f) { return sch.h1_norm(f); }

}  // namespace

QtOperator make_qt_operator(const Scheme& sch, const KernelSpec& spec, const KernelOptions& opt) {
  return QtOperator{sch, spec, kernel_operator(sch, spec, opt), sch.helmholtz(1.0)};
}

Vec residual_G(const QtOperator& op, const Vec& u) {
  if (u.size() != op.sch.size()) throw ConfigError("residual_G: field does not match the grid");
  const Vec out = u + op.A.solve(forcing(op, u));
  if (!out.allFinite()) throw NumericalError("residual_G: Helmholtz solve produced non-finite values");
  return out;
}

double relative_G(const QtOperator& op, const Vec& u) {
  const double nu = op.sch.norm(u);
  if (nu == 0.0) return 0.0;
  return op.sch.norm(residual_G(op, u)) / nu;
}

QtSolve solve_Qt(const QtOperator& op, const Vec& init, const QtOptions& opt) {
  QtSolve out;
  out.profile = init;
  out.residual = relative_G(op, init);
  if (out.residual <= opt.tol && (!opt.polish || out.residual <= opt.polish_floor)) {
    out.converged = true;
    out.history.push_back(out.residual);
    return out;
  }
  // Newton on F = (-Lap + 1) G, which yields the same iterates as Newton on G
  Mat base = -op.sch.laplacian_matrix();
  base.diagonal().array() += 1.0;
  Vec u = init;
  double res = out.residual;
  for (int it = 0; it < opt.max_newton; ++it) {
    out.history.push_back(res);
    const Vec w = u.cwiseAbs2();
    const Vec F = base * u - (op.N * w).cwiseProduct(u);
    Mat J = base;
    J.diagonal() -= op.N * w;
    J -= 2.0 * u.asDiagonal() * op.N * u.asDiagonal();
    const Vec next = u - J.partialPivLu().solve(F);
    const double nr = relative_G(op, next);
    if (!std::isfinite(nr)) break;
    if (res <= opt.tol && !(nr < 0.5 * res)) {
      break;  // polished down to the floor
    }
    u = next;
    res = nr;
    ++out.steps;
    if (res <= opt.tol && !opt.polish) break;
  }
  out.history.push_back(res);
  out.profile = u;
  out.residual = res;
  out.converged = res <= opt.tol;
  return out;
}

double ProfileFamily::h1_distance(std::size_t i) const { return h1(sch, Vec(profiles.at(i) - q_inf)); }

ProfileFamily continuation_sweep(const Scheme& sch, const Vec& q_inf, double k, const Phi& phi,
                                 const std::vector<double>& t_list, const QtOptions& opt) {
  ProfileFamily fam(sch);
  fam.k = k;
  fam.phi_name = phi.name();
  fam.q_inf = q_inf;
  if (q_inf.size() != sch.size()) throw ConfigError("continuation_sweep: Q_inf does not match the grid");
  for (std::size_t i = 0; i < t_list.size(); ++i) {
    if (!(t_list[i] > 0)) throw ConfigError("continuation_sweep: times must be positive");
    if (i > 0 && !(t_list[i] < t_list[i - 1])) throw ConfigError("continuation_sweep: t_list must be strictly decreasing");
  }
  double tau = 0.0;
  Vec u = q_inf;
  std::vector<double> ts;
  std::vector<Vec> ps;
  std::vector<double> rs;
  std::vector<int> ns;
  for (double target_t : t_list) {
    const double target = std::isfinite(target_t) ? 1.0 / target_t : 0.0;
    double step = target - tau;
    for (;;) {
      const double trial = step >= target - tau ? target : tau + step;
      const KernelSpec spec = trial == 0.0 ? KernelSpec::newton() : KernelSpec::deformed(k, 1.0 / trial, phi);
      const QtOperator op = make_qt_operator(sch, spec, opt.kernel);
      QtSolve s = solve_Qt(op, u, opt);
      if (s.converged && s.profile.minCoeff() > -1e-12 * s.profile.maxCoeff()) {
        tau = trial;
        u = std::move(s.profile);
        if (tau == target) {
          ts.push_back(target_t);
          ps.push_back(u);
          rs.push_back(s.residual);
          ns.push_back(s.steps);
          break;
        }
        continue;
      }
      step *= 0.5;
      ++fam.halvings;
      if (step < opt.min_dtau)
        throw NumericalError("continuation stalled below the minimum tau step; last good t = " +
                             (tau > 0 ? std::to_string(1.0 / tau) : std::string("inf")));
    }
  }
  // stored in increasing t
  for (std::size_t i = ts.size(); i-- > 0;) {
    fam.t_samples.push_back(ts[i]);
    fam.profiles.push_back(ps[i]);
    fam.residuals.push_back(rs[i]);
    fam.newton_steps.push_back(ns[i]);
  }
  if (!ts.empty()) fam.T0 = ts.back();
  return fam;
}

DecayFit dt_decay_exponent(const ProfileFamily& f) {
  const std::size_t m = f.size();
  if (m < 4) throw ConfigError("dt_decay_exponent needs at least four samples");
  if (!(f.t_samples.back() >= 10.0 * f.t_samples.front()))
    throw ConfigError("dt_decay_exponent needs samples spanning a decade in t");
  DecayFit fit;
  const double scale = h1(f.sch, f.q_inf);
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const double dt = f.t_samples[i + 1] - f.t_samples[i - 1];
    const Vec diff = f.profiles[i + 1] - f.profiles[i - 1];
    // differences at the level of rounding carry no slope
    if (!(h1(f.sch, diff) > f.noise_floor * scale)) {
      ++fit.dropped;
      continue;
    }
    fit.t.push_back(f.t_samples[i]);
    fit.dt_norm.push_back(h1(f.sch, diff) / dt);
  }
  if (fit.t.size() < 3) {
    fit.degenerate = true;
    return fit;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double cnt = static_cast<double>(fit.t.size());
  for (std::size_t i = 0; i < fit.t.size(); ++i) {
    const double x = std::log(fit.t[i]), y = std::log(fit.dt_norm[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / cnt;
  return fit;
}

EnvelopeCheck uniform_decay_check(const Scheme& sch, const std::vector<Vec>& profiles, double spread) {
  EnvelopeCheck e;
  const Vec& r = sch.nodes();
  if (profiles.empty()) return e;
  struct Window {
    int lo, hi;
  };
  std::vector<Window> win;
  for (const Vec& q : profiles) {
    const double q0 = q.cwiseAbs().maxCoeff();
    // tail window: from 1e-2 down to 1e-10 of the peak, kept clear of r_max
    int lo = -1, hi = -1;
    for (int i = 0; i < q.size(); ++i) {
      if (r[i] > 0.8 * sch.grid().r_max) break;
      const double a = std::abs(q[i]) / q0;
      if (lo < 0 && a < 1e-2) lo = i;
      if (a >= 1e-10) hi = i;
    }
    if (lo < 0 || hi - lo < 8) {
      e.rates.push_back(0.0);
      win.push_back({0, 0});
      continue;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int i = lo; i <= hi; ++i) {
      const double y = std::log(std::max(std::abs(q[i]), 1e-300));
      sx += r[i];
      sy += y;
      sxx += r[i] * r[i];
      sxy += r[i] * y;
      ++cnt;
    }
    e.rates.push_back(-(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx));
    win.push_back({lo, hi});
  }
  const double rmin = *std::min_element(e.rates.begin(), e.rates.end());
  const double rmax = *std::max_element(e.rates.begin(), e.rates.end());
  if (!(rmin > 0)) return e;
  e.delta = 0.9 * rmin;
  for (std::size_t s = 0; s < profiles.size(); ++s)
    for (int i = 0; i <= win[s].hi; ++i) e.C = std::max(e.C, std::abs(profiles[s][i]) * std::exp(e.delta * r[i]));
  e.pass = rmin >= spread * rmax && std::isfinite(e.C);
  return e;
}

EnvelopeCheck uniform_decay_check(const ProfileFamily& f, double spread) {
  return uniform_decay_check(f.sch, f.profiles, spread);
}

}  // namespace hartree
