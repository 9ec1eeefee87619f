#include "hartree/ground_state.hpp"

#include <cmath>

#include <Eigen/LU>

namespace hartree {

std::string to_string(GsMethod m) {
  switch (m) {
    case GsMethod::shooting: return "shooting";
    case GsMethod::gradient_flow: return "gradient_flow";
    case GsMethod::petviashvili: return "petviashvili";
    case GsMethod::newton: return "newton";
  }
  return "?";
}

std::string to_string(ShotClass c) {
  switch (c) {
    case ShotClass::crosses_zero: return "crosses_zero";
    case ShotClass::diverges: return "diverges";
    case ShotClass::undetermined: return "undetermined";
  }
  return "?";
}

namespace {

constexpr double kShotStart = 0.01;

struct State {
  double u, v, m1, m3;
};

State rhs(double r, const State& y) {
  const double hartree = kS3 * (y.m1 - y.m3 / (r * r));
  return {y.v, -3.0 * y.v / r - y.u + hartree * y.u, r * y.u * y.u, r * r * r * y.u * y.u};
}

State axpy(const State& y, double a, const State& k) {
  return {y.u + a * k.u, y.v + a * k.v, y.m1 + a * k.m1, y.m3 + a * k.m3};
}

// series through r^4 at the origin
State series(double u0, double r) {
  const double d = (0.125 + 0.5 * kPi2 * u0 * u0) / 24.0;
  const double r2 = r * r;
  return {u0 * (1.0 - r2 / 8.0 + d * r2 * r2), u0 * (-r / 4.0 + 4.0 * d * r2 * r), 0.5 * u0 * u0 * r2,
          0.25 * u0 * u0 * r2 * r2};
}

double hermite(double r0, double r1, double u0, double u1, double d0, double d1, double r) {
  const double h = r1 - r0, t = (r - r0) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * u0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * u1 + (t3 - t2) * h * d1;
}

}  // namespace

Shot shoot(double u0, double r_max, double dr) {
  if (!(u0 > 0)) throw ConfigError("shoot needs u0 > 0");
  if (!(r_max > kShotStart) || !(dr > 0)) throw ConfigError("shoot: bad r_max or dr");
  Shot s;
  const int steps = static_cast<int>(std::ceil((r_max - kShotStart) / dr));
  std::vector<double> r, u, du;
  r.reserve(steps + 1);
  u.reserve(steps + 1);
  du.reserve(steps + 1);
  State y = series(u0, kShotStart);
  double x = kShotStart;
  r.push_back(x);
  u.push_back(y.u);
  du.push_back(y.v);
  const double ceiling = 1e3 * u0;
  for (int k = 0; k < steps; ++k) {
    const State k1 = rhs(x, y);
    const State k2 = rhs(x + 0.5 * dr, axpy(y, 0.5 * dr, k1));
    const State k3 = rhs(x + 0.5 * dr, axpy(y, 0.5 * dr, k2));
    const State k4 = rhs(x + dr, axpy(y, dr, k3));
    State next{y.u + dr / 6 * (k1.u + 2 * k2.u + 2 * k3.u + k4.u), y.v + dr / 6 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v),
               y.m1 + dr / 6 * (k1.m1 + 2 * k2.m1 + 2 * k3.m1 + k4.m1),
               y.m3 + dr / 6 * (k1.m3 + 2 * k2.m3 + 2 * k3.m3 + k4.m3)};
    const double xn = kShotStart + (k + 1) * dr;
    if (next.u < 0.0) {
      s.cls = ShotClass::crosses_zero;
      s.event_r = x + dr * y.u / (y.u - next.u);
      break;
    }
    if (next.u > ceiling || !std::isfinite(next.u)) {
      s.cls = ShotClass::diverges;
      s.event_r = xn;
      break;
    }
    y = next;
    x = xn;
    r.push_back(x);
    u.push_back(y.u);
    du.push_back(y.v);
  }
  if (s.cls == ShotClass::undetermined) s.event_r = x;
  s.r = Eigen::Map<Vec>(r.data(), static_cast<Eigen::Index>(r.size()));
  s.u = Eigen::Map<Vec>(u.data(), static_cast<Eigen::Index>(u.size()));
  s.du = Eigen::Map<Vec>(du.data(), static_cast<Eigen::Index>(du.size()));
  return s;
}

Vec sample_shot(const Shot& s, const Vec& r) {
  Vec out(r.size());
  const int m = static_cast<int>(s.r.size());
  const double r0 = s.r[0], dr = m > 1 ? s.r[1] - s.r[0] : 1.0;
  const double u0 = s.u[0] / (1.0 - r0 * r0 / 8.0);  // only used inside the series region
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double x = r[i];
    if (x <= r0) {
      out[i] = series(u0, x).u;
      continue;
    }
    const int k = static_cast<int>((x - r0) / dr);
    if (k >= m - 1) {
      out[i] = 0.0;
      continue;
    }
    out[i] = hermite(s.r[k], s.r[k + 1], s.u[k], s.u[k + 1], s.du[k], s.du[k + 1], x);
  }
  return out;
}

RadialField shot_field(const Shot& s, const GridPtr& grid) { return RadialField(grid, sample_shot(s, grid->nodes)); }

double center_value(const RadialGrid& g, const Vec& q) {
  const double x0 = g.nodes[0] * g.nodes[0], x1 = g.nodes[1] * g.nodes[1], x2 = g.nodes[2] * g.nodes[2];
  return q[0] * x1 * x2 / ((x0 - x1) * (x0 - x2)) + q[1] * x0 * x2 / ((x1 - x0) * (x1 - x2)) +
         q[2] * x0 * x1 / ((x2 - x0) * (x2 - x1));
}

Vec stationary_residual(const Scheme& sch, const Vec& q) {
  const Vec P = sch.potential(q.cwiseAbs2());
  return -sch.laplacian(q) + q - P.cwiseProduct(q);
}

double relative_residual(const Scheme& sch, const Vec& q) {
  return stationary_residual(sch, q).cwiseAbs().maxCoeff() / q.cwiseAbs().maxCoeff();
}

double hartree_term(const Scheme& sch, const CVec& u) {
  const Vec rho = u.cwiseAbs2();
  return sch.inner(sch.potential(rho), rho);
}

double energy(const Scheme& sch, const CVec& u, double coupling) {
  return 0.5 * sch.grad_norm_sq(u) - 0.25 * coupling * hartree_term(sch, u);
}

double weinstein_functional(const Scheme& sch, const CVec& f) {
  const double d = hartree_term(sch, f);
  if (!(d > 0)) throw ConfigError("weinstein_functional of the zero field");
  const double m = sch.norm(f);
  return sch.grad_norm_sq(f) * m * m / d;
}

double gwp_margin(const Scheme& sch, const CVec& u, const GroundState& q) {
  const double m = sch.norm(u);
  return energy(sch, u) - 0.5 * sch.grad_norm_sq(u) * (1.0 - m * m / q.mass);
}

GroundState finalize(const Scheme& sch, Vec q, GsMethod method, int iterations) {
  GroundState gs;
  gs.scheme = sch.kind();
  gs.method = method;
  gs.iterations = iterations;
  gs.residual = relative_residual(sch, q);
  gs.center_value = center_value(sch.grid(), q);
  gs.mass = sch.inner(q, q);
  gs.grad_norm_sq = sch.grad_norm_sq(q);
  gs.energy = energy(sch, q.cast<cplx>());
  gs.eigenvalue = -1.0;
  gs.profile = RadialField(sch.grid_ptr(), q);
  return gs;
}

GroundState newton_refine(const Scheme& sch, const RadialField& init, double tol, int max_steps) {
  const int n = sch.size();
  const Mat N = sch.potential_matrix();
  const Mat L = sch.laplacian_matrix();
  Vec q = init.real();
  double res = relative_residual(sch, q);
  int it = 0;
  for (; it < max_steps && res > tol; ++it) {
    const Vec F = stationary_residual(sch, q);
    Mat J = -L;
    J.diagonal().array() += 1.0;
    J.diagonal() -= N * q.cwiseAbs2();
    J -= 2.0 * q.asDiagonal() * N * q.asDiagonal();
    const Vec next = q - J.partialPivLu().solve(F);
    const double nr = relative_residual(sch, next);
    if (!std::isfinite(nr)) throw NumericalError("Newton iteration for Q produced non-finite values");
    if (!(nr < res)) break;  // round-off floor
    q = next;
    res = nr;
  }
  (void)n;
  return finalize(sch, std::move(q), GsMethod::newton, it);
}

GroundState find_ground_state_shooting(const Scheme& sch, const ShootingOptions& opt) {
  double lo = opt.lo, hi = opt.hi;
  if (!(lo > 0) || !(hi > lo)) throw ConfigError("shooting bracket must satisfy 0 < lo < hi");
  Shot slo = shoot(lo, opt.r_max, opt.dr), shi = shoot(hi, opt.r_max, opt.dr);
  if (slo.cls == ShotClass::undetermined || shi.cls == ShotClass::undetermined)
    throw NumericalError("shooting: bracket endpoint undetermined, increase r_max");
  if (slo.cls == shi.cls) throw ConfigError("shooting bracket endpoints classify identically (" + to_string(slo.cls) + ")");
  const bool lo_crosses = slo.cls == ShotClass::crosses_zero;
  int it = 0;
  for (; hi - lo > opt.tol * hi; ++it) {
    if (it >= opt.max_bisections) throw NumericalError("shooting bisection did not converge");
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    Shot s = shoot(mid, opt.r_max, opt.dr);
    // an undetermined shot is sorted by the sign of its final slope
    const bool crosses = s.cls == ShotClass::undetermined ? s.du[s.du.size() - 1] < 0.0
                                                          : s.cls == ShotClass::crosses_zero;
    if (crosses == lo_crosses) {
      lo = mid;
      slo = std::move(s);
    } else {
      hi = mid;
      shi = std::move(s);
    }
  }

  // follow the mean of the two bracketing shots until they separate by 1e-10 u0,
  // then continue with the local exponential tail
  const double u0 = 0.5 * (lo + hi);
  const int m = static_cast<int>(std::min(slo.r.size(), shi.r.size()));
  int cut = m - 1;
  for (int k = 0; k < m; ++k)
    if (std::abs(slo.u[k] - shi.u[k]) > 1e-10 * u0) {
      cut = k;
      break;
    }
  cut = std::max(cut, 2);
  const double dr = opt.dr;
  const double rt = slo.r[cut];
  const double ut = 0.5 * (slo.u[cut] + shi.u[cut]), vt = 0.5 * (slo.du[cut] + shi.du[cut]);
  const double kappa = -vt / ut - 1.5 / rt;
  if (!(kappa > 0) || !(ut > 0)) throw NumericalError("shooting: no decaying tail at the separation radius");
  const int extra = static_cast<int>(std::ceil(40.0 / kappa / dr));
  Shot s;
  s.cls = ShotClass::undetermined;
  s.r.resize(cut + 1 + extra);
  s.u.resize(cut + 1 + extra);
  s.du.resize(cut + 1 + extra);
  for (int k = 0; k <= cut; ++k) {
    s.r[k] = slo.r[k];
    s.u[k] = 0.5 * (slo.u[k] + shi.u[k]);
    s.du[k] = 0.5 * (slo.du[k] + shi.du[k]);
  }
  for (int k = 1; k <= extra; ++k) {
    const double x = rt + k * dr;
    const double val = ut * std::pow(rt / x, 1.5) * std::exp(-kappa * (x - rt));
    s.r[cut + k] = x;
    s.u[cut + k] = val;
    s.du[cut + k] = -val * (kappa + 1.5 / x);
  }
  s.event_r = s.r[s.r.size() - 1];

  // C_u = 2 pi^2 int s u^2 ds, trapezoid plus the series part
  double c = 0.0;
  for (Eigen::Index k = 0; k + 1 < s.r.size(); ++k)
    c += 0.5 * dr * (s.r[k] * s.u[k] * s.u[k] + s.r[k + 1] * s.u[k + 1] * s.u[k + 1]);
  c += 0.5 * u0 * u0 * s.r[0] * s.r[0];
  c *= kS3;
  const double mu = c - 1.0;
  if (!(mu > 0)) throw NumericalError("shooting: implied eigenvalue has the wrong sign");

  // Q(r) = u(r / sqrt(mu)) / mu solves the equation with eigenvalue -1
  const double sm = std::sqrt(mu);
  const Vec q = sample_shot(s, Vec(sch.nodes() / sm)) / mu;
  GroundState raw = finalize(sch, q, GsMethod::shooting, it);
  GroundState out = raw;
  if (opt.polish) {
    out = newton_refine(sch, raw.profile);
    out.iterations += it;
  }
  out.method = GsMethod::shooting;
  out.unpolished = raw.profile;
  out.shooting_u0 = u0;
  out.shooting_mu = mu;
  return out;
}

namespace {

double nehari_scale(const Scheme& sch, const Vec& q) {
  const double g = sch.grad_norm_sq(q), m = sch.inner(q, q);
  const double nl = sch.inner(sch.potential(q.cwiseAbs2()), q.cwiseAbs2());
  if (!(nl > 0)) throw NumericalError("normalization against a vanishing Hartree term");
  return std::sqrt((g + m) / nl);
}

void check_init(const RadialField& init, const Scheme& sch) {
  if (!init.grid || init.grid->hash() != sch.grid().hash()) throw ConfigError("initial profile on a different grid");
  if (!init.is_real()) throw ConfigError("initial profile must be real");
  if (!(init.real().cwiseAbs().maxCoeff() > 0)) throw ConfigError("initial profile is zero");
}

}  // namespace

GroundState find_ground_state_gradient_flow(const Scheme& sch, const RadialField& init, const FlowOptions& opt) {
  check_init(init, sch);
  if (!(opt.dt > 0) || !(opt.tol > 0)) throw ConfigError("gradient flow needs dt > 0 and tol > 0");
  Vec q = init.real();
  double res = relative_residual(sch, q);
  if (res <= opt.tol) return finalize(sch, q, GsMethod::gradient_flow, 0);
  // (1 + dt(-Lap + 1)) q_new = q + dt P(q^2) q
  const Helmholtz hz = sch.helmholtz(1.0 + 1.0 / opt.dt);
  double best = kInf;
  int best_at = 0;
  int step = 0;
  q *= nehari_scale(sch, q);
  for (; step < opt.max_steps; ++step) {
    const Vec rhs = (q + opt.dt * sch.potential(q.cwiseAbs2()).cwiseProduct(q)) / opt.dt;
    q = hz.solve(rhs);
    q *= nehari_scale(sch, q);
    res = relative_residual(sch, q);
    if (!std::isfinite(res)) throw NumericalError("gradient flow produced non-finite values");
    if (res <= opt.tol) break;
    if (res < best) {
      best = res;
      best_at = step;
    }
    if (res > 1e3 * best || step - best_at > opt.growth_window)
      throw NumericalError("gradient flow diverged (residual " + std::to_string(res) + " after " +
                           std::to_string(step + 1) + " steps, best " + std::to_string(best) + ")");
  }
  if (res > opt.tol) throw NumericalError("gradient flow did not reach tolerance in max_steps");
  return finalize(sch, std::move(q), GsMethod::gradient_flow, step + 1);
}

GroundState find_ground_state_petviashvili(const Scheme& sch, const RadialField& init, double tol, int max_steps) {
  check_init(init, sch);
  const Helmholtz hz = sch.helmholtz(1.0);
  Vec q = init.real();
  double res = relative_residual(sch, q);
  double best = res;
  int step = 0;
  for (; step < max_steps && res > tol; ++step) {
    const Vec nl = sch.potential(q.cwiseAbs2()).cwiseProduct(q);
    const double s = (sch.grad_norm_sq(q) + sch.inner(q, q)) / sch.inner(nl, q);
    q = std::pow(s, 1.5) * hz.solve(nl);
    res = relative_residual(sch, q);
    if (!std::isfinite(res) || res > 1e6 * best) throw NumericalError("Petviashvili iteration diverged");
    best = std::min(best, res);
  }
  if (res > tol) throw NumericalError("Petviashvili iteration did not reach tolerance");
  return finalize(sch, std::move(q), GsMethod::petviashvili, step);
}

}  // namespace hartree
