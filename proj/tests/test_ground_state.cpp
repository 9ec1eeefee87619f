#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hartree/ground_state.hpp"

using namespace hartree;

namespace {

struct Fixture {
  Scheme sch{make_grid(1024, 30.0), SchemeKind::fv4};
  GroundState gs = find_ground_state_shooting(sch);
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

double peak_rel(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Shooting, SmallAmplitudeFollowsBesselZero) {
  // linear limit: u = 2 J1(r) / r, first zero at j_{1,1}
  auto s = shoot(1e-4, 20.0, 1e-3);
  EXPECT_EQ(s.cls, ShotClass::crosses_zero);
  EXPECT_NEAR(s.event_r, 3.8317059702075123, 1e-6);
}

TEST(Shooting, LargeAmplitudeDiverges) {
  EXPECT_EQ(shoot(5.0, 40.0).cls, ShotClass::diverges);
  EXPECT_EQ(shoot(0.2, 2.0).cls, ShotClass::undetermined);
  EXPECT_THROW(shoot(0.0, 10.0), ConfigError);
}

TEST(Shooting, ClassificationIsMonotoneAndShotsDoNotCross) {
  bool seen_diverge = false;
  Shot prev;
  for (double u0 = 0.05; u0 < 1.0; u0 += 0.01) {
    Shot s = shoot(u0, 40.0, 2e-3);
    ASSERT_NE(s.cls, ShotClass::undetermined);
    if (s.cls == ShotClass::diverges) seen_diverge = true;
    if (seen_diverge) {
      EXPECT_EQ(s.cls, ShotClass::diverges) << u0;
    }
    if (prev.r.size() > 0) {
      const auto m = std::min(prev.u.size(), s.u.size());
      for (Eigen::Index k = 0; k < m; ++k) ASSERT_GT(s.u[k], prev.u[k]) << u0 << " r=" << s.r[k];
    }
    prev = s;
  }
  EXPECT_TRUE(seen_diverge);
}

TEST(Shooting, RejectsDegenerateBracket) {
  Scheme sch(make_grid(64, 20.0), SchemeKind::fv4);
  ShootingOptions o;
  o.lo = 0.5;
  o.hi = 1.0;
  EXPECT_THROW(find_ground_state_shooting(sch, o), ConfigError);
}

TEST(GroundState, ShootingSolvesTheStationaryEquation) {
  const auto& g = fx().gs;
  EXPECT_LE(g.residual, 1e-8);
  EXPECT_GT(g.profile.real().minCoeff(), 0.0);
  EXPECT_LE(std::abs(g.energy), 1e-6 * g.grad_norm_sq);
  EXPECT_NEAR(g.eigenvalue, -1.0, 0.0);
  // tail: log Q is asymptotically linear with slope -1 (r^-3/2 and the long-range
  // potential bend it slowly)
  const Vec& r = fx().sch.nodes();
  const Vec q = g.profile.real();
  auto slope = [&](double a, double b) {
    const int ia = static_cast<int>(a / 30.0 * 1024), ib = static_cast<int>(b / 30.0 * 1024);
    return (std::log(q[ib]) - std::log(q[ia])) / (r[ib] - r[ia]);
  };
  EXPECT_NEAR(slope(15, 20), slope(20, 25), 0.02);
  EXPECT_LT(slope(20, 25), -1.0);
  EXPECT_GT(slope(20, 25), -1.2);
}

TEST(GroundState, GradientFlowAgreesWithShooting) {
  const auto& f = fx();
  auto init = sample(f.sch.grid_ptr(), [](double r) { return std::exp(-r * r / 4); });
  auto flow = find_ground_state_gradient_flow(f.sch, init);
  EXPECT_LE(flow.residual, 1e-8);
  // against the continuum shooting profile, before it is polished on the grid
  EXPECT_LE(peak_rel(flow.profile.real(), f.gs.unpolished.real()), 1e-5);
  const double mu = f.sch.inner(f.gs.unpolished.real(), f.gs.unpolished.real());
  EXPECT_NEAR(flow.mass, mu, 1e-5 * mu);
  EXPECT_LE(peak_rel(flow.profile.real(), f.gs.profile.real()), 1e-9);
}

TEST(GroundState, GradientFlowFromTheFixedPoint) {
  const auto& f = fx();
  FlowOptions o;
  o.tol = 1e-10;
  auto flow = find_ground_state_gradient_flow(f.sch, f.gs.profile, o);
  EXPECT_LE(flow.iterations, 2);
}

TEST(GroundState, GradientFlowLargeStepStillConverges) {
  // the Nehari rescaling keeps the semi-implicit flow stable for any dt
  const auto& f = fx();
  auto init = sample(f.sch.grid_ptr(), [](double r) { return 2.0 * std::exp(-r * r); });
  FlowOptions o;
  o.dt = 10.0;
  auto flow = find_ground_state_gradient_flow(f.sch, init, o);
  EXPECT_LE(peak_rel(flow.profile.real(), f.gs.profile.real()), 1e-8);
}

TEST(GroundState, GradientFlowFailureIsReported) {
  const auto& f = fx();
  auto init = sample(f.sch.grid_ptr(), [](double r) { return std::exp(-r * r); });
  FlowOptions o;
  o.max_steps = 3;
  EXPECT_THROW(find_ground_state_gradient_flow(f.sch, init, o), NumericalError);
  EXPECT_THROW(find_ground_state_gradient_flow(f.sch, RadialField::zeros(f.sch.grid_ptr()), o), ConfigError);
}

TEST(GroundState, PetviashviliAgrees) {
  const auto& f = fx();
  auto init = sample(f.sch.grid_ptr(), [](double r) { return std::exp(-r * r / 4); });
  auto p = find_ground_state_petviashvili(f.sch, init);
  EXPECT_LE(peak_rel(p.profile.real(), f.gs.profile.real()), 1e-9);
}

TEST(GroundState, CenterValueExtrapolation) {
  auto g = make_grid(256, 8.0);
  Vec f = sample(g, [](double r) { return 3.0 - 2.0 * r * r + 0.5 * r * r * r * r; }).real();
  EXPECT_NEAR(center_value(*g, f), 3.0, 1e-12);
}

TEST(Weinstein, ScaleInvariance) {
  // dilation by 2 needs a fine grid; amplitude scaling is exact on any grid
  Scheme sch(make_grid(4096, 12.0), SchemeKind::fv4);
  auto f = [](double r) { return std::exp(-r * r) * (1.0 + 0.3 * r * r); };
  const double j0 = weinstein_functional(sch, sample(sch.grid_ptr(), f).values);
  for (double a : {0.5, 2.0})
    for (double l : {0.5, 2.0}) {
      auto g = sample(sch.grid_ptr(), [&](double r) { return a * f(l * r); });
      EXPECT_NEAR(weinstein_functional(sch, g.values), j0, 1e-8 * j0) << a << " " << l;
    }
  EXPECT_THROW(weinstein_functional(sch, RadialField::zeros(sch.grid_ptr()).values), ConfigError);
}

TEST(Weinstein, SharpConstantAtQ) {
  const auto& f = fx();
  const double j = weinstein_functional(f.sch, f.gs.profile.values);
  EXPECT_NEAR(j, 0.5 * f.gs.mass, 1e-4 * j);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    double c[3];
    for (double& x : c) x = 1e-3 * n01(rng);
    auto p = sample(f.sch.grid_ptr(), [&](double r) {
      return (c[0] + c[1] * r + c[2] * r * r) * std::exp(-0.5 * r * r);
    });
    CVec u = f.gs.profile.values + p.values;
    EXPECT_GE(weinstein_functional(f.sch, u), j * (1 - 1e-13)) << trial;
  }
}

TEST(Weinstein, GwpMargin) {
  const auto& f = fx();
  EXPECT_NEAR(gwp_margin(f.sch, f.gs.profile.values, f.gs), 0.0, 1e-6 * f.gs.grad_norm_sq);
  // multiples of Q saturate the inequality: margin(cQ) = c^4 E(Q)
  EXPECT_NEAR(gwp_margin(f.sch, CVec(0.5 * f.gs.profile.values), f.gs), f.gs.energy / 16, 1e-12 * f.gs.grad_norm_sq);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.2, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = 2 * u(rng), b = w(rng), c = u(rng), ph = 3 * u(rng);
    auto v = sample(f.sch.grid_ptr(), [&](double r) {
      return cplx(a, c) * std::exp(-b * r * r) * std::exp(cplx(0, ph * r * r)) * (1.0 + c * r);
    });
    const double g = f.sch.grad_norm_sq(v.values);
    EXPECT_GE(gwp_margin(f.sch, v.values, f.gs), -1e-6 * g) << trial;
  }
}
