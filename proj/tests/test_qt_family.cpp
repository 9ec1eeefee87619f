#include <cmath>

#include <gtest/gtest.h>

#include "hartree/ground_state.hpp"
#include "hartree/qt_family.hpp"

using namespace hartree;

namespace {

struct Fixture {
  Scheme sch{make_grid(512, 30.0), SchemeKind::fv4};
  Vec q = find_ground_state_shooting(sch).profile.real();
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

std::vector<double> decade_samples(double t0, double t1, int per_decade) {
  std::vector<double> t;
  const int m = static_cast<int>(std::round(std::log10(t1 / t0) * per_decade));
  for (int i = m; i >= 0; --i) t.push_back(t0 * std::pow(10.0, static_cast<double>(i) / per_decade));
  return t;
}

QtOperator deformed_op(double tau, double k = 5.0) {
  return make_qt_operator(fx().sch, KernelSpec::deformed(k, 1.0 / tau, Phi::rational()));
}

}  // namespace

TEST(QtFamily, ResidualOfZeroIsZero) {
  const auto op = deformed_op(0.1);
  EXPECT_EQ(residual_G(op, Vec::Zero(fx().sch.size())).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(residual_G(op, Vec::Zero(3)), ConfigError);
}

TEST(QtFamily, NewtonLimitResidualIsTheGroundStateResidual) {
  const auto op = make_qt_operator(fx().sch, KernelSpec::newton());
  EXPECT_LT(relative_G(op, fx().q), 1e-11);
}

TEST(QtFamily, ResidualScalesLikeTauToTheK) {
  const double r1 = relative_G(deformed_op(0.1), fx().q);
  const double r2 = relative_G(deformed_op(0.05), fx().q);
  EXPECT_GT(r1, 1e-8);
  EXPECT_NEAR(std::log2(r1 / r2), 5.0, 0.3);
}

TEST(QtFamily, FixedPointIsReturnedUntouched) {
  const auto op = make_qt_operator(fx().sch, KernelSpec::newton());
  const auto s = solve_Qt(op, fx().q);
  EXPECT_EQ(s.steps, 0);
  EXPECT_TRUE(s.converged);
  EXPECT_EQ((s.profile - fx().q).cwiseAbs().maxCoeff(), 0.0);
}

TEST(QtFamily, NewtonConvergesQuadratically) {
  const auto op = deformed_op(0.2);
  QtOptions opt;
  opt.polish = false;
  opt.tol = 1e-13;
  const auto s = solve_Qt(op, fx().q, opt);
  ASSERT_TRUE(s.converged);
  ASSERT_GE(s.history.size(), 3u);
  // r_{n+1} / r_n^2 bounded while above the rounding floor
  for (std::size_t i = 0; i + 1 < s.history.size(); ++i) {
    if (s.history[i + 1] > 1e-13) {
      EXPECT_LT(s.history[i + 1] / (s.history[i] * s.history[i]), 1e3) << i;
    }
  }
  EXPECT_LE(s.steps, 20);
}

TEST(QtFamily, DistanceToQInfDecreasesMonotonically) {
  const auto f = continuation_sweep(fx().sch, fx().q, 5.0, Phi::rational(), {20.0, 10.0, 5.0});
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f.t_samples.front(), 5.0);
  EXPECT_GT(f.h1_distance(0), f.h1_distance(1));
  EXPECT_GT(f.h1_distance(1), f.h1_distance(2));
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_LT(f.residuals[i], 1e-8);
    EXPECT_GT(f.profiles[i].minCoeff(), 0.0);
  }
  EXPECT_EQ(f.T0, 5.0);
}

TEST(QtFamily, LargeTimeProfileIsCloseToQInf) {
  const auto f = continuation_sweep(fx().sch, fx().q, 5.0, Phi::rational(), {1e3});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_LT(f.h1_distance(0), 1e-3 * fx().sch.h1_norm(fx().q));
}

TEST(QtFamily, SweepPreconditions) {
  EXPECT_EQ(continuation_sweep(fx().sch, fx().q, 5.0, Phi::rational(), {}).size(), 0u);
  EXPECT_THROW(continuation_sweep(fx().sch, fx().q, 5.0, Phi::rational(), {10.0, 20.0}), ConfigError);
  EXPECT_THROW(continuation_sweep(fx().sch, fx().q, 5.0, Phi::rational(), {10.0, 10.0}), ConfigError);
}

TEST(QtFamily, DecayExponentK5) {
  const auto f = continuation_sweep(fx().sch, fx().q, 5.0, Phi::rational(), decade_samples(10.0, 1e3, 4));
  const auto d = dt_decay_exponent(f);
  ASSERT_FALSE(d.degenerate);
  EXPECT_NEAR(d.slope, -6.0, 0.2);
  // t^{k+1} |d_t Q| stays bounded over the range
  double lo = kInf, hi = 0;
  for (std::size_t i = 0; i < d.t.size(); ++i) {
    const double v = d.dt_norm[i] * std::pow(d.t[i], 6.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_LT(hi / lo, 1.5);
}

TEST(QtFamily, DecayExponentK2) {
  const auto f = continuation_sweep(fx().sch, fx().q, 2.0, Phi::rational(), decade_samples(10.0, 1e3, 4));
  const auto d = dt_decay_exponent(f);
  ASSERT_FALSE(d.degenerate);
  EXPECT_NEAR(d.slope, -3.0, 0.2);
}

TEST(QtFamily, ConstantFamilyIsDegenerate) {
  ProfileFamily f(fx().sch);
  f.q_inf = fx().q;
  for (double t : {10.0, 30.0, 60.0, 100.0, 300.0}) {
    f.t_samples.push_back(t);
    f.profiles.push_back(fx().q);
  }
  EXPECT_TRUE(dt_decay_exponent(f).degenerate);
  f.t_samples.resize(3);
  f.profiles.resize(3);
  EXPECT_THROW(dt_decay_exponent(f), ConfigError);
}

TEST(QtFamily, UniformExponentialEnvelope) {
  const auto one = uniform_decay_check(fx().sch, {fx().q});
  EXPECT_TRUE(one.pass);
  EXPECT_GT(one.rates[0], 1.0);
  EXPECT_LT(one.rates[0], 1.2);

  const auto f = continuation_sweep(fx().sch, fx().q, 5.0, Phi::rational(), decade_samples(10.0, 1e3, 2));
  const auto e = uniform_decay_check(f);
  EXPECT_TRUE(e.pass);
  EXPECT_GT(e.delta, 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vec& q = f.profiles[i];
    const Vec& r = fx().sch.nodes();
    for (int j = 0; j < q.size() && r[j] < 20.0; ++j) EXPECT_LE(std::abs(q[j]), e.C * std::exp(-e.delta * r[j]) * (1 + 1e-12));
  }

  // negative control: a profile spread over three times the radius
  std::vector<Vec> mixed = f.profiles;
  const Vec& r = fx().sch.nodes();
  Vec wide(r.size());
  for (int j = 0; j < r.size(); ++j) wide[j] = interpolate_at(fx().sch.grid(), fx().q.cast<cplx>(), r[j] / 3.0).real();
  mixed.push_back(wide);
  EXPECT_FALSE(uniform_decay_check(fx().sch, mixed).pass);
}
