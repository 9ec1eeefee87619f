#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hartree/ground_state.hpp"
#include "hartree/linearized.hpp"

using namespace hartree;

namespace {

struct System {
  Scheme sch;
  GroundState gs;
  LinearizedSystem lin;
  System(int n, double R)
      : sch(make_grid(n, R), SchemeKind::fv4),
        gs(find_ground_state_shooting(sch)),
        lin(assemble(sch, gs.profile.real())) {}
};

// small enough for the dense 2n eigenproblem
const System& coarse() {
  static const System s(256, 20.0);
  return s;
}

const System& fine() {
  static const System s(2048, 30.0);
  return s;
}

const System& medium() {
  static const System s(1024, 30.0);
  return s;
}

CVec random_pair(const LinearizedSystem& s, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  const Vec& r = s.sch.nodes();
  const double a = nd(rng), b = nd(rng), c = nd(rng), d = nd(rng);
  CVec f(s.n());
  for (int i = 0; i < s.n(); ++i)
    f[i] = cplx(a + b * r[i] * r[i], c + d * r[i]) * std::exp(-0.5 * r[i] * r[i]);
  return pair_vector(f);
}

}  // namespace

TEST(Linearized, KernelRelations) {
  const auto k = kernel_relations(fine().lin);
  EXPECT_LT(k.lminus_q, 1e-8);
  EXPECT_LT(k.lplus_q1, 1e-6);
  EXPECT_LT(k.lplus_rho, 1e-8);
  EXPECT_LT(k.sym_plus, 1e-12);
  EXPECT_LT(k.sym_minus, 1e-12);
}

TEST(Linearized, DilationRelationConvergesAtFourthOrder) {
  const double e1 = kernel_relations(medium().lin).lplus_q1;
  const double e2 = kernel_relations(fine().lin).lplus_q1;
  EXPECT_GT(std::log2(e1 / e2), 3.0);
}

TEST(Linearized, NondegeneracyMargin) {
  const auto m1 = nondegeneracy_margin(medium().lin);
  const auto m2 = nondegeneracy_margin(fine().lin);
  EXPECT_GT(m1.lplus, 0.1);
  EXPECT_LT(std::abs(m2.lplus - m1.lplus) / m1.lplus, 0.2);
  EXPECT_LT(m1.lplus_negative, 0.0);
  EXPECT_LT(m1.lminus, 1e-8);
  EXPECT_GT(m1.lminus_overlap, 1.0 - 1e-8);
}

TEST(Linearized, GrowthProbe) {
  const auto g = homogeneous_growth_probe(medium().lin);
  EXPECT_GT(g.rate, 0.5);
  EXPECT_TRUE(g.above_q);
  const auto g2 = homogeneous_growth_probe(fine().lin, 2.0, 1e-3);
  EXPECT_LT(std::abs(g2.rate - g.rate) / g.rate, 0.1);
}

TEST(Linearized, JordanChain) {
  const auto c = jordan_chain_check(fine().lin);
  EXPECT_LT(c.residuals[0], 1e-8);
  for (int j = 1; j < 4; ++j) EXPECT_LT(c.residuals[j], 1e-6) << j;
  // purely imaginary, magnitudes 2, 4, 1
  const double mag[3] = {2.0, 4.0, 1.0};
  for (int j = 0; j < 3; ++j) {
    EXPECT_LT(std::abs(c.constants[j].real()), 1e-6);
    EXPECT_NEAR(std::abs(c.constants[j]), mag[j], 1e-5);
  }
  EXPECT_NEAR(c.constants[0].imag(), -2.0, 1e-5);
  EXPECT_NEAR(c.constants[1].imag(), 4.0, 1e-5);
  EXPECT_NEAR(c.constants[2].imag(), -1.0, 1e-5);
}

TEST(Linearized, ModulationCouplingFromChain) {
  const auto c = jordan_chain_check(fine().lin);
  const auto k = modulation_coupling(c.constants);
  EXPECT_NEAR(k[0], 2.0, 1e-5);
  EXPECT_NEAR(k[1], -4.0, 1e-5);
  EXPECT_NEAR(k[2], 1.0, 1e-5);
}

TEST(Linearized, StructureOfH) {
  const auto& s = coarse().lin;
  const int n = s.n();
  // sigma_1 H sigma_1 = -H
  Mat S = Mat::Zero(2 * n, 2 * n);
  S.topRightCorner(n, n).setIdentity();
  S.bottomLeftCorner(n, n).setIdentity();
  EXPECT_LT((S * s.H * S + s.H).cwiseAbs().maxCoeff(), 1e-12 * s.H.cwiseAbs().maxCoeff());
  const auto sym = spectral_symmetry(s);
  EXPECT_GT(sym.checked, 2 * n - 10);
  EXPECT_LT(sym.max_defect, 1e-8);
}

TEST(Linearized, RieszProjectionAtInfinity) {
  const auto& s = coarse().lin;
  const auto r = riesz_projection(s);
  EXPECT_EQ(r.inside, 4);
  EXPECT_NEAR(r.trace_re, 4.0, 1e-6);
  EXPECT_LT(std::abs(r.trace_im), 1e-6);
  // the cluster eigenvectors are nearly parallel (cond(V) ~ 1e8), so the
  // eigenvector projector carries errors well above 1e-12
  EXPECT_LT(r.idempotency, 1e-6);
  EXPECT_LT(r.cluster_gap, 1e-6);
  // the discrete chain lies in the root space up to discretisation error
  EXPECT_LT(r.chain_gap, 1e-4);
  EXPECT_THROW(riesz_projection(s, std::abs(s.spectral().lambda[s.spectral().rest.front()])), NumericalError);
}

TEST(Linearized, RieszProjectionOfDeformedKernels) {
  const auto& base = coarse();
  const auto r0 = riesz_projection(base.lin);
  double prev = kInf;
  for (double t : {10.0, 100.0, 1000.0}) {
    const auto st = assemble(base.sch, base.gs.profile.real(), KernelSpec::deformed(5, t, Phi::rational()));
    const auto rt = riesz_projection(st, r0.c);
    EXPECT_NEAR(rt.trace_re, 4.0, 1e-6);
    const double d = (rt.P - r0.P).cwiseAbs().maxCoeff() / r0.P.cwiseAbs().maxCoeff();
    EXPECT_LT(d, prev) << t;
    prev = d;
  }
  EXPECT_LT(prev, 1e-5);
}

TEST(Linearized, PropagationOfTheChain) {
  const auto& s = coarse().lin;
  const std::vector<double> ts = {0.0, 50.0, 100.0, 200.0, 400.0};
  const auto v1 = propagate_linearized(s, s.phi[0], ts);
  for (const auto& v : v1) EXPECT_LT(s.norm(v - s.phi[0]) / s.norm(s.phi[0]), 1e-4);
  const auto v4 = propagate_linearized(s, s.phi[3], ts);
  EXPECT_LT(s.norm(v4[0] - s.phi[3]) / s.norm(s.phi[3]), 1e-10);
  const double slope = std::log(s.norm(v4[4]) / s.norm(v4[3])) / std::log(2.0);
  EXPECT_NEAR(slope, 3.0, 0.1);
}

TEST(Linearized, PropagationMatchesMatrixExponential) {
  const auto& s = coarse().lin;
  const CVec v0 = random_pair(s, 3);
  const double t = 0.2;
  const auto v = propagate_linearized(s, v0, {t});
  // independent reference: short Taylor steps of e^{itH}
  CVec ref = v0;
  const double hn = s.H.cwiseAbs().rowwise().sum().maxCoeff();
  const int steps = static_cast<int>(std::ceil(t * hn / 0.25));
  const cplx a(0.0, t / steps);
  for (int k = 0; k < steps; ++k) {
    CVec term = ref, acc = ref;
    for (int p = 1; p <= 8; ++p) {
      term = (a / static_cast<double>(p)) * s.apply_H(term);
      acc += term;
    }
    ref = acc;
  }
  // the chain spans the root space only up to its own residual, and that
  // residual bounds the splitting error
  const auto c = jordan_chain_check(s);
  const double res = *std::max_element(c.residuals.begin(), c.residuals.end());
  EXPECT_LT(s.norm(v[0] - ref) / s.norm(ref), res);
}

TEST(Linearized, QuadraticFormConservedOffTheRoots) {
  const auto& s = coarse().lin;
  const CVec v0 = remove_root_part(s, random_pair(s, 11));
  const double q0 = quadratic_form(s, v0);
  EXPECT_GT(q0, 0.0);
  const auto vs = propagate_linearized(s, v0, {1.0, 10.0, 100.0});
  for (const auto& v : vs) EXPECT_LT(std::abs(quadratic_form(s, v) - q0) / q0, 1e-6);
}

TEST(Linearized, RootCoefficients) {
  const auto& s = fine().lin;
  const auto zero = root_coefficients(s, CVec::Zero(2 * s.n()));
  for (auto b : zero.b) EXPECT_EQ(std::abs(b), 0.0);
  // <rho, Q> = -<|x|^2 Q, Q> / 2, from L+ Q1 = -2Q and L+ rho = -|x|^2 Q
  const auto rc = root_coefficients(s, s.phi[0]);
  EXPECT_NEAR(rc.rho_q, -0.5 * rc.x2q_q, 1e-6 * rc.x2q_q);
  EXPECT_GT(rc.x2q_q, 0.0);
  EXPECT_FALSE(rc.positive);
  // each chain vector is recovered exactly
  for (int i = 0; i < 4; ++i) {
    const auto c = root_coefficients(s, s.phi[i]);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(std::abs(c.b[j] - (i == j ? 1.0 : 0.0)), 0.0, 1e-5) << i << j;
  }
  CVec F = 0.3 * s.phi[0] - 1.5 * s.phi[1] + cplx(0, 2) * s.phi[2] + 0.25 * s.phi[3];
  const auto c = root_coefficients(s, F);
  EXPECT_NEAR(std::abs(c.b[0] - 0.3), 0.0, 1e-5);
  EXPECT_NEAR(std::abs(c.b[1] + 1.5), 0.0, 1e-5);
  EXPECT_NEAR(std::abs(c.b[2] - cplx(0, 2)), 0.0, 1e-5);
  EXPECT_NEAR(std::abs(c.b[3] - 0.25), 0.0, 1e-5);
  // F = psi_1: only the pairing with psi_1 survives the b4 equation
  const auto p = root_coefficients(s, s.psi[0]);
  EXPECT_NEAR(std::abs(p.b[3] - s.pair(s.psi[0], s.psi[0]) / (2.0 * rc.rho_q)), 0.0, 1e-10 * std::abs(p.b[3]));
}

TEST(Linearized, GramConditionStable) {
  const double c1 = gram_condition(medium().lin), c2 = gram_condition(fine().lin);
  EXPECT_TRUE(std::isfinite(c1));
  EXPECT_LT(std::abs(c1 - c2) / c1, 1e-3);
}

TEST(Linearized, EssentialSpectrumProxy) {
  const auto e = essential_spectrum_proxy(coarse().lin);
  EXPECT_GT(e.lowest_above_one, 1.0);
  EXPECT_LT(e.lowest_above_one, 1.2);
  EXPECT_LT(e.max_imag, 1e-6);
}

TEST(Modulation, ZeroForcing) {
  Vec t = Vec::LinSpaced(200, 1.0, 100.0);
  std::array<CVec, 4> b;
  for (auto& x : b) x = CVec::Zero(200);
  for (const auto& a : integrate_modulation(t, b)) EXPECT_EQ(a.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Modulation, PowerLawForcing) {
  const int m = 40001;
  Vec t(m);
  for (int i = 0; i < m; ++i) t[i] = std::pow(10.0, 6.0 * i / (m - 1));
  std::array<CVec, 4> b;
  for (auto& x : b) x = CVec::Zero(m);
  for (int i = 0; i < m; ++i) b[3][i] = std::pow(t[i], -5.0);
  const auto a = integrate_modulation(t, b);
  // antiderivatives with zero data at infinity; the 1e6 cutoff is negligible for t <= 10
  const cplx I(0, 1);
  for (int i = 0; i < m && t[i] <= 10.0; i += 97) {
    const double s = t[i];
    const cplx e4 = I * std::pow(s, -4.0) / 4.0;
    const cplx e3 = I * std::pow(s, -3.0) / 12.0;
    const cplx e2 = -I * std::pow(s, -2.0) / 6.0;
    const cplx e1 = I / (3.0 * s);
    EXPECT_LT(std::abs(a[3][i] - e4) / std::abs(e4), 1e-5);
    EXPECT_LT(std::abs(a[2][i] - e3) / std::abs(e3), 1e-5);
    EXPECT_LT(std::abs(a[1][i] - e2) / std::abs(e2), 1e-5);
    EXPECT_LT(std::abs(a[0][i] - e1) / std::abs(e1), 1e-4);
  }
}

TEST(Modulation, Linearity) {
  Vec t = Vec::LinSpaced(500, 1.0, 50.0);
  std::array<CVec, 4> b1, b2, b3;
  for (int j = 0; j < 4; ++j) {
    b1[j] = (t.array().pow(-3.0 - j)).cast<cplx>();
    b2[j] = (cplx(0, 1) * t.array().pow(-2.5).cast<cplx>()).matrix();
    b3[j] = 2.0 * b1[j] - 3.0 * b2[j];
  }
  const auto a1 = integrate_modulation(t, b1), a2 = integrate_modulation(t, b2), a3 = integrate_modulation(t, b3);
  for (int j = 0; j < 4; ++j) EXPECT_LT((a3[j] - 2.0 * a1[j] + 3.0 * a2[j]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Modulation, RejectsSlowDecay) {
  Vec t = Vec::LinSpaced(500, 1.0, 100.0);
  std::array<CVec, 4> b;
  for (auto& x : b) x = CVec::Zero(500);
  b[0] = t.array().inverse().cast<cplx>();
  EXPECT_THROW(integrate_modulation(t, b), ConfigError);
  Vec bad = t;
  bad[10] = bad[9];
  EXPECT_THROW(integrate_modulation(bad, b), ConfigError);
}
