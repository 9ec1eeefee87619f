#include "hartree/linearized.hpp"

#include "hartree/ground_state.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <unsupported/Eigen/MatrixFunctions>

namespace hartree {

namespace {

CVec stack(const CVec& a, const CVec& b) {
  CVec v(a.size() + b.size());
  v << a, b;
  return v;
}

CVec to_c(const Vec& v) { return v.cast<cplx>(); }

const cplx I(0.0, 1.0);

double weighted_asymmetry(const Vec& w, const Mat& L) {
  const Mat S = w.asDiagonal() * L;
  return (S - S.transpose()).cwiseAbs().maxCoeff() / S.cwiseAbs().maxCoeff();
}

}  // namespace

cplx LinearizedSystem::inner(const CVec& a, const CVec& b) const {
  return (w2.cast<cplx>().array() * a.conjugate().array() * b.array()).sum();
}

cplx LinearizedSystem::pair(const CVec& a, const CVec& b) const {
  return (w2.cast<cplx>().array() * a.array() * b.array()).sum();
}

double LinearizedSystem::norm(const CVec& a) const { return std::sqrt(w2.dot(a.cwiseAbs2())); }

CVec LinearizedSystem::apply_H(const CVec& v) const {
  CVec out(v.size());
  out.real() = H * v.real();
  out.imag() = H * v.imag();
  return out;
}

LinearizedSystem assemble(const Scheme& sch, const Vec& Q, const KernelSpec& spec, const KernelOptions& opt) {
  if (Q.size() != sch.size()) throw ConfigError("assemble: profile does not match the grid");
  if (!(Q.minCoeff() > 0)) throw ConfigError("assemble: profile must be positive");
  LinearizedSystem s(sch, spec);
  s.t_param = spec.is_newton_limit() ? kInf : spec.t;
  const int n = sch.size();
  s.Q = Q;
  s.N = kernel_operator(sch, spec, opt);
  s.V = s.N * Q.cwiseAbs2();
  s.Wm = Q.asDiagonal() * s.N * Q.asDiagonal();
  const Mat L = sch.laplacian_matrix();
  s.Lminus = -L;
  s.Lminus.diagonal().array() += 1.0;
  s.Lminus.diagonal() -= s.V;
  s.Lplus = s.Lminus - 2.0 * s.Wm;
  s.H.resize(2 * n, 2 * n);
  s.H.topLeftCorner(n, n) = -s.Lminus + s.Wm;
  s.H.topRightCorner(n, n) = s.Wm;
  s.H.bottomLeftCorner(n, n) = -s.Wm;
  s.H.bottomRightCorner(n, n) = s.Lminus - s.Wm;
  s.w2.resize(2 * n);
  s.w2 << sch.weights(), sch.weights();

  s.Q1 = 2.0 * Q + sch.r_dr(Q);
  s.x2Q = sch.nodes().cwiseAbs2().cwiseProduct(Q);
  Eigen::PartialPivLU<Mat> lu(s.Lplus);
  s.rho = lu.solve(Vec(-s.x2Q));
  const double rr = (s.Lplus * s.rho + s.x2Q).norm() / s.x2Q.norm();
  if (!std::isfinite(rr) || rr > 1e-6) throw NumericalError("L+ is numerically singular: rho solve failed");

  const CVec q = to_c(Q), q1 = to_c(s.Q1), x2q = to_c(s.x2Q), rh = to_c(s.rho);
  s.phi = {stack(I * q, -I * q), stack(q1, q1), stack(I * x2q, -I * x2q), stack(rh, rh)};
  s.psi = {stack(q, q), stack(I * q1, -I * q1), stack(x2q, x2q), stack(I * rh, -I * rh)};
  return s;
}

KernelRelations kernel_relations(const LinearizedSystem& s) {
  KernelRelations k;
  const Scheme& sch = s.sch;
  k.lminus_q = sch.norm(Vec(s.Lminus * s.Q)) / sch.norm(s.Q);
  k.lplus_q1 = sch.norm(Vec(s.Lplus * s.Q1 + 2.0 * s.Q)) / sch.norm(s.Q);
  k.lplus_rho = sch.norm(Vec(s.Lplus * s.rho + s.x2Q)) / sch.norm(s.x2Q);
  k.sym_plus = weighted_asymmetry(sch.weights(), s.Lplus);
  k.sym_minus = weighted_asymmetry(sch.weights(), s.Lminus);
  return k;
}

Margins nondegeneracy_margin(const LinearizedSystem& s) {
  const Vec sw = s.sch.weights().cwiseSqrt();
  auto sym = [&](const Mat& L) {
    Mat S = sw.asDiagonal() * L * sw.cwiseInverse().asDiagonal();
    return Mat(0.5 * (S + S.transpose()));
  };
  Margins m;
  Eigen::SelfAdjointEigenSolver<Mat> ep(sym(s.Lplus));
  const Vec& ev = ep.eigenvalues();
  m.lplus = ev.cwiseAbs().minCoeff();
  m.lplus_negative = ev[0];
  Eigen::SelfAdjointEigenSolver<Mat> em(sym(s.Lminus));
  Eigen::Index k = 0;
  m.lminus = em.eigenvalues().cwiseAbs().minCoeff(&k);
  const Vec e = em.eigenvectors().col(k);
  const Vec qs = sw.cwiseProduct(s.Q);
  m.lminus_overlap = std::abs(e.dot(qs)) / (e.norm() * qs.norm());
  return m;
}

GrowthProbe homogeneous_growth_probe(const LinearizedSystem& s, double v0_factor, double dr, double fit_span) {
  if (!s.spec.is_newton_limit()) throw ConfigError("growth probe is defined for the Newton kernel");
  const RadialGrid& g = s.sch.grid();
  const double R = g.r_max;
  const double M = s.sch.inner(s.Q, s.Q);
  const double q0 = center_value(g, s.Q);
  // P(r): interpolated inside the grid, M / r^2 outside
  auto Qf = [&](double r) { return r >= R ? 0.0 : interpolate_at(g, to_c(s.Q), r).real(); };
  auto Pf = [&](double r) {
    if (r >= g.nodes[g.n_points - 1]) return M / (r * r);
    return interpolate_at(g, to_c(s.V), r).real();
  };
  struct Y {
    double v, dv, m1, m3;
  };
  auto rhs = [&](double r, const Y& y) {
    const double q = Qf(r);
    const double volterra = kS3 * (y.m1 - y.m3 / (r * r));
    return Y{y.dv, -3.0 * y.dv / r + y.v - Pf(r) * y.v + 2.0 * q * volterra, r * q * y.v, r * r * r * q * y.v};
  };
  auto ax = [](const Y& y, double a, const Y& k) { return Y{y.v + a * k.v, y.dv + a * k.dv, y.m1 + a * k.m1, y.m3 + a * k.m3}; };
  const double v0 = v0_factor * q0;
  const double p0 = Pf(g.nodes[0]);
  double r = 0.01;
  const double c = (1.0 - p0) / 8.0;
  Y y{v0 * (1 + c * r * r), v0 * 2 * c * r, 0.5 * q0 * v0 * r * r, 0.25 * q0 * v0 * r * r * r * r};
  double log_scale = 0.0;
  GrowthProbe out;
  out.above_q = true;
  std::vector<double> rs, lv;
  const int steps = static_cast<int>((R - r) / dr);
  for (int k = 0; k < steps; ++k) {
    const Y k1 = rhs(r, y), k2 = rhs(r + 0.5 * dr, ax(y, 0.5 * dr, k1)), k3 = rhs(r + 0.5 * dr, ax(y, 0.5 * dr, k2)),
            k4 = rhs(r + dr, ax(y, dr, k3));
    y = Y{y.v + dr / 6 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v), y.dv + dr / 6 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv),
          y.m1 + dr / 6 * (k1.m1 + 2 * k2.m1 + 2 * k3.m1 + k4.m1), y.m3 + dr / 6 * (k1.m3 + 2 * k2.m3 + 2 * k3.m3 + k4.m3)};
    r += dr;
    // v above Q, compared on the true scale
    if (log_scale == 0.0 && !(y.v > Qf(r))) out.above_q = false;
    if (std::abs(y.v) > 1e100) {
      // renormalise; the moments enter linearly, so the whole state scales
      y = Y{y.v * 1e-100, y.dv * 1e-100, y.m1 * 1e-100, y.m3 * 1e-100};
      log_scale += 100.0 * std::log(10.0);
    }
    if (k % 10 == 0) {
      rs.push_back(r);
      lv.push_back(std::log(std::abs(y.v)) + log_scale);
    }
  }
  out.r = Eigen::Map<Vec>(rs.data(), static_cast<Eigen::Index>(rs.size()));
  out.log_abs_v = Eigen::Map<Vec>(lv.data(), static_cast<Eigen::Index>(lv.size()));
  out.fit_to = r;
  out.fit_from = r - fit_span;
  // least-squares slope of log|v| over the last fit_span
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    if (rs[i] < out.fit_from) continue;
    sx += rs[i];
    sy += lv[i];
    sxx += rs[i] * rs[i];
    sxy += rs[i] * lv[i];
    ++cnt;
  }
  out.rate = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return out;
}

ChainCheck jordan_chain_check(const LinearizedSystem& s) {
  ChainCheck c;
  std::array<CVec, 4> Hphi;
  for (int i = 0; i < 4; ++i) Hphi[i] = s.apply_H(s.phi[i]);
  c.residuals[0] = s.norm(Hphi[0]) / s.norm(s.phi[0]);
  for (int j = 1; j < 4; ++j) {
    const CVec& prev = s.phi[j - 1];
    const cplx coef = s.inner(prev, Hphi[j]) / s.inner(prev, prev);
    c.constants[j - 1] = coef;
    c.residuals[j] = s.norm(Hphi[j] - coef * prev) / s.norm(Hphi[j]);
  }
  for (int i = 0; i < 4; ++i) {
    CVec v = s.phi[i];
    for (int p = 0; p < 4; ++p) v = s.apply_H(v);
    c.nilpotency[i] = s.norm(v) / s.norm(s.phi[i]);
  }
  return c;
}

const Spectral& LinearizedSystem::spectral() const {
  std::call_once(*spectral_once, [this] {
    auto sp = std::make_shared<Spectral>();
    const int m = 2 * n();
    Eigen::EigenSolver<Mat> es(H, true);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver for H failed");
    sp->lambda = es.eigenvalues();
    sp->V = es.eigenvectors();
    sp->Vinv = sp->V.partialPivLu().inverse();
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(sp->lambda[a]) < std::abs(sp->lambda[b]); });
    sp->cluster.assign(idx.begin(), idx.begin() + 4);
    sp->rest.assign(idx.begin() + 4, idx.end());

    // The cluster eigenvalues are artefacts of a perturbed nilpotent block
    // (of order eps^(1/4)) and their eigenvectors nearly parallel; cond(V)
    // is about 1e8.  Root dynamics is therefore carried by the chain itself:
    // coordinates from the psi pairing, generator G <H phi_j, psi_i>.  The
    // splitting U G Y^T is exactly idempotent, and the pairing with smooth
    // duals filters the high-frequency part of H phi.
    sp->Pc = CMat::Zero(m, m);
    for (int k : sp->cluster) sp->Pc += sp->V.col(k) * sp->Vinv.row(k);
    CMat HPhi(m, 4);
    sp->U.resize(m, 4);
    sp->Y.resize(m, 4);
    for (int i = 0; i < 4; ++i) {
      sp->U.col(i) = phi[i];
      HPhi.col(i) = apply_H(phi[i]);
      sp->Y.col(i) = w2.cast<cplx>().cwiseProduct(psi[i]);
    }
    sp->G = (sp->Y.transpose() * sp->U).inverse();
    sp->M = sp->G * (sp->Y.transpose() * HPhi);
    spectral_data = std::move(sp);
  });
  return *spectral_data;
}

double auto_contour_radius(const LinearizedSystem& s) {
  const Spectral& sp = s.spectral();
  const double in = std::abs(sp.lambda[sp.cluster.back()]);
  const double out = std::abs(sp.lambda[sp.rest.front()]);
  // half the smallest eigenvalue outside the root cluster, unless the cluster
  // reaches that far; then the geometric mean of the gap ends
  return 0.5 * out > 2.0 * in ? 0.5 * out : std::sqrt(in * out);
}

RieszResult riesz_projection(const LinearizedSystem& s, double c) {
  const Spectral& sp = s.spectral();
  RieszResult r;
  r.c = c > 0 ? c : auto_contour_radius(s);
  const int m = 2 * s.n();
  for (int k = 0; k < m; ++k)
    if (std::abs(std::abs(sp.lambda[k]) - r.c) < 1e-6 * r.c)
      throw NumericalError("an eigenvalue of H lies on the contour |z| = c; adjust c");
  r.P = CMat::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    if (std::abs(sp.lambda[k]) >= r.c) continue;
    r.P += sp.V.col(k) * sp.Vinv.row(k);
    ++r.inside;
  }
  const cplx tr = r.P.trace();
  r.trace_re = tr.real();
  r.trace_im = tr.imag();
  const double pm = r.P.cwiseAbs().maxCoeff();
  r.idempotency = (r.P * r.P - r.P).cwiseAbs().maxCoeff() / pm;
  r.cluster_gap = (r.P - sp.Pc).cwiseAbs().maxCoeff() / pm;
  for (int i = 0; i < 4; ++i)
    r.chain_gap = std::max(r.chain_gap, s.norm(CVec(r.P * s.phi[i] - s.phi[i])) / s.norm(s.phi[i]));
  return r;
}

CVec remove_root_part(const LinearizedSystem& s, const CVec& v0) {
  const Spectral& sp = s.spectral();
  return v0 - sp.U * (sp.G * (sp.Y.transpose() * v0));
}

std::vector<CVec> propagate_linearized(const LinearizedSystem& s, const CVec& v0, const std::vector<double>& times) {
  const Spectral& sp = s.spectral();
  const CVec root = sp.G * (sp.Y.transpose() * v0);
  const CVec a = sp.Vinv * (v0 - sp.U * root);
  std::vector<CVec> out;
  out.reserve(times.size());
  for (double t : times) {
    CVec v = sp.U * ((I * t * sp.M).exp() * root);
    for (int k : sp.rest) v += sp.V.col(k) * (std::exp(I * t * sp.lambda[k]) * a[k]);
    out.push_back(std::move(v));
  }
  return out;
}

CVec pair_vector(const CVec& f) { return stack(f, f.conjugate()); }

double quadratic_form(const LinearizedSystem& s, const CVec& v) {
  const int n = s.n();
  const Vec a = v.head(n).real(), b = v.head(n).imag();
  const Vec& w = s.sch.weights();
  return a.dot(w.cwiseProduct(s.Lplus * a)) + b.dot(w.cwiseProduct(s.Lminus * b));
}

RootCoefficients root_coefficients(const LinearizedSystem& s, const CVec& F) {
  RootCoefficients rc;
  const Scheme& sch = s.sch;
  rc.rho_q = sch.inner(s.rho, s.Q);
  rc.x2q_q = sch.inner(s.x2Q, s.Q);
  rc.x2q_rho = sch.inner(s.x2Q, s.rho);
  rc.positive = rc.rho_q > 0 && rc.x2q_q > 0 && rc.x2q_rho > 0;
  const double A = rc.x2q_q, B = rc.x2q_rho, C = rc.rho_q;
  const double scale = sch.inner(s.Q, s.Q);
  if (!(std::abs(A) > 1e-12 * scale) || !(std::abs(C) > 1e-12 * scale))
    throw NumericalError("root coefficient system is singular");
  std::array<cplx, 4> f;
  for (int i = 0; i < 4; ++i) f[i] = s.pair(F, s.psi[i]);
  // <phi_4,psi_1> = 2C, <phi_3,psi_2> = 2A, <phi_2,psi_3> = -2A, <phi_4,psi_3> = 2B,
  // <phi_1,psi_4> = -2C, <phi_3,psi_4> = -2B; all other pairings vanish
  rc.b[3] = f[0] / (2.0 * C);
  rc.b[2] = f[1] / (2.0 * A);
  rc.b[1] = (2.0 * B * rc.b[3] - f[2]) / (2.0 * A);
  rc.b[0] = -(f[3] + 2.0 * B * rc.b[2]) / (2.0 * C);
  return rc;
}

std::array<double, 3> modulation_coupling(const std::array<cplx, 3>& chain) {
  // i a_j' phi_j + a_{j+1} c_j phi_j = b_j phi_j gives a_j' = i c_j a_{j+1} + b_j / i
  std::array<double, 3> k{};
  for (int j = 0; j < 3; ++j) k[j] = (I * chain[j]).real();
  return k;
}

std::array<CVec, 4> integrate_modulation(const Vec& t, const std::array<CVec, 4>& b, std::array<double, 3> coupling) {
  const Eigen::Index m = t.size();
  if (m < 2) throw ConfigError("integrate_modulation needs at least two samples");
  for (Eigen::Index i = 1; i < m; ++i)
    if (!(t[i] > t[i - 1])) throw ConfigError("integrate_modulation: times must increase");
  for (const auto& bj : b) {
    if (bj.size() != m) throw ConfigError("integrate_modulation: series length mismatch");
    // decay at least like t^-2 over the second half, where nonzero
    const Eigen::Index h = m / 2;
    const double mx = bj.cwiseAbs().maxCoeff();
    if (mx == 0.0) continue;
    if (bj.tail(m - h).cwiseAbs().minCoeff() <= 1e-300) continue;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (Eigen::Index i = h; i < m; ++i) {
      const double x = std::log(t[i]), y = std::log(std::abs(bj[i]));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double cnt = static_cast<double>(m - h);
    const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    if (slope > -1.9) throw ConfigError("integrate_modulation: b decays slower than t^-2 (tail slope " +
                                        std::to_string(slope) + ")");
  }
  std::array<CVec, 4> a;
  for (auto& aj : a) aj = CVec::Zero(m);
  for (int j = 3; j >= 0; --j) {
    for (Eigen::Index i = m - 2; i >= 0; --i) {
      auto rate = [&](Eigen::Index p) {
        cplx v = b[j][p] / I;
        if (j < 3) v += coupling[j] * a[j + 1][p];
        return v;
      };
      a[j][i] = a[j][i + 1] - 0.5 * (t[i + 1] - t[i]) * (rate(i) + rate(i + 1));
    }
  }
  return a;
}

SymmetryCheck spectral_symmetry(const LinearizedSystem& s) {
  const Spectral& sp = s.spectral();
  SymmetryCheck c;
  for (int k : sp.rest) {
    const cplx target = -std::conj(sp.lambda[k]);
    double best = kInf;
    for (int l : sp.rest) best = std::min(best, std::abs(sp.lambda[l] - target));
    c.max_defect = std::max(c.max_defect, best / std::max(1.0, std::abs(sp.lambda[k])));
    ++c.checked;
  }
  return c;
}

Mat gram_matrix(const LinearizedSystem& s) {
  Mat G(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) G(i, j) = std::abs(s.pair(s.phi[j], s.psi[i]));
  return G;
}

double gram_condition(const LinearizedSystem& s) {
  CMat G(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) G(i, j) = s.pair(s.phi[j], s.psi[i]);
  Eigen::JacobiSVD<CMat> svd(G);
  const auto& sv = svd.singularValues();
  return sv[0] / sv[3];
}

EssentialProxy essential_spectrum_proxy(const LinearizedSystem& s) {
  const Spectral& sp = s.spectral();
  EssentialProxy e;
  e.lowest_above_one = kInf;
  for (int k : sp.rest) {
    const cplx l = sp.lambda[k];
    e.max_imag = std::max(e.max_imag, std::abs(l.imag()));
    if (std::abs(l) < 1.0) ++e.inside_gap;
    else e.lowest_above_one = std::min(e.lowest_above_one, std::abs(l));
  }
  return e;
}

}  // namespace hartree
