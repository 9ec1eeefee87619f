#include "hartree/scheme.hpp"

#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SVD>

namespace hartree {

std::string to_string(SchemeKind k) { return k == SchemeKind::fv2 ? "fv2" : "fv4"; }

SchemeKind scheme_from_string(const std::string& s) {
  if (s == "fv2") return SchemeKind::fv2;
  if (s == "fv4") return SchemeKind::fv4;
  throw ConfigError("unknown scheme '" + s + "'");
}

using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>>;

namespace {

constexpr int kClosureRows = 4;

// Face gradient of width four on a uniform grid of n cells, h = 1, with the
// even mirror at the origin and the odd mirror at the outer boundary.
std::vector<Eigen::Triplet<double>> face_gradient(int n, double h) {
  static const double c[4] = {1.0, -27.0, 27.0, -1.0};
  std::vector<Eigen::Triplet<double>> t;
  for (int j = 0; j <= n; ++j) {
    for (int k = 0; k < 4; ++k) {
      int cell = j - 2 + k;
      double s = 1.0;
      if (cell < 0) {
        cell = -1 - cell;
      } else if (cell >= n) {
        cell = 2 * n - 1 - cell;
        s = -1.0;
      }
      t.emplace_back(j, cell, s * c[k] / (24.0 * h));
    }
  }
  return t;
}

SpMat interior_stiffness(int n, double h) {
  SpMat D(n + 1, n);
  auto t = face_gradient(n, h);
  D.setFromTriplets(t.begin(), t.end());
  Vec a(n + 1);
  for (int j = 0; j <= n; ++j) a[j] = kS3 * std::pow(j * h, 3) * h;
  SpMat K = -(SpMat(D.transpose()) * a.asDiagonal() * D);
  K.prune(0.0);
  return K;
}

struct Closure {
  Mat K;  // kClosureRows x kClosureRows block, h = 1
  Vec w;  // kClosureRows weights, h = 1
};

// Replace the leading block and weights by the smallest change that makes
// rows i < m exact on 1, r^2, r^4.  Computed once at h = 1 and scaled by
// h^2 (stiffness) and h^4 (weights).
Closure compute_closure() {
  const int m = kClosureRows, n = 60;
  const Mat K = Mat(interior_stiffness(n, 1.0));
  Vec r(n), w(n);
  for (int i = 0; i < n; ++i) {
    r[i] = i + 0.5;
    w[i] = kS3 * std::pow(r[i], 3);
  }
  std::vector<std::pair<int, int>> free;
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) free.emplace_back(i, j);
  const int nk = static_cast<int>(free.size());
  const int nq = 3;
  Mat E = Mat::Zero(nq * m, nk + m);
  Vec b = Vec::Zero(nq * m);
  for (int q = 0; q < nq; ++q) {
    Vec p(n), lap(n);
    for (int i = 0; i < n; ++i) {
      p[i] = std::pow(r[i], 2 * q);
      lap[i] = q == 0 ? 0.0 : (2.0 * q) * (2.0 * q + 2.0) * std::pow(r[i], 2 * q - 2);
    }
    for (int i = 0; i < m; ++i) {
      const int row = q * m + i;
      double fixed = 0.0;
      for (int j = m; j < n; ++j) fixed += K(i, j) * p[j];
      for (int t = 0; t < nk; ++t) {
        auto [ii, jj] = free[t];
        if (ii == i) E(row, t) += p[jj];
        if (jj == i && ii != jj) E(row, t) += p[ii];
      }
      E(row, nk + i) = -lap[i];
      b[row] = -fixed;
    }
  }
  Vec x0(nk + m);
  for (int t = 0; t < nk; ++t) x0[t] = K(free[t].first, free[t].second);
  for (int i = 0; i < m; ++i) x0[nk + i] = w[i];
  Eigen::JacobiSVD<Mat> svd(E, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec x = x0 + svd.solve(b - E * x0);
  Closure c{Mat::Zero(m, m), Vec::Zero(m)};
  for (int t = 0; t < nk; ++t) {
    auto [i, j] = free[t];
    c.K(i, j) = c.K(j, i) = x[t];
  }
  c.w = x.tail(m);
  return c;
}

const Closure& closure() {
  static const Closure c = compute_closure();
  return c;
}

SpMat tridiag_matrix(const Tridiag& t) {
  const int n = static_cast<int>(t.diag.size());
  std::vector<Eigen::Triplet<double>> tr;
  for (int i = 0; i < n; ++i) {
    tr.emplace_back(i, i, t.diag[i]);
    if (i + 1 < n) {
      tr.emplace_back(i, i + 1, t.off[i]);
      tr.emplace_back(i + 1, i, t.off[i]);
    }
  }
  SpMat K(n, n);
  K.setFromTriplets(tr.begin(), tr.end());
  return K;
}

}  // namespace

Vec point_rule_potential(const Vec& r, const Vec& v, const Vec& rho) {
  const Eigen::Index n = r.size();
  Vec out(n);
  // inner mass over r_i^2 plus outer tail sum_{j > i} v rho / r_j^2; j = i counts as inner
  double tail = 0.0;
  Vec t(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    t[i] = tail;
    tail += v[i] * rho[i] / (r[i] * r[i]);
  }
  double inner = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    inner += v[i] * rho[i];
    out[i] = inner / (r[i] * r[i]) + t[i];
  }
  return out;
}

struct Scheme::Impl {
  GridPtr grid;
  SchemeKind kind;
  Vec w;
  SpMat K;
  // fv4 Poisson machinery
  std::shared_ptr<Ldlt> negK;
  Vec ptilde;
  Vec w_ptilde;
};

struct Helmholtz::Impl {
  Ldlt ldlt;
  Vec w;
};

Scheme::Scheme(GridPtr grid, SchemeKind kind) {
  auto p = std::make_shared<Impl>();
  p->grid = std::move(grid);
  p->kind = kind;
  const RadialGrid& g = *p->grid;
  const int n = g.n_points;
  if (kind == SchemeKind::fv2) {
    p->w = g.weights;
    p->K = tridiag_matrix(fv2_stiffness(g));
  } else {
    if (!g.is_uniform()) throw ConfigError("the fv4 scheme needs a uniform grid");
    if (n < 16) throw ConfigError("the fv4 scheme needs at least 16 points");
    const double h = g.h();
    SpMat K = interior_stiffness(n, h);
    const Closure& c = closure();
    const int m = kClosureRows;
    Mat Kd = Mat(K.topLeftCorner(m + 3, m + 3));
    Kd.topLeftCorner(m, m) = c.K * (h * h);
    std::vector<Eigen::Triplet<double>> tr;
    for (int k = 0; k < K.outerSize(); ++k)
      for (SpMat::InnerIterator it(K, k); it; ++it)
        if (it.row() >= m || it.col() >= m) tr.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) tr.emplace_back(i, j, Kd(i, j));
    p->K.resize(n, n);
    p->K.setFromTriplets(tr.begin(), tr.end());
    p->w.resize(n);
    for (int i = 0; i < n; ++i) p->w[i] = kS3 * std::pow(g.nodes[i], 3) * h;
    p->w.head(m) = c.w * std::pow(h, 4);
    for (int i = 0; i < n; ++i)
      if (!(p->w[i] > 0)) throw NumericalError("fv4 closure produced a non-positive weight");

    SpMat negK = -p->K;
    p->negK = std::make_shared<Ldlt>(negK);
    if (p->negK->info() != Eigen::Success) throw NumericalError("fv4 stiffness factorization failed");
    // reference density eta = e^{-r^2}/pi^2 of unit integral, exact potential (1 - e^{-r^2})/r^2
    const Vec& r = g.nodes;
    Vec eta(n), peta(n);
    for (int i = 0; i < n; ++i) {
      eta[i] = std::exp(-r[i] * r[i]) / kPi2;
      peta[i] = -std::expm1(-r[i] * r[i]) / (r[i] * r[i]);
    }
    const Vec y = p->negK->solve(Vec(p->w.cwiseProduct(eta)));
    p->ptilde = peta - 4.0 * kPi2 * y;
    p->w_ptilde = p->w.cwiseProduct(p->ptilde);
  }
  impl_ = std::move(p);
}

SchemeKind Scheme::kind() const { return impl_->kind; }
const GridPtr& Scheme::grid_ptr() const { return impl_->grid; }
const Vec& Scheme::weights() const { return impl_->w; }
const SpMat& Scheme::stiffness() const { return impl_->K; }

Vec Scheme::laplacian(const Vec& f) const { return (impl_->K * f).cwiseQuotient(impl_->w); }

CVec Scheme::laplacian(const CVec& f) const {
  CVec out = impl_->K.cast<cplx>() * f;
  return out.cwiseQuotient(impl_->w.cast<cplx>());
}

Mat Scheme::laplacian_matrix() const { return impl_->w.cwiseInverse().asDiagonal() * Mat(impl_->K); }

cplx Scheme::inner(const CVec& a, const CVec& b) const {
  return (impl_->w.cast<cplx>().array() * a.conjugate().array() * b.array()).sum();
}

double Scheme::norm(const CVec& a) const { return std::sqrt(impl_->w.dot(a.cwiseAbs2())); }

double Scheme::grad_norm_sq(const Vec& f) const { return -f.dot(impl_->K * f); }

double Scheme::grad_norm_sq(const CVec& f) const {
  return grad_norm_sq(Vec(f.real())) + grad_norm_sq(Vec(f.imag()));
}

Vec Scheme::r_dr(const Vec& f) const {
  const RadialGrid& g = grid();
  if (impl_->kind == SchemeKind::fv2) return fv2_r_dr(g, f);
  const int n = g.n_points;
  const double h = g.h();
  // fourth-order central difference on the mirrored array
  Vec e(n + 4);
  e[0] = f[1];
  e[1] = f[0];
  e.segment(2, n) = f;
  e[n + 2] = -f[n - 1];
  e[n + 3] = -f[n - 2];
  Vec out(n);
  for (int i = 0; i < n; ++i)
    out[i] = g.nodes[i] * (e[i] - 8.0 * e[i + 1] + 8.0 * e[i + 3] - e[i + 4]) / (12.0 * h);
  return out;
}

Vec Scheme::potential(const Vec& rho) const {
  const Impl& p = *impl_;
  if (p.kind == SchemeKind::fv2) return point_rule_potential(p.grid->nodes, p.w, rho);
  Vec out = 4.0 * kPi2 * p.negK->solve(Vec(p.w.cwiseProduct(rho)));
  const double m0 = p.w.dot(rho), m1 = p.w_ptilde.dot(rho);
  out += 0.5 * (m0 * p.ptilde + Vec::Constant(rho.size(), m1));
  return out;
}

double Scheme::potential_at_origin(const Vec& rho) const {
  const Impl& p = *impl_;
  if (p.kind == SchemeKind::fv2) {
    const Vec& r = p.grid->nodes;
    return (p.w.array() * rho.array() / r.array().square()).sum();
  }
  // quadratic extrapolation in r^2 of the nodal potential
  const Vec P = potential(rho);
  const Vec& r = p.grid->nodes;
  const double x0 = r[0] * r[0], x1 = r[1] * r[1], x2 = r[2] * r[2];
  return P[0] * x1 * x2 / ((x0 - x1) * (x0 - x2)) + P[1] * x0 * x2 / ((x1 - x0) * (x1 - x2)) +
         P[2] * x0 * x1 / ((x2 - x0) * (x2 - x1));
}

Mat Scheme::potential_matrix() const {
  const Impl& p = *impl_;
  const int n = size();
  const Vec& r = p.grid->nodes;
  Mat N(n, n);
  if (p.kind == SchemeKind::fv2) {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double m = std::max(r[i], r[j]);
        N(i, j) = p.w[j] / (m * m);
      }
    return N;
  }
  Mat rhs = Mat(p.w.asDiagonal());
  N = 4.0 * kPi2 * p.negK->solve(rhs);
  N += 0.5 * (p.ptilde * p.w.transpose() + Vec::Ones(n) * p.w_ptilde.transpose());
  return N;
}

Helmholtz Scheme::helmholtz(double mu) const {
  Helmholtz hz;
  auto p = std::make_shared<Helmholtz::Impl>();
  SpMat A = -impl_->K;
  for (int i = 0; i < size(); ++i) A.coeffRef(i, i) += mu * impl_->w[i];
  p->ldlt.compute(A);
  if (p->ldlt.info() != Eigen::Success) throw NumericalError("Helmholtz factorization failed");
  p->w = impl_->w;
  hz.impl_ = std::move(p);
  hz.mu_ = mu;
  return hz;
}

Vec Helmholtz::solve(const Vec& f) const { return impl_->ldlt.solve(Vec(impl_->w.cwiseProduct(f))); }

}  // namespace hartree
