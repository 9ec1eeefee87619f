#pragma once

#include <memory>

#include <Eigen/Sparse>

#include "hartree/grid.hpp"

namespace hartree {

using SpMat = Eigen::SparseMatrix<double>;

// fv2: the second-order finite-volume model of grid_quadrature (exact cell
//      volumes, tridiagonal Laplacian, point-rule Newton potential).
// fv4: fourth-order variant on uniform grids for stationary and spectral
//      work.  Interior flux stencil of width four, with the first four rows of
//      the stiffness matrix and the first four weights re-fitted so that
//      1, r^2, r^4 are differentiated exactly there; the Newton potential is
//      obtained from a Poisson solve with the same stiffness matrix.
enum class SchemeKind { fv2, fv4 };

std::string to_string(SchemeKind k);
SchemeKind scheme_from_string(const std::string& s);

class Helmholtz;

class Scheme {
 public:
  explicit Scheme(GridPtr grid, SchemeKind kind = SchemeKind::fv2);

  SchemeKind kind() const;
  const GridPtr& grid_ptr() const;
  const RadialGrid& grid() const { return *grid_ptr(); }
  int size() const { return grid().n_points; }
  const Vec& nodes() const { return grid().nodes; }

  const Vec& weights() const;
  // symmetric; <f, Lap g>_w = f^T K g
  const SpMat& stiffness() const;

  Vec laplacian(const Vec& f) const;
  CVec laplacian(const CVec& f) const;
  Mat laplacian_matrix() const;

  double inner(const Vec& a, const Vec& b) const { return (weights().array() * a.array() * b.array()).sum(); }
  cplx inner(const CVec& a, const CVec& b) const;  // sum w conj(a) b
  double norm(const Vec& a) const { return std::sqrt(inner(a, a)); }
  double norm(const CVec& a) const;
  double integral(const Vec& a) const { return weights().dot(a); }
  double grad_norm_sq(const Vec& f) const;
  double grad_norm_sq(const CVec& f) const;
  double h1_norm(const Vec& f) const { return std::sqrt(inner(f, f) + grad_norm_sq(f)); }

  Vec r_dr(const Vec& f) const;

  // (|x|^-2 * rho)(r_i) for a real density
  Vec potential(const Vec& rho) const;
  // value at the origin, the constant term of the radial Newton formula
  double potential_at_origin(const Vec& rho) const;
  // dense N with N rho = potential(rho); diag(w) N is symmetric
  Mat potential_matrix() const;

  // (-Lap + mu) u = f
  Helmholtz helmholtz(double mu) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

class Helmholtz {
 public:
  Vec solve(const Vec& f) const;
  double mu() const { return mu_; }

 private:
  friend class Scheme;
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  double mu_ = 0.0;
};

// O(n) point-rule Newton potential with weights v: sum_j v_j rho_j / max(r_i, r_j)^2
Vec point_rule_potential(const Vec& r, const Vec& v, const Vec& rho);

}  // namespace hartree
