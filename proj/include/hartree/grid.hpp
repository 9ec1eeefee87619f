#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>

#include "hartree/core.hpp"

namespace hartree {

enum class Spacing { uniform, stretched };

std::string to_string(Spacing s);
Spacing spacing_from_string(const std::string& s);

// Cell-centred radial grid on [0, r_max].  Cell i spans [faces[i], faces[i+1]];
// node i is the cell midpoint and weights[i] the exact 4-ball shell volume of
// the cell, so the weights sum to pi^2 r_max^4 / 2 up to rounding.
struct RadialGrid {
  int n_points = 0;
  double r_max = 0.0;
  Spacing spacing = Spacing::uniform;
  double stretch = 1.0;
  Vec nodes;
  Vec faces;      // n_points + 1 entries, faces[0] = 0, faces[n] = r_max
  Vec weights;
  Vec face_area;  // 2 pi^2 f^3 at each face
  Vec face_dist;  // distance between the centres adjacent to each face; at r_max, r_max - r_{n-1}

  int size() const { return n_points; }
  bool is_uniform() const { return spacing == Spacing::uniform; }
  double h() const;  // cell width of a uniform grid
  std::uint64_t hash() const;
};

using GridPtr = std::shared_ptr<const RadialGrid>;

// stretch > 1 makes every cell `stretch` times wider than the previous one
GridPtr make_grid(int n_points, double r_max, Spacing spacing = Spacing::uniform,
                  double stretch = 1.0);

struct RadialField {
  GridPtr grid;
  CVec values;

  RadialField() = default;
  RadialField(GridPtr g, CVec v);
  RadialField(GridPtr g, const Vec& v);

  static RadialField zeros(GridPtr g);
  int size() const { return static_cast<int>(values.size()); }
  Vec real() const { return values.real(); }
  Vec abs2() const { return values.cwiseAbs2(); }
  bool is_real(double tol = 0.0) const;
};

template <class F>
RadialField sample(const GridPtr& g, F&& f) {
  CVec v(g->n_points);
  for (int i = 0; i < g->n_points; ++i) v[i] = f(g->nodes[i]);
  return RadialField(g, std::move(v));
}

cplx integrate(const RadialField& f);
double mass(const RadialField& f);
double variance(const RadialField& f);
double grad_norm_sq(const RadialField& f);
RadialField laplacian_radial(const RadialField& f);

// g(r) = lambda^p f(lambda r) by cubic interpolation; zero beyond r_max
RadialField resample(const RadialField& f, double lambda, int amplitude_power);

// cubic interpolation of nodal values at arbitrary radii.  The even mirror at
// the origin and a zero Dirichlet value at r_max close the stencil.
CVec interpolate(const RadialGrid& g, const CVec& values, const Vec& r);
Vec interpolate(const RadialGrid& g, const Vec& values, const Vec& r);
cplx interpolate_at(const RadialGrid& g, const CVec& values, double r);

// nodal values transferred to another grid
RadialField transfer(const RadialField& f, const GridPtr& target);

// fv2 stiffness (symmetric tridiagonal): <f, Lap g>_w = f^T K g
struct Tridiag {
  Vec diag;
  Vec off;  // off[i] couples i and i+1
};
Tridiag fv2_stiffness(const RadialGrid& g);

// central difference r d/dr with even mirror at 0 and odd mirror at r_max
Vec fv2_r_dr(const RadialGrid& g, const Vec& f);
CVec fv2_grad(const RadialGrid& g, const CVec& f);

void write_field_csv(const std::string& path, const RadialField& f);
RadialField read_field_csv(const std::string& path);
void write_grid_header(std::ostream& os, const RadialGrid& g);

}  // namespace hartree
