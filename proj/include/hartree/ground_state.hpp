#pragma once

#include <string>
#include <vector>

#include "hartree/scheme.hpp"

namespace hartree {

enum class GsMethod { shooting, gradient_flow, petviashvili, newton };
std::string to_string(GsMethod m);

// Solution of -Lap Q + Q = (|x|^-2 * Q^2) Q on a scheme
struct GroundState {
  RadialField profile;
  SchemeKind scheme = SchemeKind::fv4;
  double eigenvalue = -1.0;
  double center_value = 0.0;
  double mass = 0.0;
  double energy = 0.0;
  double grad_norm_sq = 0.0;
  GsMethod method = GsMethod::shooting;
  double residual = 0.0;  // max-norm of the discrete residual over max Q
  int iterations = 0;
  // shooting only: the continuum profile before the discrete polish, and the
  // converged shooting amplitude u(0) before rescaling
  RadialField unpolished;
  double shooting_u0 = 0.0;
  double shooting_mu = 0.0;
};

enum class ShotClass { crosses_zero, diverges, undetermined };
std::string to_string(ShotClass c);

// RK4 trajectory of u'' + 3u'/r = -u + (int_0^r K(r,s) u^2 ds) u from u(0) = u0
struct Shot {
  Vec r, u, du;
  ShotClass cls = ShotClass::undetermined;
  double event_r = 0.0;
};

// integration stops at the first sign change or when u exceeds 1e3 u0
Shot shoot(double u0, double r_max, double dr = 1e-3);
// nodal samples by cubic Hermite interpolation, zero past the last point
Vec sample_shot(const Shot& s, const Vec& r);
RadialField shot_field(const Shot& s, const GridPtr& grid);

struct ShootingOptions {
  double lo = 0.05;
  double hi = 1.0;
  double tol = 1e-15;  // relative bracket width
  double r_max = 60.0;
  double dr = 2e-3;
  bool polish = true;  // Newton on the discrete equation afterwards
  int max_bisections = 200;
};

GroundState find_ground_state_shooting(const Scheme& sch, const ShootingOptions& opt = {});

struct FlowOptions {
  double dt = 0.5;
  double tol = 1e-10;  // residual relative to the peak
  int max_steps = 20000;
  int growth_window = 10000;
};

// semi-implicit normalized gradient flow; each step rescales onto the Nehari set
GroundState find_ground_state_gradient_flow(const Scheme& sch, const RadialField& init,
                                            const FlowOptions& opt = {});

// Petviashvili iteration, O(n) per step; used for large grids where dense
// Newton is out of reach
GroundState find_ground_state_petviashvili(const Scheme& sch, const RadialField& init, double tol = 1e-11,
                                           int max_steps = 2000);

// dense Newton on the discrete equation; quadratically convergent near Q
GroundState newton_refine(const Scheme& sch, const RadialField& init, double tol = 1e-13, int max_steps = 20);

Vec stationary_residual(const Scheme& sch, const Vec& q);
double relative_residual(const Scheme& sch, const Vec& q);

// Q(0) from the quadratic in r^2 through the first three nodes
double center_value(const RadialGrid& g, const Vec& q);

// E(u) = 1/2 |grad u|^2 - g/4 int (|x|^-2 * |u|^2) |u|^2
double energy(const Scheme& sch, const CVec& u, double coupling = 1.0);
double hartree_term(const Scheme& sch, const CVec& u);  // int (|x|^-2 * |u|^2) |u|^2

double weinstein_functional(const Scheme& sch, const CVec& f);
double gwp_margin(const Scheme& sch, const CVec& u, const GroundState& q);

GroundState finalize(const Scheme& sch, Vec q, GsMethod method, int iterations);

}  // namespace hartree
