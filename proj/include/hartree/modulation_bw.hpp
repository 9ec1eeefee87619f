#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "hartree/dynamics.hpp"
#include "hartree/linearized.hpp"

namespace hartree {

// Modulation of the rescaled-frame solution
//   v(s,y) = e^{i(s+gamma)} [W_lambda(y) + eps(s,y)] + zeta(s,y),
// W_lambda(y) = lambda^2 W(lambda y), against a reference soliton W, and
// zeta(s,y) = s^-2 e^{i y^2/4s} z(-1/s, y/s) for a radiation profile z that
// solves the equation on its own.

// v grid: stretched cells of first width h0 growing by `stretch`, out to
// r_max; the leading cells up to r_core carry the reference soliton and the
// linearization.  stretch = 1 gives a uniform grid.
struct BwGrid {
  double h0 = 0.02;
  double stretch = 1.000215;
  double r_max = 0.0;  // 0: chosen from the radiation support and s1
  double r_core = 25.0;
};

struct BwReference {
  GridPtr grid;
  GridPtr core;
  int m = 0;          // core cells
  CVec profile;       // W on the core
  Vec q;              // real ground state on the core
  std::shared_ptr<const LinearizedSystem> sys;
  double ds = 0.0;    // Strang step W is an equilibrium of; 0 when W is the ground state
};

// ds > 0 replaces the ground state by the Strang relative equilibrium for that step
BwReference make_bw_reference(const BwGrid& g, double ds = 0.0);
// W_lambda on the full grid (zero beyond the core)
CVec dilate(const BwReference& ref, double lambda);

struct ModulationRecord {
  double s = 0.0;
  double lambda = 1.0;
  double gamma = 0.0;       // wrapped to (-pi, pi]
  double eps_h1 = 0.0;
  double eps_weighted = 0.0;  // | |y| eps |
  std::array<cplx, 4> b{};    // root coefficients of eps on the core
  double residual = 0.0;      // |reconstruction - v| / |v|
  double gamma1_dot = 0.0;    // gamma1_rate at this time, when radiation is present
  int iterations = 0;
};

struct Decomposition {
  ModulationRecord record;
  CVec eps;
  double gamma_unwrapped = 0.0;
};

// Newton left the tube; `last` is the final iterate
struct TubeExit : NumericalError {
  TubeExit(const std::string& what, ModulationRecord r) : NumericalError(what), last(r) {}
  ModulationRecord last;
};

struct DecomposeOptions {
  double lambda0 = 1.0, gamma0 = 0.0;  // initial guess
  double tube = 0.5;                   // |eps| / |W| allowed
  int max_iter = 40;
};

// (lambda, gamma) from <Re eps, |y|^2 Q> = 0 and <Im eps, rho> = 0 on the core
Decomposition decompose(const RadialField& v, double s, const BwReference& ref, const CVec* zeta = nullptr,
                        const DecomposeOptions& opt = {});
CVec reconstruct(const BwReference& ref, double s, double lambda, double gamma, const CVec& eps,
                 const CVec* zeta = nullptr);

// z on its own grid, sampled every dt backward from t = 0
struct ZFrame {
  Scheme sch;
  double dt = 0.0;
  std::vector<CVec> z;  // z[k] at t = -k dt
  double t_min() const { return -dt * static_cast<double>(z.size() - 1); }
  CVec at(double t) const;  // cubic in time
};
ZFrame make_z_frame(const RadialField& psi, double t_min, double dt);
// zeta(s, .) on g
CVec zeta_field(const ZFrame& zf, double s, const GridPtr& g);

// s^-2 P[|z|^2](-1/s, 0) + P[2 Re(e^{i(s+gamma)} eps conj zeta)](s, 0), P the
// equation's own convolution
double gamma1_rate(const ZFrame& zf, const RadialField& eps, double gamma, double s);

// radius the run needs: where |psi0| falls below 1e-10 of its peak, times s1
double bw_auto_radius(const RadialField& psi0, double s1, const BwGrid& g);

// r^{2N} e^{-r^2} scaled to unit maximum
RadialField poly_profile(const GridPtr& g, int N);

struct BwConfig {
  int N = 6;               // flatness demanded of psi
  double alpha0 = 1e-2;
  double ds = 0.02;
  double monitor_every = 1.0;
  double z_dt = 1e-4;
  BwGrid grid;
  double tube = 0.5;
};

struct BwRun {
  std::vector<ModulationRecord> records;
  bool tube_exit = false;
  std::string message;
  double max_mass_drift = 0.0;
  int grid_points = 0;
  double r_max = 0.0;
  long long steps = 0;
};

// v(s0) = e^{i s0} W + zeta(s0) with z from psi = alpha psi0, evolved to s1 in
// the rescaled frame.  Reuses `ref` when given (its ds must match).
BwRun bw_simulate(const RadialField& psi0, double alpha, double s0, double s1, const BwConfig& cfg = {},
                  const BwReference* ref = nullptr);

struct SeriesFit {
  double slope = 0.0;
  double bound = 0.0;  // largest value of the normalized series
  int used = 0;
};
struct BwTrend {
  SeriesFit gamma;     // |gamma| s
  SeriesFit eps;       // eps_h1 s^3
  SeriesFit lambda;    // |lambda - 1| s^3
  SeriesFit weighted;  // eps_weighted s^2, reported only
  bool pass = false;
};
// log-log fits over the records after the first
BwTrend bw_trend(const std::vector<ModulationRecord>& records, double max_slope = 0.3);

void write_records_csv(const std::string& path, const std::vector<ModulationRecord>& records);

}  // namespace hartree
