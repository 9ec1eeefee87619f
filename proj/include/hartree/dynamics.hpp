#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "hartree/ground_state.hpp"
#include "hartree/kernels.hpp"

namespace hartree {

// Strang splitting for i u_t + Lap u + (Phi * |u|^2) u = 0 on the fv2 scheme:
// half Crank-Nicolson step, exact phase rotation, half Crank-Nicolson step.
class Propagator {
 public:
  Propagator(GridPtr grid, KernelSpec spec, const KernelOptions& kopt = {});

  const Scheme& scheme() const { return sch_; }
  const KernelSpec& spec() const { return spec_; }
  const GridPtr& grid() const { return sch_.grid_ptr(); }

  // coupling * (Phi * rho)
  Vec potential(const Vec& rho) const;
  void step(CVec& u, double dt) const;
  // linear Crank-Nicolson part alone, exp(i dt Lap)
  void linear_step(CVec& u, double dt) const;

  double mass(const CVec& u) const { return sch_.norm(u) * sch_.norm(u); }
  double energy(const CVec& u) const;
  double grad_norm(const CVec& u) const { return std::sqrt(sch_.grad_norm_sq(u)); }
  double variance(const CVec& u) const;
  // dr * |grad u| / |u| with dr the largest cell width
  double resolution_proxy(const CVec& u) const;

 private:
  struct Factor {
    CVec inv_diag;  // Thomas elimination of W - i dt/2 K
    CVec upper;
  };
  const Factor& factor(double dt) const;

  Scheme sch_;
  KernelSpec spec_;
  Mat dense_;  // deformed kernels only
  Tridiag K_;
  double dr_max_ = 0.0;
  mutable std::mutex mu_;
  mutable std::map<double, Factor> factors_;
};

struct EvolutionState {
  RadialField u;
  double t = 0.0;
  double dt = 0.0;
  double mass0 = 0.0;
  double energy0 = 0.0;
};

EvolutionState make_state(const Propagator& p, RadialField u, double t, double dt);
// one Strang step; throws NumericalError when the conservation gates fail
EvolutionState step(const Propagator& p, const EvolutionState& s, double mass_gate = 1e-6,
                    double energy_gate = 1e-4);

enum class StopReason { completed, ceiling, resolution, gate };
std::string to_string(StopReason r);

struct LogEntry {
  double t = 0.0;
  double mass = 0.0;
  double energy = 0.0;
  double variance = 0.0;
  double grad_norm = 0.0;
  double proxy = 0.0;
  int snapshot = -1;  // index into TrajectoryLog::snapshots
};

struct TrajectoryLog {
  std::vector<LogEntry> entries;
  std::vector<RadialField> snapshots;
  RadialField final_state;
  double t_final = 0.0;
  double mass0 = 0.0, energy0 = 0.0;
  double max_mass_drift = 0.0, max_energy_drift = 0.0;
  long long steps = 0, rejected = 0;
  StopReason stop = StopReason::completed;
  std::string message;

  std::size_t size() const { return entries.size(); }
};

struct EvolveOptions {
  double monitor_every = 0.0;  // physical time between samples; 0 samples every step
  int snapshot_every = 0;      // keep every m-th monitor sample; 0 keeps none
  double adaptive_tol = 0.0;   // step-doubling local error bound; 0 disables
  double min_dt = 1e-12;
  double mass_gate = 1e-6;
  double energy_gate = 1e-4;
  bool throw_on_gate = true;
  bool blowup_stops = false;   // honour the ceiling and the resolution proxy
  double grad_ceiling = 1e3;   // times the initial gradient norm
  double proxy_limit = 0.5;
  long long max_steps = 10'000'000;
};

// t1 < t0 runs backwards; dt is a magnitude
TrajectoryLog evolve(const Propagator& p, const RadialField& u0, double t0, double t1, double dt,
                     const EvolveOptions& opt = {});
TrajectoryLog evolve(const RadialField& u0, double t0, double t1, double dt, const KernelSpec& spec,
                     const EvolveOptions& opt = {});

void write_log_csv(const std::string& path, const TrajectoryLog& log);
// samples through an exact solution, used for fits against closed forms
TrajectoryLog log_from_samples(const Propagator& p, const std::vector<double>& t,
                               const std::vector<RadialField>& fields);

// The closed form t^-2 Q(x/t) exp(i/t - i|x|^2/4t) as printed solves the
// time-reflected equation; `forward` is its conjugate, the solution of
// i u_t + Lap u + (|x|^-2 * |u|^2) u = 0 that concentrates as t -> 0-.
enum class SConvention { as_printed, forward };
RadialField exact_S(double t, const GridPtr& grid, const GroundState& q,
                    SConvention conv = SConvention::as_printed);
// same for a profile given on its own grid
RadialField exact_S(double t, const GridPtr& grid, const RadialField& q, SConvention conv);

// forward: u(x) = t^-2 e^{i|x|^2/4t} v(x/t), v taken at s = -1/t.
// inverse: the v that forward maps to the given u.  Result on the input grid.
enum class PcDirection { forward, inverse };
RadialField pseudo_conformal(const RadialField& f, double t, PcDirection dir);

struct VirialCheck {
  double deviation = 0.0;      // max |V'' - 16 E0| / scale
  double max_abs = 0.0;        // max |V'' - 16 E0|
  double scale = 0.0;          // max(16 |E0|, 16e-3 |grad u0|^2)
  bool concave = false;
  std::vector<double> t, second_diff;
};
VirialCheck virial_check(const TrajectoryLog& log);

struct BlowupFit {
  double exponent = 0.0;
  double constant = 0.0;
  bool monotone = true;
  int used = 0;
  double t_a = 0.0, t_b = 0.0;
  double max_proxy = 0.0;
};
// slope of log |grad u| against log |t - t_star| on samples with t in [t_a, t_b]
BlowupFit blowup_rate_fit(const TrajectoryLog& log, double t_a, double t_b, double t_star = 0.0);
// the latest stretch of the log whose proxy stays below `limit`, spanning
// `ratio` in |t - t_star|
std::pair<double, double> resolved_window(const TrajectoryLog& log, double limit = 0.5, double ratio = 3.0,
                                          double t_star = 0.0);

// Relative equilibrium of the discrete Strang map: S_dt(w) = e^{i omega dt} w,
// gauge-fixed by Im <q0, w> = 0.  Removes the O(dt^2) splitting mismatch of a
// stationary profile so that long soliton runs stay at round-off level.
struct StrangSoliton {
  CVec profile;
  double omega = 1.0;
  double residual = 0.0;  // |S_dt(w) e^{-i omega dt} - w| / |w|
  int iterations = 0;
};
StrangSoliton strang_soliton(const Propagator& p, const Vec& q0, double dt, double omega = 1.0, int max_iter = 8);

// Newton kernel only.  v solves the same equation in s = -1/t and
// u(t,x) = t^-2 e^{i|x|^2/4t} v(-1/t, x/t); the returned log holds the u
// quantities at t = -1/s, computed nodewise on the rescaled grid.  The proxy is
// that of u on the rescaled grid.
TrajectoryLog to_physical_frame(const Propagator& p, const TrajectoryLog& vlog);
TrajectoryLog evolve_pseudo_conformal(const Propagator& p, const RadialField& v0, double s0, double s1, double ds,
                                      EvolveOptions opt = {});

// least-squares log-log slope of |psi| for r in (0, r_probe]
double origin_slope(const RadialField& psi, double r_probe = 0.3);

struct ZOptions {
  int samples = 8;          // monitor samples per side
  double dt = 1e-4;
  double r_probe = 0.3;
};
// evolves z from psi at t = 0 to +delta0 and -delta0; the log is sorted in t
// and every entry carries a snapshot.  N sets the flatness precondition.
TrajectoryLog z_psi_evolve(const RadialField& psi, double delta0, const KernelSpec& spec, int N,
                           const ZOptions& opt = {});

struct FlatnessResult {
  bool pass = false;
  double C = 0.0;
  double worst_t = 0.0, worst_x = 0.0;
  int probes = 0;
};
// |z(t,x)| <= C sum_{2l+j=2N} |t|^l |x|^j over the logged times and x in [x_lo, x_hi]
FlatnessResult flatness_bound(const TrajectoryLog& log, int N, double x_lo = 0.02, double x_hi = 1.0,
                              int nx = 12);
bool flatness_check(const TrajectoryLog& log, int N);

}  // namespace hartree
