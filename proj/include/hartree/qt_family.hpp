#pragma once

#include <string>
#include <vector>

#include "hartree/kernels.hpp"
#include "hartree/scheme.hpp"

namespace hartree {

// -Lap u + u = (Phi_t * u^2) u with Phi_t = phi(|x|^k / t^k) / |x|^2, on one scheme
struct QtOperator {
  Scheme sch;
  KernelSpec spec;
  Mat N;
  Helmholtz A;  // -Lap + 1
};
QtOperator make_qt_operator(const Scheme& sch, const KernelSpec& spec, const KernelOptions& opt = {});

// G(u) = u + (-Lap + 1)^{-1} g(u), g(u) = -(Phi_t * u^2) u
Vec residual_G(const QtOperator& op, const Vec& u);
// |G(u)| / |u| in the weighted L2 norm; 0 for u = 0
double relative_G(const QtOperator& op, const Vec& u);

struct QtOptions {
  double tol = 1e-8;    // relative residual of G
  int max_newton = 20;
  bool polish = true;   // keep stepping past tol down to the round-off floor
  double polish_floor = 1e-12;  // below this an init is left alone even when polishing
  double min_dtau = 1e-7;
  KernelOptions kernel;
};

struct QtSolve {
  Vec profile;
  double residual = 0;
  int steps = 0;
  bool converged = false;
  std::vector<double> history;  // residual before each step, then the final one
};

// Newton-Kantorovich on G(., tau) = 0.  An init that already meets tol is
// returned untouched.
QtSolve solve_Qt(const QtOperator& op, const Vec& init, const QtOptions& opt = {});

struct ProfileFamily {
  double k = 5;
  std::string phi_name;
  Scheme sch;
  Vec q_inf;
  std::vector<double> t_samples;  // increasing
  std::vector<Vec> profiles;
  std::vector<double> residuals;
  std::vector<int> newton_steps;
  double T0 = kInf;  // smallest t reached (empirical proxy)
  double noise_floor = 1e-11;
  int halvings = 0;

  explicit ProfileFamily(Scheme s) : sch(std::move(s)) {}
  std::size_t size() const { return t_samples.size(); }
  double h1_distance(std::size_t i) const;
};

// t_list strictly decreasing; each t is reached from the previous one by
// warm-started Newton, halving the tau step on failure
ProfileFamily continuation_sweep(const Scheme& sch, const Vec& q_inf, double k, const Phi& phi,
                                 const std::vector<double>& t_list, const QtOptions& opt = {});

struct DecayFit {
  double slope = 0;
  double intercept = 0;
  bool degenerate = false;  // fewer than three usable points
  int dropped = 0;          // interior points whose differences sit at the noise floor
  std::vector<double> t, dt_norm;  // interior samples and |d_t Q|_{H^1}
};
// central differences over the samples, least squares in log-log; points where
// |Q_{i+1} - Q_{i-1}|_{H^1} <= noise_floor |Q_inf|_{H^1} are left out of the fit
DecayFit dt_decay_exponent(const ProfileFamily& f);

struct EnvelopeCheck {
  double delta = 0;
  double C = 0;
  bool pass = false;
  std::vector<double> rates;  // tail rate of each sample
};
// one (C, delta) over all samples; passes when every sample decays with a
// positive rate and the rates agree within `spread` (min/max)
EnvelopeCheck uniform_decay_check(const Scheme& sch, const std::vector<Vec>& profiles, double spread = 0.8);
EnvelopeCheck uniform_decay_check(const ProfileFamily& f, double spread = 0.8);

}  // namespace hartree
