#pragma once

#include <string>
#include <vector>

#include "hartree/grid.hpp"
#include "hartree/scheme.hpp"

namespace hartree {

enum class KernelKind { newton, deformed };

// profile function phi of the deformed kernel phi(|x|^k / t^k) / |x|^2
class Phi {
 public:
  enum class Choice { one, rational, exponential, tabulated };

  Phi() = default;
  static Phi one() { return Phi(Choice::one); }
  static Phi rational() { return Phi(Choice::rational); }
  static Phi exponential() { return Phi(Choice::exponential); }
  // piecewise-linear in u through the samples, constant beyond the last one
  static Phi tabulated(std::vector<double> u, std::vector<double> v);
  // "one", "rational", "exp", or "table:FILE" (two columns u v)
  static Phi from_name(const std::string& name);

  double operator()(double u) const;
  double derivative(double u) const;
  std::string name() const;
  Choice choice() const { return choice_; }
  bool nonnegative() const;

 private:
  explicit Phi(Choice c) : choice_(c) {}
  Choice choice_ = Choice::one;
  std::vector<double> u_, v_;
};

struct KernelSpec {
  KernelKind kind = KernelKind::newton;
  double k = 5.0;
  double t = kInf;
  Phi phi;
  // multiplies the whole convolution; 0 turns the Hartree flow linear
  double coupling = 1.0;

  static KernelSpec newton() { return {}; }
  static KernelSpec deformed(double k, double t, Phi phi);

  double tau() const { return kind == KernelKind::newton || !(t < kInf) ? 0.0 : 1.0 / t; }
  bool is_newton_limit() const { return kind == KernelKind::newton || tau() == 0.0; }
  // Phi(d) without the coupling
  double value(double d) const;
  std::string describe() const;
  std::uint64_t hash() const;
};

// phi(0) = 1 and sup (|phi(u)| + <u>|phi'(u)|) <= bound on a log-spaced probe set
void check_admissible(const KernelSpec& spec, double bound = 10.0);

// 2 pi^2 s (1 - s^2/r^2), 0 < s <= r
double newton_K(double r, double s);

// (|x|^-2 * rho) from the radial Newton formula, trapezoid-consistent with the
// cell rule: 2 pi^2 int rho s ds - int_0^r K(r,s) rho(s) ds
RadialField newton_potential(const RadialField& rho);

struct KernelOptions {
  double rel_tol = 1e-12;
  int max_intervals = 400;
  int threads = 0;  // 0: hardware concurrency
  std::string cache_dir;  // empty: no cache
};

struct KernelMatrix {
  Mat entries;  // (i, j): w(r_i, r_j) V_j / (2 pi^2), coupling included
  KernelSpec spec;
  GridPtr grid;
  double tolerance = 0.0;
  double max_error = 0.0;  // largest estimated angular quadrature error
  bool from_cache = false;
};

// integral over S^3, w(r, s) = int_0^pi Phi(|x - y|) 4 pi sin^2 theta d theta
double angular_average(const KernelSpec& spec, double r, double s, double rel_tol = 1e-12,
                       double* error = nullptr);

KernelMatrix build_kernel_matrix(const KernelSpec& spec, const GridPtr& grid,
                                 const KernelOptions& opt = {});

RadialField convolve(const KernelMatrix& m, const RadialField& rho);
Vec convolve(const KernelMatrix& m, const Vec& rho);

// (i, j): [w_spec(r_i, r_j) - 2 pi^2 / max(r_i, r_j)^2] v_j / (2 pi^2), zero in the Newton limit
Mat deformation_matrix(const KernelSpec& spec, const Vec& nodes, const Vec& weights, const KernelOptions& opt = {});

// dense convolution operator on a scheme: the scheme's own Newton potential
// plus the deformation, times the coupling.  diag(weights) * result is symmetric.
Mat kernel_operator(const Scheme& sch, const KernelSpec& spec, const KernelOptions& opt = {});

}  // namespace hartree
