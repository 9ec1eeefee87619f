#pragma once

#include <array>
#include <memory>
#include <mutex>
#include <vector>

#include "hartree/kernels.hpp"
#include "hartree/scheme.hpp"

namespace hartree {

struct Spectral;

// Linearization about a stationary profile Q.  Pairs (e, conj e) are stored as
// 2n-vectors; in these coordinates the block operator
//   H = [[Lap - 1 + V + W, W], [-W, -Lap + 1 - V - W]]
// is real, and i d/dt (e, conj e) + H (e, conj e) = 0 evolves as e^{itH}.
struct LinearizedSystem {
  LinearizedSystem(Scheme s, KernelSpec k) : sch(std::move(s)), spec(std::move(k)) {}

  Scheme sch;
  KernelSpec spec;
  double t_param = kInf;
  Vec Q, V, Q1, x2Q;  // Q1 = 2Q + r Q', x2Q = |x|^2 Q
  Mat N;              // dense convolution operator
  Mat Wm;             // f -> Q N (Q f)
  Mat Lplus, Lminus;
  Mat H;
  Vec rho;  // L+ rho = -|x|^2 Q
  std::array<CVec, 4> phi, psi;
  Vec w2;  // weights on both components

  int n() const { return static_cast<int>(Q.size()); }
  // sum w conj(a) b and the bilinear sum w a b on 2n-vectors
  cplx inner(const CVec& a, const CVec& b) const;
  cplx pair(const CVec& a, const CVec& b) const;
  double norm(const CVec& a) const;
  CVec apply_H(const CVec& v) const;
  const Spectral& spectral() const;

  std::shared_ptr<std::once_flag> spectral_once = std::make_shared<std::once_flag>();
  mutable std::shared_ptr<Spectral> spectral_data;
};

LinearizedSystem assemble(const Scheme& sch, const Vec& Q, const KernelSpec& spec = KernelSpec::newton(),
                          const KernelOptions& opt = {});

struct KernelRelations {
  double lminus_q = 0;   // |L- Q| / |Q|
  double lplus_q1 = 0;   // |L+ Q1 + 2Q| / |Q|
  double lplus_rho = 0;  // |L+ rho + |x|^2 Q| / ||x|^2 Q|
  double sym_plus = 0, sym_minus = 0;  // weighted asymmetry of L+-, relative
};
KernelRelations kernel_relations(const LinearizedSystem& s);

struct Margins {
  double lplus = 0;   // smallest |eigenvalue| of L+
  double lminus = 0;  // smallest |eigenvalue| of L-
  double lminus_overlap = 0;  // |cos| between that L- eigenvector and Q
  double lplus_negative = 0;  // the negative eigenvalue of L+
};
Margins nondegeneracy_margin(const LinearizedSystem& s);

struct GrowthProbe {
  double rate = 0;
  double fit_from = 0, fit_to = 0;
  bool above_q = false;
  Vec r, log_abs_v;
};
// L+ v = 0 in the local-plus-Volterra form with v(0) = v0_factor * Q(0), v'(0) = 0
GrowthProbe homogeneous_growth_probe(const LinearizedSystem& s, double v0_factor = 2.0, double dr = 2e-3,
                                     double fit_span = 10.0);

struct ChainCheck {
  std::array<double, 4> residuals{};  // |H phi1| / |phi1|, then span-fit residuals
  std::array<cplx, 3> constants{};    // H phi_{j+1} = c_j phi_j
  std::array<double, 4> nilpotency{};  // |H^4 phi_i| / |phi_i|
};
ChainCheck jordan_chain_check(const LinearizedSystem& s);

struct Spectral {
  CVec lambda;
  CMat V, Vinv;
  std::vector<int> cluster, rest;  // cluster: the four eigenvalues nearest 0
  CMat Pc;  // projector onto the cluster eigenvectors
  CMat U;   // the chain phi_1..phi_4 as columns
  CMat Y;   // D psi_i, so that Y^T v = <v, psi_i>
  CMat G;   // (Y^T U)^{-1}; U G Y^T is the root projector used for splitting
  CMat M;   // generator in chain coordinates, H U ~ U M
};

struct RieszResult {
  CMat P;
  double c = 0;
  double trace_re = 0, trace_im = 0;
  double idempotency = 0;  // |P^2 - P|_max / |P|_max
  int inside = 0;
  double cluster_gap = 0;  // |P - Pc| / |P|, zero unless c encloses more than the cluster
  double chain_gap = 0;    // max_i |P phi_i - phi_i| / |phi_i|
};
// c <= 0 picks c automatically in the gap above the root cluster
RieszResult riesz_projection(const LinearizedSystem& s, double c = 0.0);
double auto_contour_radius(const LinearizedSystem& s);

// e^{itH} v0 for each time: root part through the 4x4 generator, the rest spectrally
std::vector<CVec> propagate_linearized(const LinearizedSystem& s, const CVec& v0, const std::vector<double>& times);
// v0 - P_r v0
CVec remove_root_part(const LinearizedSystem& s, const CVec& v0);

// <L+ a, a> + <L- b, b> with a + ib the first component
double quadratic_form(const LinearizedSystem& s, const CVec& v);
// pair (f, conj f)
CVec pair_vector(const CVec& f);

struct RootCoefficients {
  std::array<cplx, 4> b{};
  double rho_q = 0, x2q_q = 0, x2q_rho = 0;  // <rho,Q>, <|x|^2 Q,Q>, <|x|^2 Q,rho>
  bool positive = false;
};
// solves the 4x4 structured system for F = sum b_i phi_i + (part annihilated by all psi_i)
RootCoefficients root_coefficients(const LinearizedSystem& s, const CVec& F);

// a_j' = c_j a_{j+1} + b_j / i, a_4' = b_4 / i, a_j(t_max) = 0, trapezoid in t.
// The default coefficients (2, 4, -1) are those of the modulation equations.
std::array<CVec, 4> integrate_modulation(const Vec& t, const std::array<CVec, 4>& b,
                                         std::array<double, 3> coupling = {2.0, 4.0, -1.0});
// coupling of the modulation system implied by measured chain constants
std::array<double, 3> modulation_coupling(const std::array<cplx, 3>& chain);

struct SymmetryCheck {
  double max_defect = 0;  // max over non-cluster eigenvalues of dist(-conj(lambda), spectrum) / max(1, |lambda|)
  int checked = 0;
};
SymmetryCheck spectral_symmetry(const LinearizedSystem& s);

Mat gram_matrix(const LinearizedSystem& s);  // |<phi_j, psi_i>| structure, real parts of the pairing
double gram_condition(const LinearizedSystem& s);

struct EssentialProxy {
  double lowest_above_one = 0;  // smallest |lambda| > 1 among real eigenvalues
  int inside_gap = 0;           // non-cluster eigenvalues with |lambda| < 1
  double max_imag = 0;          // largest |Im lambda| outside the cluster
};
EssentialProxy essential_spectrum_proxy(const LinearizedSystem& s);

}  // namespace hartree
