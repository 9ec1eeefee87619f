#include "hartree/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "hartree/io.hpp"
#include "hartree/quadrature.hpp"

namespace hartree {

Phi Phi::tabulated(std::vector<double> u, std::vector<double> v) {
  if (u.size() < 2 || u.size() != v.size()) throw ConfigError("tabulated phi needs >= 2 (u, v) pairs");
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i]) || !std::isfinite(v[i])) throw ConfigError("tabulated phi: non-finite sample");
    if (i > 0 && !(u[i] > u[i - 1])) throw ConfigError("tabulated phi: u must increase");
  }
  if (u.front() != 0.0) throw ConfigError("tabulated phi: first sample must be at u = 0");
  Phi p(Choice::tabulated);
  p.u_ = std::move(u);
  p.v_ = std::move(v);
  return p;
}

Phi Phi::from_name(const std::string& name) {
  if (name == "one") return one();
  if (name == "rational") return rational();
  if (name == "exp" || name == "exponential") return exponential();
  if (name.rfind("table:", 0) == 0) {
    std::ifstream in(name.substr(6));
    if (!in) throw IoError("cannot open phi table " + name.substr(6));
    std::vector<double> u, v;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      std::istringstream ss(t);
      std::string a, b;
      ss >> a >> b;
      const std::string where = name + ":" + std::to_string(lineno);
      u.push_back(parse_double(a, where));
      v.push_back(parse_double(b, where));
    }
    return tabulated(std::move(u), std::move(v));
  }
  throw ConfigError("unknown phi '" + name + "' (one, rational, exp, table:FILE)");
}

double Phi::operator()(double u) const {
  switch (choice_) {
    case Choice::one: return 1.0;
    case Choice::rational: return 1.0 / (1.0 + u);
    case Choice::exponential: return std::exp(-u);
    case Choice::tabulated: {
      if (u >= u_.back()) return v_.back();
      auto it = std::upper_bound(u_.begin(), u_.end(), u);
      const std::size_t j = static_cast<std::size_t>(it - u_.begin());
      const double a = (u - u_[j - 1]) / (u_[j] - u_[j - 1]);
      return (1 - a) * v_[j - 1] + a * v_[j];
    }
  }
  return 1.0;
}

double Phi::derivative(double u) const {
  switch (choice_) {
    case Choice::one: return 0.0;
    case Choice::rational: return -1.0 / ((1.0 + u) * (1.0 + u));
    case Choice::exponential: return -std::exp(-u);
    case Choice::tabulated: {
      if (u >= u_.back()) return 0.0;
      auto it = std::upper_bound(u_.begin(), u_.end(), u);
      const std::size_t j = static_cast<std::size_t>(it - u_.begin());
      return (v_[j] - v_[j - 1]) / (u_[j] - u_[j - 1]);
    }
  }
  return 0.0;
}

bool Phi::nonnegative() const {
  if (choice_ != Choice::tabulated) return true;
  for (double v : v_)
    if (v < 0) return false;
  return true;
}

std::string Phi::name() const {
  switch (choice_) {
    case Choice::one: return "one";
    case Choice::rational: return "rational";
    case Choice::exponential: return "exp";
    case Choice::tabulated: {
      Fnv1a h;
      for (std::size_t i = 0; i < u_.size(); ++i) {
        h.add(u_[i]);
        h.add(v_[i]);
      }
      return "table#" + hex64(h.value());
    }
  }
  return "?";
}

namespace {

// phi(u) - 1 without cancellation for small u
double phi_minus_one(const Phi& phi, double u) {
  switch (phi.choice()) {
    case Phi::Choice::one: return 0.0;
    case Phi::Choice::rational: return -u / (1.0 + u);
    case Phi::Choice::exponential: return std::expm1(-u);
    case Phi::Choice::tabulated: return phi(u) - 1.0;
  }
  return 0.0;
}

}  // namespace

KernelSpec KernelSpec::deformed(double k, double t, Phi phi) {
  KernelSpec s;
  s.kind = KernelKind::deformed;
  s.k = k;
  s.t = t;
  s.phi = std::move(phi);
  return s;
}

double KernelSpec::value(double d) const {
  if (is_newton_limit()) return 1.0 / (d * d);
  return phi(std::pow(d * tau(), k)) / (d * d);
}

std::string KernelSpec::describe() const {
  std::string s = kind == KernelKind::newton ? "newton" : "deformed(k=" + fmt_double(k) + ",t=" +
                                                              fmt_double(t) + ",phi=" + phi.name() + ")";
  if (coupling != 1.0) s += "*" + fmt_double(coupling);
  return s;
}

std::uint64_t KernelSpec::hash() const {
  Fnv1a h;
  h.add(describe());
  return h.value();
}

void check_admissible(const KernelSpec& spec, double bound) {
  if (!std::isfinite(spec.coupling)) throw ConfigError("kernel coupling must be finite");
  if (spec.kind == KernelKind::newton) return;
  if (!(spec.k > 0) || !std::isfinite(spec.k)) throw ConfigError("deformed kernel needs k > 0");
  if (!(spec.t > 0)) throw ConfigError("deformed kernel needs t > 0");
  if (std::abs(spec.phi(0.0) - 1.0) > 1e-12) throw ConfigError("phi(0) must equal 1, got " + fmt_double(spec.phi(0.0)));
  double worst = 0.0, at = 0.0;
  for (int i = -1; i <= 160; ++i) {
    const double u = i < 0 ? 0.0 : std::pow(10.0, -8.0 + 0.1 * i);
    const double m = std::abs(spec.phi(u)) + std::hypot(1.0, u) * std::abs(spec.phi.derivative(u));
    if (!std::isfinite(m) || m > worst) {
      worst = m;
      at = u;
    }
  }
  if (!(worst <= bound))
    throw ConfigError("phi violates |phi| + <u>|phi'| <= " + fmt_double(bound) + " near u = " + fmt_double(at));
}

double newton_K(double r, double s) {
  if (!(s > 0) || s > r) throw ConfigError("newton_K needs 0 < s <= r");
  return kS3 * s * (1.0 - (s / r) * (s / r));
}

RadialField newton_potential(const RadialField& rho) {
  if (!rho.grid) throw ConfigError("newton_potential: field without grid");
  if (!rho.is_real()) throw ConfigError("newton_potential needs a real density");
  const RadialGrid& g = *rho.grid;
  const int n = g.n_points;
  // the cell rule integrates f(s) ds as sum f_j V_j / (2 pi^2 s_j^3)
  Vec m(n), inner(n);
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    m[j] = rho.values[j].real() * g.weights[j];
    total += m[j] / (g.nodes[j] * g.nodes[j]);
  }
  CVec out(n);
  double a = 0.0, b = 0.0;  // running sums of m/s^2 and m below node i
  for (int i = 0; i < n; ++i) {
    const double r = g.nodes[i];
    // int_0^r K(r,s) rho ds = sum_{j<i} m_j (1/s_j^2 - 1/r^2); K(r,r) = 0 drops j = i
    out[i] = total - (a - b / (r * r));
    a += m[i] / (r * r);
    b += m[i];
  }
  return RadialField(rho.grid, out);
}

namespace {

// int_0^pi (phi(|x-y|^k tau^k) - 1) / |x-y|^2 4 pi sin^2 theta d theta, judged
// against the full kernel integral (the correction itself may be tiny)
double deformation_integral(const KernelSpec& spec, double r, double s, double rel_tol, double* error) {
  const double dr2 = (r - s) * (r - s), rs4 = 4.0 * r * s;
  const double m = std::max(r, s);
  const double base = kS3 / (m * m);
  const double tau = spec.tau(), k = spec.k;
  // theta = u^2 stretches the neighbourhood of theta = 0 where |x - y| is smallest
  QuadResult q = gauss_kronrod(
      [&](double u) {
        const double th = u * u, sh = std::sin(0.5 * th);
        const double d2 = dr2 + rs4 * sh * sh;
        if (!(d2 > 0)) return 0.0;
        const double st = std::sin(th);
        const double arg = std::pow(d2 * tau * tau, 0.5 * k);
        return 2.0 * u * 4.0 * kPi * st * st * phi_minus_one(spec.phi, arg) / d2;
      },
      0.0, std::sqrt(kPi), rel_tol * base, 0.0, 400);
  if (error) *error = q.converged ? q.error / std::abs(base + q.value) : kInf;
  return q.value;
}

}  // namespace

double angular_average(const KernelSpec& spec, double r, double s, double rel_tol, double* error) {
  if (!spec.is_newton_limit()) {
    const double m = std::max(r, s);
    double err = 0.0;
    const double d = deformation_integral(spec, r, s, rel_tol, &err);
    if (error) *error = err * std::abs(kS3 / (m * m) + d);
    return kS3 / (m * m) + d;
  }
  const double dr2 = (r - s) * (r - s), rs4 = 4.0 * r * s;
  QuadResult q = gauss_kronrod(
      [&](double u) {
        const double th = u * u, sh = std::sin(0.5 * th);
        const double d2 = dr2 + rs4 * sh * sh;
        const double st = std::sin(th);
        // at r = s the integrand tends to 4 pi cos^2(theta/2) / r^2
        return d2 > 0 ? 2.0 * u * 4.0 * kPi * st * st / d2
                      : 2.0 * u * 4.0 * kPi * std::cos(0.5 * th) * std::cos(0.5 * th) / (r * s);
      },
      0.0, std::sqrt(kPi), 0.0, rel_tol, 400);
  if (error) *error = q.converged ? q.error : kInf;
  return q.value;
}

namespace {

std::string cache_header(const KernelSpec& spec, const RadialGrid& g, double tol) {
  return "hartree-kernel 1 n=" + std::to_string(g.n_points) + " grid=" + hex64(g.hash()) +
         " spec=" + spec.describe() + " tol=" + fmt_double(tol) + "\n";
}

std::string cache_path(const KernelSpec& spec, const RadialGrid& g, const KernelOptions& opt) {
  Fnv1a h;
  h.add(cache_header(spec, g, opt.rel_tol));
  return (std::filesystem::path(opt.cache_dir) / ("kernel_" + hex64(h.value()) + ".bin")).string();
}

bool load_cache(const std::string& path, const std::string& header, KernelMatrix& m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line) || line + "\n" != header) return false;
  const auto n = m.entries.rows();
  double err = 0;
  in.read(reinterpret_cast<char*>(&err), sizeof err);
  in.read(reinterpret_cast<char*>(m.entries.data()), static_cast<std::streamsize>(sizeof(double) * n * n));
  if (!in) return false;
  m.max_error = err;
  return m.entries.allFinite();
}

void save_cache(const std::string& path, const std::string& header, const KernelMatrix& m) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write kernel cache " + tmp);
    out << header;
    out.write(reinterpret_cast<const char*>(&m.max_error), sizeof m.max_error);
    const auto n = m.entries.rows();
    out.write(reinterpret_cast<const char*>(m.entries.data()), static_cast<std::streamsize>(sizeof(double) * n * n));
    if (!out) throw IoError("short write to kernel cache " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

namespace {

// symmetric table f(i, j) for j >= i, rows handed out to worker threads
template <class F>
Mat assemble_symmetric(int n, int threads, F&& f, double& worst, const Vec& nodes) {
  Mat w(n, n);
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  worst = 0.0;
  std::pair<int, int> bad{-1, -1};
  auto work = [&] {
    double local = 0.0;
    for (int i = next++; i < n && !failed; i = next++) {
      for (int j = i; j < n; ++j) {
        double err = 0.0;
        const double v = f(i, j, err);
        if (!std::isfinite(err) || !std::isfinite(v)) {
          std::lock_guard<std::mutex> lock(mu);
          failed = true;
          bad = {i, j};
          break;
        }
        local = std::max(local, err);
        w(i, j) = v;
        w(j, i) = v;
      }
    }
    std::lock_guard<std::mutex> lock(mu);
    worst = std::max(worst, local);
  };
  int nt = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  nt = std::max(1, std::min(nt, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failed)
    throw NumericalError("angular quadrature did not converge at r = " + fmt_double(nodes[bad.first]) +
                         ", s = " + fmt_double(nodes[bad.second]));
  return w;
}

}  // namespace

KernelMatrix build_kernel_matrix(const KernelSpec& spec, const GridPtr& grid, const KernelOptions& opt) {
  if (!grid) throw ConfigError("build_kernel_matrix: null grid");
  check_admissible(spec);
  const RadialGrid& g = *grid;
  const int n = g.n_points;
  KernelMatrix m;
  m.spec = spec;
  m.grid = grid;
  m.tolerance = opt.rel_tol;
  m.entries.resize(n, n);

  std::string path, header;
  if (!opt.cache_dir.empty()) {
    header = cache_header(spec, g, opt.rel_tol);
    path = cache_path(spec, g, opt);
    if (load_cache(path, header, m)) {
      m.from_cache = true;
      return m;
    }
  }

  double worst = 0.0;
  const Mat w = assemble_symmetric(
      n, opt.threads,
      [&](int i, int j, double& err) {
        const double v = angular_average(spec, g.nodes[i], g.nodes[j], opt.rel_tol, &err);
        err /= std::abs(v);
        return v;
      },
      worst, g.nodes);
  // the cell weight carries 2 pi^2 s^3 ds while w already integrates over S^3
  for (int j = 0; j < n; ++j) m.entries.col(j) = w.col(j) * (g.weights[j] * spec.coupling / kS3);
  m.max_error = worst;
  if (!path.empty()) save_cache(path, header, m);
  return m;
}

Mat deformation_matrix(const KernelSpec& spec, const Vec& nodes, const Vec& weights, const KernelOptions& opt) {
  check_admissible(spec);
  const int n = static_cast<int>(nodes.size());
  if (spec.is_newton_limit()) return Mat::Zero(n, n);
  double worst = 0.0;
  const Mat w = assemble_symmetric(
      n, opt.threads,
      [&](int i, int j, double& err) {
        return deformation_integral(spec, nodes[i], nodes[j], opt.rel_tol, &err);
      },
      worst, nodes);
  Mat out(n, n);
  for (int j = 0; j < n; ++j) out.col(j) = w.col(j) * (weights[j] / kS3);
  return out;
}

Mat kernel_operator(const Scheme& sch, const KernelSpec& spec, const KernelOptions& opt) {
  Mat N = sch.potential_matrix();
  if (!spec.is_newton_limit()) N += deformation_matrix(spec, sch.nodes(), sch.weights(), opt);
  if (spec.coupling != 1.0) N *= spec.coupling;
  return N;
}

Vec convolve(const KernelMatrix& m, const Vec& rho) {
  if (rho.size() != m.entries.cols()) throw ConfigError("convolve: grid mismatch");
  return m.entries * rho;
}

RadialField convolve(const KernelMatrix& m, const RadialField& rho) {
  if (!rho.grid || !m.grid || (rho.grid != m.grid && rho.grid->hash() != m.grid->hash()))
    throw ConfigError("convolve: density lives on a different grid");
  if (!rho.is_real()) throw ConfigError("convolve needs a real density");
  return RadialField(m.grid, convolve(m, rho.real()));
}

}  // namespace hartree
