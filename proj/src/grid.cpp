#include "hartree/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hartree/io.hpp"

namespace hartree {

std::string to_string(Spacing s) { return s == Spacing::uniform ? "uniform" : "stretched"; }

Spacing spacing_from_string(const std::string& s) {
  if (s == "uniform") return Spacing::uniform;
  if (s == "stretched") return Spacing::stretched;
  throw ConfigError("unknown spacing '" + s + "'");
}

double RadialGrid::h() const {
  if (!is_uniform()) throw ConfigError("cell width requested on a stretched grid");
  return r_max / n_points;
}

std::uint64_t RadialGrid::hash() const {
  Fnv1a fnv;
  fnv.add(n_points);
  fnv.add(r_max);
  fnv.add(static_cast<int>(spacing));
  fnv.add(stretch);
  return fnv.value();
}

GridPtr make_grid(int n_points, double r_max, Spacing spacing, double stretch) {
  if (n_points < 8) throw ConfigError("grid needs at least 8 points, got " + std::to_string(n_points));
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw ConfigError("r_max must be positive");
  if (spacing == Spacing::stretched && !(stretch > 0.0)) throw ConfigError("stretch ratio must be positive");
  auto g = std::make_shared<RadialGrid>();
  g->n_points = n_points;
  g->r_max = r_max;
  g->spacing = spacing;
  g->stretch = spacing == Spacing::uniform ? 1.0 : stretch;
  const int n = n_points;
  g->faces.resize(n + 1);
  if (spacing == Spacing::uniform || stretch == 1.0) {
    for (int i = 0; i <= n; ++i) g->faces[i] = r_max * i / n;
  } else {
    const double q = stretch;
    const double w0 = r_max * (q - 1.0) / (std::pow(q, n) - 1.0);
    double f = 0.0, w = w0;
    for (int i = 0; i <= n; ++i) {
      g->faces[i] = f;
      f += w;
      w *= q;
    }
  }
  g->faces[n] = r_max;
  g->nodes.resize(n);
  g->weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double a = g->faces[i], b = g->faces[i + 1];
    g->nodes[i] = 0.5 * (a + b);
    // (b^4 - a^4) factored to avoid cancellation in the outer shells
    g->weights[i] = 0.5 * kPi2 * (b - a) * (b + a) * (b * b + a * a);
  }
  g->face_area.resize(n + 1);
  g->face_dist.resize(n + 1);
  for (int j = 0; j <= n; ++j) g->face_area[j] = kS3 * std::pow(g->faces[j], 3);
  g->face_dist[0] = g->nodes[0];
  for (int j = 1; j < n; ++j) g->face_dist[j] = g->nodes[j] - g->nodes[j - 1];
  g->face_dist[n] = r_max - g->nodes[n - 1];
  return g;
}

RadialField::RadialField(GridPtr g, CVec v) : grid(std::move(g)), values(std::move(v)) {
  if (!grid) throw ConfigError("field without grid");
  if (values.size() != grid->n_points)
    throw ConfigError("field length " + std::to_string(values.size()) + " does not match grid size " +
                      std::to_string(grid->n_points));
  if (!values.allFinite()) throw NumericalError("field contains non-finite entries");
}

RadialField::RadialField(GridPtr g, const Vec& v) : RadialField(std::move(g), CVec(v.cast<cplx>())) {}

RadialField RadialField::zeros(GridPtr g) {
  const int n = g->n_points;
  return RadialField(std::move(g), CVec(CVec::Zero(n)));
}

bool RadialField::is_real(double tol) const {
  return values.imag().cwiseAbs().maxCoeff() <= tol * std::max(1.0, values.cwiseAbs().maxCoeff());
}

cplx integrate(const RadialField& f) { return (f.grid->weights.cast<cplx>().array() * f.values.array()).sum(); }

double mass(const RadialField& f) { return f.grid->weights.dot(f.values.cwiseAbs2()); }

double variance(const RadialField& f) {
  return f.grid->weights.dot((f.grid->nodes.array().square() * f.values.cwiseAbs2().array()).matrix());
}

double grad_norm_sq(const RadialField& f) {
  // finite-volume gradient on interior faces; the flux through r = 0 vanishes
  // (regularity) and the outermost face uses the one-sided interior difference
  const RadialGrid& g = *f.grid;
  const int n = g.n_points;
  double s = 0.0;
  for (int j = 1; j < n; ++j) s += g.face_area[j] / g.face_dist[j] * std::norm(f.values[j] - f.values[j - 1]);
  return s;
}

Tridiag fv2_stiffness(const RadialGrid& g) {
  const int n = g.n_points;
  Tridiag t{Vec::Zero(n), Vec::Zero(n - 1)};
  for (int j = 1; j < n; ++j) {
    const double c = g.face_area[j] / g.face_dist[j];
    t.off[j - 1] = c;
    t.diag[j - 1] -= c;
    t.diag[j] -= c;
  }
  // Dirichlet ghost: zero value at r_max
  t.diag[n - 1] -= g.face_area[n] / g.face_dist[n];
  return t;
}

RadialField laplacian_radial(const RadialField& f) {
  const RadialGrid& g = *f.grid;
  const Tridiag t = fv2_stiffness(g);
  const int n = g.n_points;
  CVec out(n);
  for (int i = 0; i < n; ++i) {
    cplx v = t.diag[i] * f.values[i];
    if (i > 0) v += t.off[i - 1] * f.values[i - 1];
    if (i + 1 < n) v += t.off[i] * f.values[i + 1];
    out[i] = v / g.weights[i];
  }
  return RadialField(f.grid, std::move(out));
}

namespace {

struct Extended {
  std::vector<double> r;
  std::vector<cplx> v;
};

Extended extend(const RadialGrid& g, const CVec& values) {
  const int n = g.n_points;
  Extended e;
  e.r.reserve(n + 4);
  e.v.reserve(n + 4);
  e.r.push_back(-g.nodes[1]);
  e.v.push_back(values[1]);
  e.r.push_back(-g.nodes[0]);
  e.v.push_back(values[0]);
  for (int i = 0; i < n; ++i) {
    e.r.push_back(g.nodes[i]);
    e.v.push_back(values[i]);
  }
  e.r.push_back(2 * g.r_max - g.nodes[n - 1]);
  e.v.push_back(-values[n - 1]);
  e.r.push_back(2 * g.r_max - g.nodes[n - 2]);
  e.v.push_back(-values[n - 2]);
  return e;
}

cplx lagrange4(const Extended& e, double r) {
  auto it = std::upper_bound(e.r.begin() + 1, e.r.end() - 2, r);
  int j = static_cast<int>(it - e.r.begin()) - 2;
  j = std::clamp(j, 0, static_cast<int>(e.r.size()) - 4);
  const double* x = &e.r[j];
  const cplx* y = &e.v[j];
  cplx s = 0.0;
  for (int a = 0; a < 4; ++a) {
    double l = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) l *= (r - x[b]) / (x[a] - x[b]);
    s += l * y[a];
  }
  return s;
}

}  // namespace

CVec interpolate(const RadialGrid& g, const CVec& values, const Vec& r) {
  const Extended e = extend(g, values);
  CVec out(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double x = std::abs(r[i]);
    out[i] = x >= g.r_max ? cplx(0.0) : lagrange4(e, x);
  }
  return out;
}

Vec interpolate(const RadialGrid& g, const Vec& values, const Vec& r) {
  return interpolate(g, CVec(values.cast<cplx>()), r).real();
}

cplx interpolate_at(const RadialGrid& g, const CVec& values, double r) {
  Vec x(1);
  x[0] = r;
  return interpolate(g, values, x)[0];
}

RadialField resample(const RadialField& f, double lambda, int amplitude_power) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("resample needs lambda > 0");
  const Vec target = lambda * f.grid->nodes;
  CVec v = interpolate(*f.grid, f.values, target);
  v *= std::pow(lambda, amplitude_power);
  return RadialField(f.grid, std::move(v));
}

RadialField transfer(const RadialField& f, const GridPtr& target) {
  return RadialField(target, interpolate(*f.grid, f.values, target->nodes));
}

Vec fv2_r_dr(const RadialGrid& g, const Vec& f) {
  const int n = g.n_points;
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    const double rl = i > 0 ? g.nodes[i - 1] : -g.nodes[0];
    const double fl = i > 0 ? f[i - 1] : f[0];
    const double rr = i + 1 < n ? g.nodes[i + 1] : 2 * g.r_max - g.nodes[n - 1];
    const double fr = i + 1 < n ? f[i + 1] : -f[n - 1];
    const double r0 = g.nodes[i];
    // three-point derivative on a possibly nonuniform stencil
    const double a = r0 - rl, b = rr - r0;
    const double d = (-b / (a * (a + b))) * fl + ((b - a) / (a * b)) * f[i] + (a / (b * (a + b))) * fr;
    out[i] = r0 * d;
  }
  return out;
}

CVec fv2_grad(const RadialGrid& g, const CVec& f) {
  const int n = g.n_points;
  CVec out(n);
  for (int i = 0; i < n; ++i) {
    const double rl = i > 0 ? g.nodes[i - 1] : -g.nodes[0];
    const cplx fl = i > 0 ? f[i - 1] : f[0];
    const double rr = i + 1 < n ? g.nodes[i + 1] : 2 * g.r_max - g.nodes[n - 1];
    const cplx fr = i + 1 < n ? f[i + 1] : -f[n - 1];
    const double r0 = g.nodes[i];
    const double a = r0 - rl, b = rr - r0;
    out[i] = (-b / (a * (a + b))) * fl + ((b - a) / (a * b)) * f[i] + (a / (b * (a + b))) * fr;
  }
  return out;
}

void write_grid_header(std::ostream& os, const RadialGrid& g) {
  os << "# n_points = " << g.n_points << "\n";
  os << "# r_max = " << fmt_double(g.r_max) << "\n";
  os << "# spacing = " << to_string(g.spacing) << "\n";
  os << "# stretch = " << fmt_double(g.stretch) << "\n";
}

void write_field_csv(const std::string& path, const RadialField& f) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  write_grid_header(os, *f.grid);
  os << "r,re,im\n";
  for (int i = 0; i < f.size(); ++i)
    os << fmt_double(f.grid->nodes[i]) << ',' << fmt_double(f.values[i].real()) << ','
       << fmt_double(f.values[i].imag()) << '\n';
  if (!os) throw IoError("write failed for " + path);
}

RadialField read_field_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  int n = -1;
  double rmax = -1.0, stretch = 1.0;
  Spacing spacing = Spacing::uniform;
  std::vector<double> r, re, im;
  std::string line;
  bool header_seen = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = trim(line.substr(1, eq - 1));
      std::string val = trim(line.substr(eq + 1));
      if (key == "n_points") n = static_cast<int>(parse_double(val, path));
      else if (key == "r_max") rmax = parse_double(val, path);
      else if (key == "spacing") spacing = spacing_from_string(val);
      else if (key == "stretch") stretch = parse_double(val, path);
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      if (line != "r,re,im" && line != "r,Q") throw ConfigError(path + ": unexpected header '" + line + "'");
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() < 2 || cols.size() > 3)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 2 or 3 columns");
    r.push_back(parse_double(cols[0], path));
    re.push_back(parse_double(cols[1], path));
    im.push_back(cols.size() == 3 ? parse_double(cols[2], path) : 0.0);
  }
  if (!header_seen || r.empty()) throw ConfigError(path + ": no data rows");
  const int m = static_cast<int>(r.size());
  if (n < 0) n = m;
  if (n != m) throw ConfigError(path + ": header says " + std::to_string(n) + " points, found " + std::to_string(m));
  if (rmax < 0) rmax = 2.0 * r[0] * m;  // uniform cell-centred layout
  GridPtr g = make_grid(n, rmax, spacing, stretch);
  for (int i = 0; i < n; ++i)
    if (std::abs(g->nodes[i] - r[i]) > 1e-9 * std::max(1.0, rmax))
      throw ConfigError(path + ": node " + std::to_string(i) + " does not match the declared grid");
  CVec v(n);
  for (int i = 0; i < n; ++i) v[i] = cplx(re[i], im[i]);
  return RadialField(g, std::move(v));
}

}  // namespace hartree
