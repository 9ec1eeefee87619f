#include "hartree/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hartree {

std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

double parse_double(std::string_view s, const std::string& where) {
  const std::string t = trim(s);
  if (t == "inf" || t == "+inf") return kInf;
  if (t == "-inf") return -kInf;
  double v = 0.0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ConfigError(where + ": '" + t + "' is not a number");
  return v;
}

long long parse_int(std::string_view s, const std::string& where) {
  const std::string t = trim(s);
  long long v = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ConfigError(where + ": '" + t + "' is not an integer");
  return v;
}

void Fnv1a::add_bytes(const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= b[i];
    h_ *= 1099511628211ull;
  }
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

struct CsvWriter::Impl {
  std::ofstream os;
  std::string path;
  std::size_t ncol;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::string>& comments)
    : impl_(new Impl) {
  impl_->os.open(path);
  impl_->path = path;
  impl_->ncol = header.size();
  if (!impl_->os) {
    delete impl_;
    throw IoError("cannot write " + path);
  }
  for (const auto& c : comments) impl_->os << "# " << c << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) impl_->os << (i ? "," : "") << header[i];
  impl_->os << '\n';
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != impl_->ncol) throw std::logic_error("csv row width mismatch in " + impl_->path);
  for (std::size_t i = 0; i < values.size(); ++i) impl_->os << (i ? "," : "") << fmt_double(values[i]);
  impl_->os << '\n';
  if (!impl_->os) throw IoError("write failed for " + impl_->path);
}

void write_plot_data(const std::string& path, const std::vector<std::string>& names,
                     const std::vector<std::vector<double>>& columns) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << '#';
  for (const auto& n : names) os << ' ' << n;
  os << '\n';
  const std::size_t rows = columns.empty() ? 0 : columns[0].size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? " " : "") << fmt_double(columns[c][r]);
    os << '\n';
  }
}

void write_svg_chart(const std::string& path, const std::string& title, const std::vector<Series>& series,
                     bool log_x, bool log_y) {
  const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(std::abs(v)) : v; };
  double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double a = tx(s.x[i]), b = ty(s.y[i]);
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      x0 = std::min(x0, a), x1 = std::max(x1, a), y0 = std::min(y0, b), y1 = std::max(y1, b);
    }
  if (!(x1 > x0)) x1 = x0 + 1, x0 -= 1;
  if (!(y1 > y0)) y1 = y0 + 1, y0 -= 1;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  auto px = [&](double a) { return ml + (a - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double b) { return H - mb - (b - y0) / (y1 - y0) * (H - mt - mb); };
  char buf[64];
  for (int k = 0; k <= 4; ++k) {
    const double a = x0 + (x1 - x0) * k / 4, b = y0 + (y1 - y0) * k / 4;
    std::snprintf(buf, sizeof buf, log_x ? "1e%.2g" : "%.3g", a);
    os << "<text x=\"" << px(a) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\" font-size=\"11\">" << buf
       << "</text>\n";
    std::snprintf(buf, sizeof buf, log_y ? "1e%.2g" : "%.3g", b);
    os << "<text x=\"" << ml - 6 << "\" y=\"" << py(b) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << buf
       << "</text>\n";
  }
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    os << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double a = tx(s.x[i]), b = ty(s.y[i]);
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(a), py(b));
      os << buf;
    }
    os << "\"/>\n";
    os << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 16 + 14 * k << "\" font-size=\"12\" fill=\"" << colors[k % 6]
       << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace hartree
