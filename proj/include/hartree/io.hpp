#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hartree/core.hpp"

namespace hartree {

// shortest round-trip-safe text: 17 significant digits, locale independent
std::string fmt_double(double x);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
// strict: the whole token must parse; `where` names the source in the error
double parse_double(std::string_view s, const std::string& where);
long long parse_int(std::string_view s, const std::string& where);

class Fnv1a {
 public:
  void add_bytes(const void* p, std::size_t n);
  void add(double x) { add_bytes(&x, sizeof x); }
  void add(int x) { add_bytes(&x, sizeof x); }
  void add(std::uint64_t x) { add_bytes(&x, sizeof x); }
  void add(const std::string& s) { add_bytes(s.data(), s.size()); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

std::string hex64(std::uint64_t x);

// column-oriented CSV with a fixed header
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            const std::vector<std::string>& comments = {});
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;
  void row(const std::vector<double>& values);

 private:
  struct Impl;
  Impl* impl_;
};

struct Series {
  std::string label;
  std::vector<double> x, y;
};

// static line chart; log axes take log10 of the data
void write_svg_chart(const std::string& path, const std::string& title, const std::vector<Series>& series,
                     bool log_x = false, bool log_y = false);

// whitespace separated columns for gnuplot
void write_plot_data(const std::string& path, const std::vector<std::string>& names,
                     const std::vector<std::vector<double>>& columns);

}  // namespace hartree
