#pragma once

#include <functional>

namespace hartree {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  int intervals = 0;
  bool converged = false;
};

// globally adaptive 7/15-point Gauss-Kronrod on [a, b]; stops when the
// summed error estimate drops below max(abs_tol, rel_tol |value|)
QuadResult gauss_kronrod(const std::function<double(double)>& f, double a, double b, double abs_tol,
                         double rel_tol, int max_intervals = 500);

}  // namespace hartree
