#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "caia/parallel.hpp"
#include "caia/param_store.hpp"

namespace caia {

struct FdCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = false;
};

/// Central-finite-difference gradient certification.
///
/// `store` must already hold the analytic gradients for f at the current
/// parameter values. f itself must be deterministic and must not read the
/// gradient buffers. For every trainable scalar p the check compares
/// grad[p] against (f(p+h) - f(p-h)) / (2h) using
/// rel_err = |a - n| / max(1e-8, |a| + |n|).
///
/// Evaluations may fan out across workers; each coordinate owns one slot of
/// the result vector and the final max-reduction runs in coordinate order.
inline FdCheckReport fd_gradient_check(const std::function<double(const ParamStore&)>& f,
                                       const ParamStore& store, double h = 1e-4,
                                       double tol = 1e-4, std::size_t workers = 1) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient_check: h must be positive");

  struct Coord {
    std::string name;
    std::size_t index;
    double analytic;
  };
  std::vector<Coord> coords;
  store.for_each([&](const std::string& name, const ParamEntry& e) {
    if (!e.trainable) return;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      coords.push_back({name, i, e.grad[i]});
    }
  });

  std::vector<double> numeric(coords.size(), 0.0);
  const std::size_t n = coords.size();
  const std::size_t k = workers <= 1 ? 1 : (workers < n ? workers : (n ? n : 1));
  const std::size_t chunk = n == 0 ? 0 : (n + k - 1) / k;
  parallel_for(k, k, [&](std::size_t w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = lo + chunk < n ? lo + chunk : n;
    if (lo >= hi) return;
    ParamStore local = store;  // scratch copy per worker
    for (std::size_t c = lo; c < hi; ++c) {
      Tensor& value = local.value(coords[c].name);
      const double original = value[coords[c].index];
      value[coords[c].index] = original + h;
      const double f_plus = f(local);
      value[coords[c].index] = original - h;
      const double f_minus = f(local);
      value[coords[c].index] = original;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw std::runtime_error("fd_gradient_check: non-finite evaluation at parameter '" +
                                 coords[c].name + "'");
      }
      numeric[c] = (f_plus - f_minus) / (2.0 * h);
    }
  });

  FdCheckReport report;
  for (std::size_t c = 0; c < coords.size(); ++c) {
    const double a = coords[c].analytic;
    const double nu = numeric[c];
    const double rel = std::fabs(a - nu) / std::max(1e-8, std::fabs(a) + std::fabs(nu));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = coords[c].name;
      report.worst_index = coords[c].index;
      report.worst_analytic = a;
      report.worst_numeric = nu;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace caia
