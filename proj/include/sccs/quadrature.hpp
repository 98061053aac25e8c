#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include "errors.hpp"

namespace sccs::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;  // summed QUADPACK error estimates
};

namespace detail {

struct WorkspaceDeleter {
  void operator()(gsl_integration_workspace* w) const noexcept { gsl_integration_workspace_free(w); }
};

template <class F>
double trampoline(double x, void* params) {
  return (*static_cast<F*>(params))(x);
}

inline void disable_gsl_abort() {
  // Status codes are inspected by the caller; the default handler aborts.
  static const bool once = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)once;
}

}  // namespace detail

/// Breakpoints center +- width * 2^k, k = 0, 1, ..., clipped to (lo, hi).
/// Adaptive rules sample an interval at a few dozen points first; a feature
/// of width `width` on a much longer interval can be missed entirely and the
/// error estimate then reports false convergence. Doubling the distance from
/// the feature keeps every piece within a constant factor of its scale.
inline std::vector<double> graded_breaks(double center, double width, double lo, double hi) {
  std::vector<double> out;
  if (!(width > 0.0) || !std::isfinite(center)) return out;
  if (center > lo && center < hi) out.push_back(center);
  for (double d = width; center - d > lo || center + d < hi; d *= 2.0) {
    if (center - d > lo && center - d < hi) out.push_back(center - d);
    if (center + d > lo && center + d < hi) out.push_back(center + d);
  }
  return out;
}

/// Adaptive 31-point Gauss-Kronrod (QUADPACK qag) over [a, b], split at the
/// interior breakpoints. Throws NumericError carrying the error estimate when
/// a piece misses max(abs_tol, rel_tol * |piece|).
template <class F>
Result integrate(F&& f, double a, double b, std::vector<double> breaks,
                 double abs_tol = 1e-12, double rel_tol = 1e-12) {
  detail::disable_gsl_abort();
  constexpr std::size_t kLimit = 1000;
  std::unique_ptr<gsl_integration_workspace, detail::WorkspaceDeleter> work(
      gsl_integration_workspace_alloc(kLimit));

  using Fn = std::remove_reference_t<F>;
  gsl_function gf;
  gf.function = &detail::trampoline<Fn>;
  gf.params = const_cast<void*>(static_cast<const void*>(&f));

  std::vector<double> nodes{a};
  std::sort(breaks.begin(), breaks.end());
  for (double x : breaks) {
    if (std::isfinite(x) && x > nodes.back() && x < b) nodes.push_back(x);
  }
  nodes.push_back(b);

  Result total;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    double value = 0.0;
    double err = 0.0;
    const int status = gsl_integration_qag(&gf, nodes[i], nodes[i + 1], abs_tol, rel_tol, kLimit,
                                           GSL_INTEG_GAUSS31, work.get(), &value, &err);
    total.value += value;
    total.error += err;
    if (status != GSL_SUCCESS || !std::isfinite(value)) {
      std::ostringstream msg;
      msg << "quadrature did not converge on [" << nodes[i] << ", " << nodes[i + 1]
          << "]: " << gsl_strerror(status) << ", error estimate " << err;
      throw NumericError(msg.str(), err);
    }
  }
  return total;
}

}  // namespace sccs::quad
