#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "coupling_spec.hpp"
#include "errors.hpp"
#include "replica.hpp"
#include "scalar_channel.hpp"

namespace sccs {

struct CurveGrid {
  std::size_t points = 2000;
  double floor = 0.0;  // 0 selects max(1e-10, 1e-3 sigma2)
  double min_prominence = 1e-10;
};

struct LocalMaximum {
  double eps = 0.0;
  double value = 0.0;
  double prominence = 0.0;  // refined F minus the larger grid neighbour
  std::size_t index = 0;    // grid index of the bracketing centre
};

/// F sampled on a log grid, with the local maxima that clear the prominence
/// threshold, sorted by eps.
struct FreeEntropyCurve {
  std::vector<double> eps_grid;
  std::vector<double> values;
  std::vector<LocalMaximum> maxima;

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  }
};

namespace detail {

// Golden-section search for a maximum of f on [lo, hi].
template <class F>
std::pair<double, double> golden_max(F&& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    }
  }
  return f1 > f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

inline CouplingSpec single_block(const CouplingSpec& tmpl, double alpha) {
  if (!tmpl.is_single_block() || tmpl.gamma(0) != 1.0 || tmpl.J(0, 0) != 1.0) {
    throw InputError("phase analysis needs a single-block template with gamma = J = 1");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("alpha must be finite and > 0");
  CouplingSpec spec = tmpl;
  spec.alpha(0, 0) = alpha;
  return spec;
}

inline double grid_floor(double rho, double sigma2, const CurveGrid& grid) {
  (void)rho;
  return grid.floor > 0.0 ? grid.floor : std::max(1e-10, 1e-3 * sigma2);
}

}  // namespace detail

/// Samples F(eps) of a single-block system on a log grid over [floor, rho]
/// and refines every interior local maximum by golden section in log eps.
inline FreeEntropyCurve scan_curve(const CouplingSpec& tmpl, double alpha, EnsembleKind kind,
                                   const CurveGrid& grid = {},
                                   const InnerSolverOptions& inner = {}) {
  if (grid.points < 3) throw InputError("scan_curve: the eps grid needs at least 3 points");
  const CouplingSpec spec = detail::single_block(tmpl, alpha);
  const double rho = spec.prior.rho;
  const double lo = detail::grid_floor(rho, spec.sigma2, grid);
  const double hi = rho > 0.0 ? rho : 1.0;
  if (!(lo < hi)) throw InputError("scan_curve: grid floor must lie below rho");

  auto F = [&](double log_eps) {
    Eigen::VectorXd e(1);
    e(0) = std::exp(log_eps);
    return free_entropy(e, spec, kind, inner);
  };

  FreeEntropyCurve curve;
  const std::size_t n = grid.points;
  curve.eps_grid.resize(n);
  curve.values.resize(n);
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) {
    const double le = i + 1 == n ? lhi : llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(n - 1);
    curve.eps_grid[i] = i + 1 == n ? hi : std::exp(le);
    curve.values[i] = F(std::log(curve.eps_grid[i]));
  }

  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double left = curve.values[i - 1];
    const double mid = curve.values[i];
    const double right = curve.values[i + 1];
    if (!(mid > left && mid >= right)) continue;
    const auto [log_eps, value] = detail::golden_max(
        F, std::log(curve.eps_grid[i - 1]), std::log(curve.eps_grid[i + 1]), 1e-10);
    LocalMaximum m;
    m.eps = std::exp(log_eps);
    m.value = std::max(value, mid);
    if (mid > value) m.eps = curve.eps_grid[i];
    m.prominence = m.value - std::max(left, right);
    m.index = i;
    if (m.prominence >= grid.min_prominence) curve.maxima.push_back(m);
  }
  return curve;
}

/// Point of the single-block stationary manifold: eps = mmse(varsigma) and the
/// measurement rate that makes this pair a fixed point of the conjugate map.
struct RateCurvePoint {
  double varsigma = 0.0;
  double eps = 0.0;
  double alpha = 0.0;
};

/// Rate at which eps = mmse(varsigma) is stationary. Gaussian:
/// varsigma = alpha / (sigma2 + eps). Orthogonal: varsigma = Delta / eps with
/// Delta = alpha / (1 + sigma2 (1 - Delta) / eps).
inline RateCurvePoint stationary_rate(double varsigma, double rho, double sigma2,
                                      EnsembleKind kind) {
  RateCurvePoint pt;
  pt.varsigma = varsigma;
  pt.eps = mmse(varsigma, BernoulliGaussianPrior(rho));
  if (kind == EnsembleKind::GaussianIID) {
    pt.alpha = varsigma * (sigma2 + pt.eps);
  } else {
    const double delta = varsigma * pt.eps;
    pt.alpha = delta * (1.0 + sigma2 * (1.0 - delta) / pt.eps);
  }
  return pt;
}

/// The interval of rates for which the stationary manifold folds back, i.e.
/// three stationary points (two maxima) coexist.
struct SpinodalWindow {
  double alpha_low = 0.0;   // local minimum of the rate curve
  double alpha_high = 0.0;  // local maximum of the rate curve
  double eps_low = 0.0;     // eps at the fold producing alpha_low (good side)
  double eps_high = 0.0;    // eps at the fold producing alpha_high (bad side)
};

inline std::optional<SpinodalWindow> spinodal_window(double rho, double sigma2, EnsembleKind kind,
                                                     const CurveGrid& grid = {},
                                                     std::size_t points = 800) {
  if (!(rho > 0.0 && rho < 1.0)) return std::nullopt;
  const double floor = detail::grid_floor(rho, sigma2, grid);
  const double log_lo = std::log(1e-3);
  const double log_hi = std::log(10.0 * rho / floor);
  auto rate = [&](double log_s) { return stationary_rate(std::exp(log_s), rho, sigma2, kind).alpha; };

  std::vector<double> xs(points);
  std::vector<double> as(points);
  for (std::size_t i = 0; i < points; ++i) {
    xs[i] = log_lo + (log_hi - log_lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    as[i] = rate(xs[i]);
  }
  // First fold: a local max of alpha(varsigma) followed by a local min.
  std::optional<std::size_t> peak;
  for (std::size_t i = 1; i + 1 < points; ++i) {
    if (as[i] > as[i - 1] && as[i] >= as[i + 1]) {
      peak = i;
      break;
    }
  }
  if (!peak) return std::nullopt;
  std::optional<std::size_t> valley;
  for (std::size_t i = *peak + 1; i + 1 < points; ++i) {
    if (as[i] < as[i - 1] && as[i] <= as[i + 1]) {
      valley = i;
      break;
    }
  }
  if (!valley) return std::nullopt;

  const auto top = detail::golden_max(rate, xs[*peak - 1], xs[*peak + 1], 1e-9);
  const auto bottom = detail::golden_max([&](double x) { return -rate(x); }, xs[*valley - 1],
                                         xs[*valley + 1], 1e-9);
  SpinodalWindow w;
  w.alpha_high = top.second;
  w.alpha_low = -bottom.second;
  w.eps_high = mmse(std::exp(top.first), BernoulliGaussianPrior(rho));
  w.eps_low = mmse(std::exp(bottom.first), BernoulliGaussianPrior(rho));
  if (!(w.alpha_high - w.alpha_low > 1e-12 * w.alpha_high)) return std::nullopt;
  return w;
}

struct PhaseOptions {
  CurveGrid grid;
  double alpha_tol = 1e-5;
  double alpha_lo_factor = 0.1;  // initial lower bracket rho * factor
  double alpha_hi = 1.0;         // initial upper bracket
  InnerSolverOptions inner;
};

/// Transition rates at one noise level. alpha_d and alpha_s are reported as
/// the bracket ends just outside the two-maxima window.
struct PhasePoint {
  double sigma2 = 0.0;
  std::optional<double> alpha_d;
  std::optional<double> alpha_c;
  std::optional<double> alpha_s;
  bool sharp = false;
  std::string status = "ok";  // "ok", "no-transition" or "error: ..."
  std::size_t curve_scans = 0;
  std::optional<double> maxima_gap_at_alpha_c;  // |F(max_1) - F(max_2)|
};

namespace detail {

class WindowProbe {
 public:
  WindowProbe(double rho, double sigma2, EnsembleKind kind, const PhaseOptions& opt)
      : tmpl_(CouplingSpec::uncoupled(0.5, sigma2, rho)), kind_(kind), opt_(opt) {}

  FreeEntropyCurve curve(double alpha) {
    ++scans_;
    return scan_curve(tmpl_, alpha, kind_, opt_.grid, opt_.inner);
  }

  bool two_maxima(double alpha) { return curve(alpha).maxima.size() >= 2; }

  // A rate inside the window, or NoTransitionError.
  double seed() {
    if (seed_) return *seed_;
    const double rho = tmpl_.prior.rho;
    const auto w = spinodal_window(rho, tmpl_.sigma2, kind_, opt_.grid);
    std::ostringstream msg;
    msg << "no two-maxima window at rho = " << rho << ", sigma2 = " << tmpl_.sigma2;
    if (!w) throw NoTransitionError(msg.str());
    const double mid = 0.5 * (w->alpha_low + w->alpha_high);
    if (!two_maxima(mid)) {
      msg << " (window narrower than the free-entropy resolution)";
      throw NoTransitionError(msg.str());
    }
    seed_ = mid;
    return mid;
  }

  // {outer (one maximum), inner (two maxima)} for the upper window edge.
  std::pair<double, double> upper_edge() {
    double inner = seed();
    double outer = opt_.alpha_hi;
    while (two_maxima(outer)) {
      inner = outer;
      outer *= 1.5;
      if (outer > 100.0) throw NumericError("alpha_d bracket could not be closed");
    }
    while (outer - inner > opt_.alpha_tol) {
      const double mid = 0.5 * (inner + outer);
      (two_maxima(mid) ? inner : outer) = mid;
    }
    return {outer, inner};
  }

  std::pair<double, double> lower_edge() {
    double inner = seed();
    double outer = tmpl_.prior.rho * opt_.alpha_lo_factor;
    while (two_maxima(outer)) {
      inner = outer;
      outer *= 0.5;
      if (outer < 1e-8) throw NumericError("alpha_s bracket could not be closed");
    }
    while (inner - outer > opt_.alpha_tol) {
      const double mid = 0.5 * (inner + outer);
      (two_maxima(mid) ? inner : outer) = mid;
    }
    return {outer, inner};
  }

  // F(good maximum) - F(bad maximum); requires two maxima at alpha.
  double gap(double alpha) {
    const auto c = curve(alpha);
    if (c.maxima.size() < 2) {
      std::ostringstream msg;
      msg << "expected two free-entropy maxima at alpha = " << alpha;
      throw NumericError(msg.str());
    }
    return c.maxima.front().value - c.maxima.back().value;
  }

  // Root of the maxima gap inside [lo, hi] (TOMS 748, tolerance alpha_tol / 100).
  double balance(double lo, double hi, double* final_gap) {
    const double g_lo = gap(lo);
    const double g_hi = gap(hi);
    if (g_lo > 0.0 || g_hi < 0.0) {
      throw NumericError("alpha_c: the maxima gap does not change sign across the window");
    }
    const double tol = opt_.alpha_tol * 1e-2;
    auto stop = [tol](double x, double y) { return std::abs(x - y) <= tol; };
    boost::uintmax_t max_iter = 100;
    const auto root = boost::math::tools::toms748_solve([this](double x) { return gap(x); }, lo,
                                                        hi, g_lo, g_hi, stop, max_iter);
    const double alpha = 0.5 * (root.first + root.second);
    if (final_gap) *final_gap = std::abs(gap(alpha));
    return alpha;
  }

  std::size_t scans() const noexcept { return scans_; }

 private:
  CouplingSpec tmpl_;
  EnsembleKind kind_;
  PhaseOptions opt_;
  std::optional<double> seed_;
  std::size_t scans_ = 0;
};

}  // namespace detail

/// Largest rate with two local maxima (reported as the first rate above the
/// window, within alpha_tol).
inline double find_alpha_d(double rho, double sigma2, EnsembleKind kind,
                           const PhaseOptions& opt = {}) {
  detail::WindowProbe probe(rho, sigma2, kind, opt);
  return probe.upper_edge().first;
}

/// Smallest rate with two local maxima (reported as the last rate below the
/// window, within alpha_tol).
inline double find_alpha_s(double rho, double sigma2, EnsembleKind kind,
                           const PhaseOptions& opt = {}) {
  detail::WindowProbe probe(rho, sigma2, kind, opt);
  return probe.lower_edge().first;
}

/// Rate at which the two maxima have equal free entropy.
inline double find_alpha_c(double rho, double sigma2, EnsembleKind kind,
                           const PhaseOptions& opt = {}) {
  detail::WindowProbe probe(rho, sigma2, kind, opt);
  const auto upper = probe.upper_edge();
  const auto lower = probe.lower_edge();
  return probe.balance(lower.second, upper.second, nullptr);
}

/// All three transitions at one noise level. A missing window yields
/// sharp = false and status "no-transition"; other failures are recorded in
/// status and never thrown.
inline PhasePoint locate_transitions(double rho, double sigma2, EnsembleKind kind,
                                     const PhaseOptions& opt = {}) {
  PhasePoint pt;
  pt.sigma2 = sigma2;
  std::optional<detail::WindowProbe> probe;
  try {
    probe.emplace(rho, sigma2, kind, opt);
    const auto upper = probe->upper_edge();
    const auto lower = probe->lower_edge();
    pt.alpha_d = upper.first;
    pt.alpha_s = lower.first;
    double gap = 0.0;
    pt.alpha_c = probe->balance(lower.second, upper.second, &gap);
    pt.maxima_gap_at_alpha_c = gap;
    pt.sharp = true;
  } catch (const NoTransitionError&) {
    pt.status = "no-transition";
    pt.alpha_d.reset();
    pt.alpha_c.reset();
    pt.alpha_s.reset();
  } catch (const std::exception& e) {
    pt.status = std::string("error: ") + e.what();
  }
  if (probe) pt.curve_scans = probe->scans();
  return pt;
}

/// Whether a resolvable two-maxima window exists at this noise level.
inline bool has_sharp_transition(double rho, double sigma2, EnsembleKind kind,
                                 const PhaseOptions& opt = {}) {
  try {
    detail::WindowProbe probe(rho, sigma2, kind, opt);
    probe.seed();
    return true;
  } catch (const NoTransitionError&) {
    return false;
  }
}

/// Noise level above which the window disappears, by bisection in log sigma2
/// on has_sharp_transition. Requires sharp(lo) and !sharp(hi).
inline double find_sharp_limit(double rho, EnsembleKind kind, double sigma2_lo, double sigma2_hi,
                               double rel_tol = 1e-3, const PhaseOptions& opt = {}) {
  if (!(sigma2_lo > 0.0 && sigma2_lo < sigma2_hi)) {
    throw InputError("find_sharp_limit: need 0 < sigma2_lo < sigma2_hi");
  }
  if (!has_sharp_transition(rho, sigma2_lo, kind, opt)) {
    throw NoTransitionError("find_sharp_limit: no window at the lower noise bracket");
  }
  if (has_sharp_transition(rho, sigma2_hi, kind, opt)) {
    throw NumericError("find_sharp_limit: window still present at the upper noise bracket");
  }
  double lo = std::log(sigma2_lo);
  double hi = std::log(sigma2_hi);
  while (hi - lo > rel_tol) {
    const double mid = 0.5 * (lo + hi);
    (has_sharp_transition(rho, std::exp(mid), kind, opt) ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

/// MSE of the rightmost local maximum of F, i.e. the fixed point reached from
/// the uninformative start. The grid maximum is polished by solving the
/// stationarity condition eps = mmse(varsigma(eps)) inside its bracket.
inline double bp_mse_at(double rho, double sigma2, double alpha, EnsembleKind kind,
                        const PhaseOptions& opt = {}) {
  const auto tmpl = CouplingSpec::uncoupled(alpha, sigma2, rho);
  const auto curve = scan_curve(tmpl, alpha, kind, opt.grid, opt.inner);
  if (curve.maxima.empty()) throw NumericError("bp_mse_at: free entropy has no interior maximum");
  const auto& right = curve.maxima.back();

  auto residual = [&](double log_eps) {
    Eigen::VectorXd e(1);
    e(0) = std::exp(log_eps);
    const auto st = conjugate_fixed_point(e, tmpl, kind, opt.inner);
    return e(0) - mmse(st.varsigma(0, 0), tmpl.prior);
  };
  const double lo = std::log(curve.eps_grid[right.index - 1]);
  const double hi = std::log(curve.eps_grid[right.index + 1]);
  const double r_lo = residual(lo);
  const double r_hi = residual(hi);
  if (!(r_lo < 0.0 && r_hi > 0.0)) return right.eps;
  boost::uintmax_t max_iter = 200;
  const auto root = boost::math::tools::toms748_solve(
      residual, lo, hi, r_lo, r_hi, boost::math::tools::eps_tolerance<double>(50), max_iter);
  return std::exp(0.5 * (root.first + root.second));
}

/// One PhasePoint per noise level. Points are independent; `threads` > 1
/// evaluates them concurrently. Errors are recorded per point.
inline std::vector<PhasePoint> sweep_phase_diagram(double rho, const std::vector<double>& sigma2_grid,
                                                   EnsembleKind kind, const PhaseOptions& opt = {},
                                                   unsigned threads = 1) {
  if (sigma2_grid.empty()) throw InputError("sweep_phase_diagram: sigma2 grid is empty");
  std::vector<PhasePoint> out(sigma2_grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sigma2_grid.size(); i = next++) {
      out[i] = locate_transitions(rho, sigma2_grid[i], kind, opt);
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(sigma2_grid.size())));
  if (n == 1) {
    worker();
    return out;
  }
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  return out;
}

}  // namespace sccs
