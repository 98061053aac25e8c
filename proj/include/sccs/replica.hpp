#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "coupling_spec.hpp"
#include "errors.hpp"
#include "quadrature.hpp"
#include "scalar_channel.hpp"

namespace sccs {

namespace detail {

// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) noexcept {
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

inline void check_eps(const Eigen::VectorXd& eps, const CouplingSpec& spec) {
  if (eps.size() != spec.cols()) {
    std::ostringstream msg;
    msg << "eps has length " << eps.size() << " but the spec has " << spec.cols() << " blocks";
    throw InputError(msg.str());
  }
  for (Eigen::Index p = 0; p < eps.size(); ++p) {
    if (!(eps(p) > 0.0) || !std::isfinite(eps(p))) {
      std::ostringstream msg;
      msg << "eps_" << p << " must be finite and > 0, got " << eps(p);
      throw InputError(msg.str());
    }
  }
}

}  // namespace detail

namespace detail {

// Int_0^inf e^{-t} max(c0 - k0 t, c1 - k1 t) dt in closed form. Each segment
// [a, a + d] contributes e^{-a} (c E - k ((a + 1) E - d e^{-d})) with
// E = 1 - e^{-d}, which avoids the cancellation between the two endpoint
// values of the antiderivative when k is large.
inline double exp_weighted_max_of_lines(double c0, double k0, double c1, double k1) {
  auto piece = [](double c, double k, double a, double b) {
    const double d = b - a;
    const double E = -std::expm1(-d);
    const double tail = std::isinf(d) ? 0.0 : d * std::exp(-d);
    return std::exp(-a) * (c * E - k * ((a + 1.0) * E - tail));
  };
  const bool first_at_zero = c0 >= c1;
  if (k0 == k1) return first_at_zero ? c0 - k0 : c1 - k1;
  const double cross = (c0 - c1) / (k0 - k1);
  const double inf = std::numeric_limits<double>::infinity();
  if (!(cross > 0.0)) {
    // No crossing on (0, inf): the flatter line dominates throughout.
    return k0 < k1 ? piece(c0, k0, 0.0, inf) : piece(c1, k1, 0.0, inf);
  }
  return first_at_zero ? piece(c0, k0, 0.0, cross) + piece(c1, k1, cross, inf)
                       : piece(c1, k1, 0.0, cross) + piece(c0, k0, cross, inf);
}

}  // namespace detail

/// E_y log E_x exp(-s |y - x|^2) with y drawn from the matched channel of
/// precision s, i.e. y = x' + s^{-1/2} z, x' from the prior.
///
/// The inner expectation is (1-rho) e^{-s|y|^2} + rho/(1+s) e^{-s|y|^2/(1+s)}.
/// Splitting the outer mixture and rescaling |y|^2 by each component's
/// variance leaves two integrals against e^{-t} on [0, inf) of
/// log(e^{A(t)} + e^{B(t)}) with A, B linear in t. Writing the log-sum as
/// max(A, B) + log1p(e^{-|A - B|}) makes the dominant part exact; only the
/// bounded correction near the crossing is integrated numerically. The
/// derivative in s then matches -mmse to near machine precision, which the
/// stationarity of the free entropy at large s depends on.
inline double channel_term(double varsigma, BernoulliGaussianPrior prior) {
  if (!(varsigma > 0.0) || !std::isfinite(varsigma)) {
    std::ostringstream msg;
    msg << "channel_term: varsigma must be finite and > 0, got " << varsigma;
    throw InputError(msg.str());
  }
  const double s = varsigma;
  const double rho = prior.rho;
  if (rho == 0.0) return -1.0;
  if (rho == 1.0) return -std::log1p(s) - 1.0;

  const double log_zero = std::log1p(-rho);
  const double log_nonzero = std::log(rho) - std::log1p(s);
  const double shrink = 1.0 / (1.0 + s);
  // log((1-rho)(1+s)/rho) sets where the two inner terms cross.
  const double cross = log_zero - log_nonzero;
  constexpr double kUpper = 50.0;
  constexpr double kAbsTol = 1e-17;
  constexpr double kRelTol = 1e-13;

  // y from the zero component: t = s|y|^2 ~ Exp(1); A = log_zero - t,
  // B = log_nonzero - t/(1+s).
  const double main_zero = detail::exp_weighted_max_of_lines(log_zero, 1.0, log_nonzero, shrink);
  auto corr_zero = [&](double t) {
    return std::exp(-t) * std::log1p(std::exp(-std::abs(cross - t * s * shrink)));
  };
  // y from the nonzero component: t = s|y|^2 / (1+s) ~ Exp(1); A = log_zero - t(1+s),
  // B = log_nonzero - t.
  const double main_nonzero = detail::exp_weighted_max_of_lines(log_zero, 1.0 + s, log_nonzero, 1.0);
  auto corr_nonzero = [&](double t) {
    return std::exp(-t) * std::log1p(std::exp(-std::abs(cross - t * s)));
  };

  const double t_zero = cross * (1.0 + s) / s;
  const double w_zero = (1.0 + s) / s;
  const double t_nonzero = cross / s;
  const double w_nonzero = 1.0 / s;
  auto breaks_zero = quad::graded_breaks(t_zero, w_zero, 0.0, kUpper);
  breaks_zero.push_back(1.0);
  auto breaks_nonzero = quad::graded_breaks(t_nonzero, w_nonzero, 0.0, kUpper);
  breaks_nonzero.push_back(1.0);
  const auto a = quad::integrate(corr_zero, 0.0, kUpper, std::move(breaks_zero), kAbsTol, kRelTol);
  const auto b = quad::integrate(corr_nonzero, 0.0, kUpper, std::move(breaks_nonzero), kAbsTol, kRelTol);
  return (1.0 - rho) * (main_zero + a.value) + rho * (main_nonzero + b.value);
}

struct InnerSolverOptions {
  double tol = 1e-12;  // on max_p |eps_p Lambda_p - 1 + Delta_p|
  std::size_t max_iter = 10000;
  double damping = 0.5;  // fallback fixed-point step: weight on the previous log Lambda
};

struct GOrthResult {
  double value = 0.0;
  Eigen::VectorXd Lambda;  // row q of Lambda; 1/eps_p where J_{q,p} = 0
  Eigen::VectorXd Delta;   // row q of Delta; 0 where J_{q,p} = 0
  std::size_t iterations = 0;
  double residual = 0.0;
  bool clamped = false;
};

/// Inner extremization over Lambda_{q,.} for block-row q of the
/// row-orthogonal ensemble.
///
/// Stationarity of the G functional in Lambda_{q,p} reads
///   eps_p = (1 - Delta_{q,p}) / Lambda_{q,p},
///   Delta_{q,p} = a_q J_{q,p} / (Lambda_{q,p} (sigma2 + sum_l gamma_l J_{q,l} / Lambda_{q,l})),
/// with a_q = alpha_{q,p} gamma_p. The residual eps Lambda - 1 + Delta is
/// driven to zero by Newton steps in log Lambda with backtracking; a damped
/// fixed-point step is taken whenever Newton fails to reduce the residual.
/// Blocks with J_{q,p} = 0 are absent and sit at Lambda = 1/eps, where their
/// bracket term vanishes. Lambda is floored at kLambdaFloor (flagged); at
/// a_q = 1 the floor is where the extremum degenerates. At sigma2 = 0 the
/// value is -inf.
inline GOrthResult g_orth(const Eigen::VectorXd& eps, const CouplingSpec& spec, Eigen::Index q,
                          const InnerSolverOptions& opt = {}) {
  detail::check_eps(eps, spec);
  if (q < 0 || q >= spec.rows()) throw InputError("g_orth: block-row index out of range");

  const double a = spec.row_rate(q);
  const double sigma2 = spec.sigma2;
  std::vector<Eigen::Index> active;
  for (Eigen::Index p = 0; p < spec.cols(); ++p) {
    if (spec.J(q, p) > 0.0) active.push_back(p);
  }
  const auto n = static_cast<Eigen::Index>(active.size());
  Eigen::VectorXd weight(n);  // gamma_p J_{q,p}
  Eigen::VectorXd e(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    weight(k) = spec.gamma(active[k]) * spec.J(q, active[k]);
    e(k) = eps(active[k]);
  }
  if (n == 0) {
    GOrthResult empty;
    empty.Lambda = eps.cwiseInverse();
    empty.Delta = Eigen::VectorXd::Zero(spec.cols());
    return empty;
  }
  const double log_floor = std::log(kLambdaFloor);

  struct Eval {
    Eigen::VectorXd lambda, delta, share, r;
    double spread = 0.0;
    double norm = 0.0;
  };
  auto evaluate = [&](const Eigen::VectorXd& log_lambda) {
    Eval ev;
    ev.lambda = log_lambda.array().exp();
    ev.share = weight.array() / ev.lambda.array();
    ev.spread = ev.share.sum();
    const double denom = sigma2 + ev.spread;
    ev.share /= denom;                                     // pi_k
    ev.delta.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      ev.delta(k) = a * spec.J(q, active[k]) / (ev.lambda(k) * denom);
    }
    ev.r = (e.array() * ev.lambda.array() - 1.0 + ev.delta.array()).matrix();
    ev.norm = ev.r.cwiseAbs().maxCoeff();
    return ev;
  };

  Eigen::VectorXd w = (-e.array().log()).matrix();
  Eval cur = evaluate(w);
  GOrthResult out;
  bool converged = cur.norm <= opt.tol;
  for (std::size_t it = 1; it <= opt.max_iter && !converged; ++it) {
    out.iterations = it;
    // d r_p / d w_k = delta_pk (eps_p Lambda_p - Delta_p) + Delta_p pi_k
    Eigen::MatrixXd jac = cur.delta * cur.share.transpose();
    jac.diagonal().array() += e.array() * cur.lambda.array() - cur.delta.array();
    Eigen::VectorXd step = jac.partialPivLu().solve(-cur.r);
    bool accepted = false;
    if (step.allFinite()) {
      const double longest = step.cwiseAbs().maxCoeff();
      if (longest > 2.0) step *= 2.0 / longest;
      for (double t = 1.0; t > 1e-6; t *= 0.5) {
        Eigen::VectorXd trial = (w + t * step).cwiseMax(log_floor);
        Eval ev = evaluate(trial);
        if (ev.norm < cur.norm) {
          w = std::move(trial);
          cur = std::move(ev);
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      Eigen::VectorXd target = ((1.0 - cur.delta.array()) / e.array()).matrix();
      for (Eigen::Index k = 0; k < n; ++k) {
        target(k) = target(k) > kLambdaFloor ? std::log(target(k)) : log_floor;
      }
      w = (1.0 - opt.damping) * target + opt.damping * w;
      cur = evaluate(w);
    }
    converged = cur.norm <= opt.tol;
  }
  out.residual = cur.norm;
  if (!converged) {
    std::ostringstream msg;
    msg << "g_orth: inner extremization for block-row " << q << " did not reach tolerance "
        << opt.tol << " in " << opt.max_iter << " iterations (residual " << cur.norm << ")";
    throw ConvergenceError(msg.str(), cur.norm, out.iterations);
  }

  out.Lambda = eps.cwiseInverse();
  out.Delta = Eigen::VectorXd::Zero(spec.cols());
  double bracket = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index p = active[k];
    out.Lambda(p) = cur.lambda(k);
    out.Delta(p) = cur.delta(k);
    if (w(k) <= log_floor) out.clamped = true;
    const double le = cur.lambda(k) * e(k);
    bracket += spec.gamma(p) * (le - std::log(le) - 1.0);
  }
  out.value = -a * std::log1p(cur.spread / sigma2) + bracket;
  return out;
}

/// G for the i.i.d. Gaussian ensemble: -a_q log(1 + sum_p gamma_p J_{q,p} eps_p / sigma2).
inline double g_gauss(const Eigen::VectorXd& eps, const CouplingSpec& spec, Eigen::Index q) {
  if (eps.size() != spec.cols()) throw InputError("g_gauss: eps length does not match the spec");
  if (q < 0 || q >= spec.rows()) throw InputError("g_gauss: block-row index out of range");
  if (!(spec.sigma2 > 0.0)) {
    throw DomainError("g_gauss: sigma2 = 0 makes the log term diverge; use the noise-free "
                      "state-evolution path instead");
  }
  double load = 0.0;
  for (Eigen::Index p = 0; p < spec.cols(); ++p) load += spec.gamma(p) * spec.J(q, p) * eps(p);
  return -spec.row_rate(q) * std::log1p(load / spec.sigma2);
}

namespace detail {

struct ConjugateSolution {
  ConjugateState state;
  Eigen::VectorXd g_rows;  // orthogonal only
};

inline ConjugateSolution solve_conjugates(const Eigen::VectorXd& eps, const CouplingSpec& spec,
                                          EnsembleKind kind, const InnerSolverOptions& opt) {
  check_eps(eps, spec);
  const Eigen::Index rows = spec.rows();
  const Eigen::Index cols = spec.cols();
  ConjugateSolution sol;
  sol.state.eps = eps;
  sol.state.varsigma = Eigen::MatrixXd::Zero(rows, cols);

  if (kind == EnsembleKind::GaussianIID) {
    for (Eigen::Index q = 0; q < rows; ++q) {
      double load = spec.sigma2;
      for (Eigen::Index l = 0; l < cols; ++l) load += spec.gamma(l) * spec.J(q, l) * eps(l);
      for (Eigen::Index p = 0; p < cols; ++p) {
        sol.state.varsigma(q, p) = spec.row_rate(q) * spec.J(q, p) / load;
      }
    }
    return sol;
  }

  sol.state.Lambda.resize(rows, cols);
  sol.state.Delta.resize(rows, cols);
  sol.g_rows.resize(rows);
  for (Eigen::Index q = 0; q < rows; ++q) {
    const auto g = g_orth(eps, spec, q, opt);
    sol.g_rows(q) = g.value;
    sol.state.Lambda.row(q) = g.Lambda.transpose();
    sol.state.Delta.row(q) = g.Delta.transpose();
    sol.state.clamped = sol.state.clamped || g.clamped;
    for (Eigen::Index p = 0; p < cols; ++p) {
      if (spec.J(q, p) <= 0.0) continue;
      // Lambda Delta / (1 - Delta) equals Delta / eps at stationarity; the
      // latter stays finite when Delta -> 1 at unit rate.
      sol.state.varsigma(q, p) = g.Delta(p) / eps(p);
    }
  }
  return sol;
}

}  // namespace detail

/// Conjugate order parameters (varsigma, Lambda, Delta) stationary for the
/// given per-block MSE vector.
inline ConjugateState conjugate_fixed_point(const Eigen::VectorXd& eps, const CouplingSpec& spec,
                                            EnsembleKind kind,
                                            const InnerSolverOptions& opt = {}) {
  return detail::solve_conjugates(eps, spec, kind, opt).state;
}

/// Replica free entropy as a function of the per-block MSE, with the
/// conjugate parameters set to their stationary values.
inline double free_entropy(const Eigen::VectorXd& eps, const CouplingSpec& spec,
                           EnsembleKind kind, const InnerSolverOptions& opt = {}) {
  if (!(spec.sigma2 > 0.0)) {
    throw DomainError("free_entropy: sigma2 = 0 makes the G term diverge");
  }
  const auto sol = detail::solve_conjugates(eps, spec, kind, opt);
  const auto& st = sol.state;
  const Eigen::VectorXd precision = st.column_precision();

  double value = 1.0 - spec.overall_rate();
  for (Eigen::Index p = 0; p < spec.cols(); ++p) {
    value += spec.gamma(p) * channel_term(precision(p), spec.prior);
    value += spec.gamma(p) * eps(p) * precision(p);
  }
  for (Eigen::Index q = 0; q < spec.rows(); ++q) {
    value += kind == EnsembleKind::RowOrthogonal ? sol.g_rows(q) : g_gauss(eps, spec, q);
  }
  return value;
}

}  // namespace sccs
