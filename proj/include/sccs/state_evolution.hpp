#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "coupling_spec.hpp"
#include "errors.hpp"
#include "replica.hpp"
#include "scalar_channel.hpp"

namespace sccs {

/// How the orthogonal-ensemble conjugates are refreshed after the MSE update.
///
/// SelfConsistent solves Lambda = 1/eps - varsigma, the Delta relation and
/// varsigma = Lambda Delta / (1 - Delta) jointly for the new eps (the
/// conjugates sit at their stationary point at every iteration).
/// SinglePass applies the three relations once, in order, with the previous
/// iteration's varsigma on the right-hand side of the Lambda update.
/// Both schedules share their fixed points. The Gaussian ensemble has a single
/// closed-form update and ignores the schedule.
enum class SeSchedule { SelfConsistent, SinglePass };

struct SeOptions {
  double tol = 1e-12;  // on max_p |eps_p^(t) - eps_p^(t-1)|
  std::size_t max_iter = 100000;
  double damping = 0.0;  // varsigma <- (1 - damping) varsigma_new + damping varsigma_old
  SeSchedule schedule = SeSchedule::SelfConsistent;
  std::optional<Eigen::VectorXd> init;  // defaults to eps^(0) = rho in every block
  InnerSolverOptions inner;
};

struct EvolutionTrace {
  std::vector<Eigen::VectorXd> history;  // history[t] = eps^(t)
  bool converged = false;
  std::size_t iterations = 0;
  ConjugateState final_state;
  bool oscillating = false;               // period-2 cycle detected
  std::vector<std::size_t> clamped_steps; // iterations where Lambda was clamped
};

namespace detail {

// Conjugate refresh for a new eps given the previous varsigma.
inline ConjugateState refresh_conjugates(const Eigen::VectorXd& eps,
                                         const Eigen::MatrixXd& prev_varsigma,
                                         const CouplingSpec& spec, EnsembleKind kind,
                                         SeSchedule schedule, const InnerSolverOptions& inner) {
  if (kind == EnsembleKind::GaussianIID || schedule == SeSchedule::SelfConsistent) {
    return conjugate_fixed_point(eps, spec, kind, inner);
  }
  const Eigen::Index rows = spec.rows();
  const Eigen::Index cols = spec.cols();
  ConjugateState st;
  st.eps = eps;
  st.varsigma = Eigen::MatrixXd::Zero(rows, cols);
  st.Lambda.resize(rows, cols);
  st.Delta = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index q = 0; q < rows; ++q) {
    double spread = 0.0;
    for (Eigen::Index p = 0; p < cols; ++p) {
      if (spec.J(q, p) <= 0.0) {
        st.Lambda(q, p) = 1.0 / eps(p);
        continue;
      }
      double lambda = 1.0 / eps(p) - prev_varsigma(q, p);
      if (!(lambda > kLambdaFloor)) {
        lambda = kLambdaFloor;
        st.clamped = true;
      }
      st.Lambda(q, p) = lambda;
      spread += spec.gamma(p) * spec.J(q, p) / lambda;
    }
    const double denom = spec.sigma2 + spread;
    for (Eigen::Index p = 0; p < cols; ++p) {
      if (spec.J(q, p) <= 0.0) continue;
      const double delta = spec.row_rate(q) * spec.J(q, p) / (st.Lambda(q, p) * denom);
      if (!(delta < 1.0)) {
        std::ostringstream msg;
        msg << "se_step: Delta_{" << q << "," << p << "} = " << delta << " >= 1";
        throw NumericError(msg.str(), delta);
      }
      st.Delta(q, p) = delta;
      st.varsigma(q, p) = st.Lambda(q, p) * delta / (1.0 - delta);
    }
  }
  return st;
}

inline Eigen::VectorXd refresh_mse(const ConjugateState& state, const CouplingSpec& spec) {
  const Eigen::VectorXd precision = state.column_precision();
  Eigen::VectorXd eps(precision.size());
  for (Eigen::Index p = 0; p < precision.size(); ++p) eps(p) = mmse(precision(p), spec.prior);
  return eps;
}

}  // namespace detail

/// One state-evolution iteration: eps_p <- mmse(sum_q varsigma_{q,p}), then the
/// conjugate refresh selected by the schedule.
inline ConjugateState se_step(const ConjugateState& state, const CouplingSpec& spec,
                              EnsembleKind kind,
                              SeSchedule schedule = SeSchedule::SelfConsistent,
                              const InnerSolverOptions& inner = {}) {
  if (state.varsigma.rows() != spec.rows() || state.varsigma.cols() != spec.cols()) {
    throw InputError("se_step: state shape does not match the spec");
  }
  const Eigen::VectorXd eps = detail::refresh_mse(state, spec);
  return detail::refresh_conjugates(eps, state.varsigma, spec, kind, schedule, inner);
}

/// The conjugate state the evolution starts from: eps^(0) with varsigma^(-1) = 0.
inline ConjugateState initial_state(const Eigen::VectorXd& eps0, const CouplingSpec& spec,
                                    EnsembleKind kind, SeSchedule schedule,
                                    const InnerSolverOptions& inner = {}) {
  const Eigen::MatrixXd none = Eigen::MatrixXd::Zero(spec.rows(), spec.cols());
  return detail::refresh_conjugates(eps0, none, spec, kind, schedule, inner);
}

/// Iterates se_step from eps^(0) = rho (or opt.init) until the max-norm MSE
/// change drops below opt.tol or opt.max_iter steps have run. Non-convergence
/// is reported in the trace, not thrown.
inline EvolutionTrace run_evolution(const CouplingSpec& spec, EnsembleKind kind,
                                    const SeOptions& opt = {}) {
  spec.validate();
  if (!(opt.tol > 0.0)) throw InputError("run_evolution: tol must be > 0");
  if (opt.max_iter < 1) throw InputError("run_evolution: max_iter must be >= 1");
  if (!(opt.damping >= 0.0 && opt.damping < 1.0)) {
    throw InputError("run_evolution: damping must lie in [0, 1)");
  }
  if (spec.prior.rho <= 0.0) throw InputError("run_evolution: rho must be > 0");

  Eigen::VectorXd eps0 = opt.init.value_or(Eigen::VectorXd::Constant(spec.cols(), spec.prior.rho));
  detail::check_eps(eps0, spec);

  EvolutionTrace trace;
  trace.history.push_back(eps0);
  ConjugateState state = initial_state(eps0, spec, kind, opt.schedule, opt.inner);
  if (state.clamped) trace.clamped_steps.push_back(0);

  for (std::size_t t = 1; t <= opt.max_iter; ++t) {
    ConjugateState next = se_step(state, spec, kind, opt.schedule, opt.inner);
    if (next.clamped) trace.clamped_steps.push_back(t);
    if (opt.damping > 0.0) {
      next.varsigma = (1.0 - opt.damping) * next.varsigma + opt.damping * state.varsigma;
    }
    const double change = (next.eps - state.eps).cwiseAbs().maxCoeff();
    trace.history.push_back(next.eps);
    trace.iterations = t;
    state = std::move(next);
    if (change < opt.tol) {
      trace.converged = true;
      break;
    }
    if (t >= 2) {
      const auto& back2 = trace.history[t - 2];
      if ((state.eps - back2).cwiseAbs().maxCoeff() < 1e-10 && change > 1e-10) {
        trace.oscillating = true;
      }
    }
  }
  trace.final_state = std::move(state);
  return trace;
}

/// First iteration t with max_p eps_p^(t) < threshold, if any.
inline std::optional<std::size_t> first_iteration_below(const EvolutionTrace& trace,
                                                        double threshold) {
  for (std::size_t t = 0; t < trace.history.size(); ++t) {
    if (trace.history[t].maxCoeff() < threshold) return t;
  }
  return std::nullopt;
}

}  // namespace sccs
