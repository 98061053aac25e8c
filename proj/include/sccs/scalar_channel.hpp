#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <sstream>

#include "errors.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace sccs {

/// Sparse prior: x = 0 with probability 1 - rho, otherwise x ~ CN(0, 1).
struct BernoulliGaussianPrior {
  double rho = 0.0;

  BernoulliGaussianPrior() = default;
  explicit BernoulliGaussianPrior(double density) : rho(density) {
    if (!(density >= 0.0 && density <= 1.0)) {
      std::ostringstream msg;
      msg << "prior density rho must lie in [0, 1], got " << density;
      throw InputError(msg.str());
    }
  }

  /// E|x|^2. The nonzero part has unit variance.
  double second_moment() const noexcept { return rho; }

  std::complex<double> sample(CounterRng& rng) const noexcept {
    const double u = rng.uniform();
    const auto z = rng.complex_normal();
    return u < rho ? z : std::complex<double>{};
  }
};

/// Scalar AWGN channel y = x + varsigma^{-1/2} z with precision varsigma.
struct ScalarChannel {
  double varsigma = 0.0;

  ScalarChannel() = default;
  explicit ScalarChannel(double precision) : varsigma(precision) {
    if (!(precision >= 0.0) || !std::isfinite(precision)) {
      std::ostringstream msg;
      msg << "channel precision varsigma must be finite and >= 0, got " << precision;
      throw InputError(msg.str());
    }
  }
};

/// Posterior mean E{x | y} for the Bernoulli-Gaussian prior.
///
/// The mixture weight of the nonzero component is evaluated as a logistic
/// function of the log-density ratio so that neither Gaussian factor can
/// underflow. At varsigma = 0 the observation carries no information and the
/// prior mean 0 is returned.
inline std::complex<double> posterior_mean(std::complex<double> y, ScalarChannel ch,
                                           BernoulliGaussianPrior prior) {
  if (!std::isfinite(y.real()) || !std::isfinite(y.imag())) {
    throw InputError("posterior_mean: observation y must be finite");
  }
  const double s = ch.varsigma;
  const double rho = prior.rho;
  if (s == 0.0 || rho == 0.0) return {};
  const double shrink = s / (1.0 + s);
  if (rho == 1.0) return shrink * y;

  // log[(1-rho) N(y; 1/s)] - log[rho N(y; 1 + 1/s)]
  //   = log((1-rho)/rho) + log(1 + s) - |y|^2 s^2 / (1 + s)
  const double y2 = std::norm(y);
  const double log_ratio = std::log1p(-rho) - std::log(rho) + std::log1p(s) - y2 * s * shrink;
  const double weight = log_ratio > 0.0 ? std::exp(-log_ratio) / (1.0 + std::exp(-log_ratio))
                                        : 1.0 / (1.0 + std::exp(log_ratio));
  return weight * shrink * y;
}

/// Minimum mean-square error of the scalar channel.
///
/// The complex Gaussian average is reduced to a radial integral over t = |z|^2
/// and rearranged so that every term of the integrand is positive:
///
///   mmse = rho * Int_0^inf t e^{-t} (rho + (s+1) E) / ((s+1)(rho + E)) dt,
///   E    = (1 - rho)(s + 1) e^{-t s}.
///
/// This is algebraically identical to rho - rho^2 s/(s+1) Int Dz |z|^2/(...)
/// but has no cancellation when the mmse is small. Integration stops at
/// t = 40, where the neglected tail is below 1e-16.
inline double mmse(double varsigma, BernoulliGaussianPrior prior) {
  if (!(varsigma >= 0.0) || !std::isfinite(varsigma)) {
    std::ostringstream msg;
    msg << "mmse: varsigma must be finite and >= 0, got " << varsigma;
    throw InputError(msg.str());
  }
  const double rho = prior.rho;
  if (varsigma == 0.0) return rho;
  if (rho == 0.0) return 0.0;
  const double s = varsigma;
  if (rho == 1.0) return 1.0 / (1.0 + s);

  const double log_b = std::log1p(-rho) + std::log1p(s);
  auto integrand = [&](double t) {
    const double e = std::exp(log_b - t * s);
    return t * std::exp(-t) * (rho + (s + 1.0) * e) / ((s + 1.0) * (rho + e));
  };
  // The mixture weight switches where E = rho; the switch has width ~1/s.
  // The value shrinks like 1/s, so accuracy is controlled relatively.
  const double t_switch = (log_b - std::log(rho)) / s;
  auto breaks = quad::graded_breaks(t_switch, 1.0 / s, 0.0, 40.0);
  breaks.push_back(1.0);
  const auto r = quad::integrate(integrand, 0.0, 40.0, std::move(breaks), 1e-30);
  return std::clamp(rho * r.value, 0.0, rho);
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
};

/// Monte-Carlo estimate of the scalar-channel mmse: draws (x, z), forms
/// y = x + z / sqrt(varsigma) and averages |x - posterior_mean(y)|^2.
/// Deterministic for a given seed. varsigma = 0 is accepted and uses the
/// posterior-mean convention (estimate of E|x|^2).
inline MonteCarloEstimate mmse_mc_oracle(double varsigma, BernoulliGaussianPrior prior,
                                         std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw InputError("mmse_mc_oracle: n_samples must be >= 1");
  const ScalarChannel ch(varsigma);
  const double noise = varsigma > 0.0 ? 1.0 / std::sqrt(varsigma) : 0.0;
  CounterRng rng(seed, "mmse_mc_oracle");

  // Welford accumulation.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto x = prior.sample(rng);
    const auto z = rng.complex_normal();
    const auto y = x + noise * z;
    const double err = std::norm(x - posterior_mean(y, ch, prior));
    const double delta = err - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (err - mean);
  }
  MonteCarloEstimate out;
  out.estimate = mean;
  if (n_samples > 1) {
    const double n = static_cast<double>(n_samples);
    out.std_err = std::sqrt(m2 / (n - 1.0) / n);
  }
  return out;
}

}  // namespace sccs
