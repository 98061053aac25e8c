#pragma once

#include <random>

#include <sccs/coupling_spec.hpp>

namespace testing_util {

// Random valid coupled spec with small integer block sizes at size N: blocks
// of N_p columns and M_q <= min_p N_p rows so every block fits a DFT.
inline sccs::CouplingSpec random_spec(std::mt19937_64& gen, std::size_t N) {
  std::uniform_int_distribution<int> count(1, 4);
  const int Lc = count(gen);
  const int Lr = count(gen);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Column fractions from a random composition of N into multiples of 8.
  std::vector<double> w(Lc);
  double total = 0.0;
  for (auto& v : w) total += (v = 0.5 + unit(gen));
  sccs::CouplingSpec spec;
  spec.gamma.resize(Lc);
  std::size_t used = 0;
  std::size_t smallest = N;
  for (int p = 0; p < Lc; ++p) {
    std::size_t n = p + 1 == Lc ? N - used : std::max<std::size_t>(8, std::size_t(double(N) * w[p] / total) / 8 * 8);
    used += n;
    smallest = std::min(smallest, n);
    spec.gamma(p) = double(n) / double(N);
  }
  spec.gamma /= spec.gamma.sum();

  spec.alpha.resize(Lr, Lc);
  spec.J = Eigen::MatrixXd::Zero(Lr, Lc);
  for (int q = 0; q < Lr; ++q) {
    const auto m = std::size_t(1 + unit(gen) * double(smallest - 1));
    for (int p = 0; p < Lc; ++p) spec.alpha(q, p) = double(m) / double(N) / spec.gamma(p);
    for (int p = 0; p < Lc; ++p) {
      if (unit(gen) < 0.7) spec.J(q, p) = 0.2 + 2.0 * unit(gen);
    }
    if (spec.J.row(q).maxCoeff() == 0.0) spec.J(q, q % Lc) = 1.0;
  }
  for (int p = 0; p < Lc; ++p) {
    if (spec.J.col(p).maxCoeff() == 0.0) spec.J(p % Lr, p) = 1.0;
  }
  spec.sigma2 = 1e-3;
  spec.prior = sccs::BernoulliGaussianPrior(0.3);
  spec.validate();
  return spec;
}

}  // namespace testing_util
