#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "coupling_spec.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "scalar_channel.hpp"

namespace sccs {

using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;

namespace detail {

// FFTW's planner is not reentrant; execution with the new-array interface is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftPlan {
  fftw_plan plan = nullptr;
  ~FftPlan() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

inline std::shared_ptr<FftPlan> make_plan(int n, int sign) {
  std::vector<std::complex<double>> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  auto p = std::make_shared<FftPlan>();
  std::lock_guard lock(fftw_planner_mutex());
  p->plan = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(in.data()),
                             reinterpret_cast<fftw_complex*>(out.data()), sign,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p->plan) throw NumericError("fftw: failed to create a plan of size " + std::to_string(n));
  return p;
}

}  // namespace detail

/// Rows `rows` of the unitary n-point DFT, applied after a column permutation
/// (Px)_k = x[perm[k]], times `scale`.
struct DftBlock {
  std::size_t n = 0;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> perm;
  double scale = 0.0;

  std::size_t m() const noexcept { return rows.size(); }

  /// Every entry has modulus scale / sqrt(n).
  double entry_modulus() const noexcept { return scale / std::sqrt(static_cast<double>(n)); }
};

/// Dense block with i.i.d. CN(0, J/N) entries.
struct GaussianBlock {
  cmat entries;
};

using OperatorBlock = std::variant<std::monostate, DftBlock, GaussianBlock>;

/// Block measurement matrix built from a CouplingSpec at a concrete size N.
///
/// Signal block p occupies columns [col_offset[p], col_offset[p+1]); measurement
/// block q occupies rows [row_offset[q], row_offset[q+1]).
struct CoupledOperator {
  CouplingSpec spec;
  EnsembleKind kind = EnsembleKind::RowOrthogonal;
  std::size_t N = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> row_offset;
  std::vector<std::size_t> col_offset;
  std::vector<OperatorBlock> blocks;  // row-major, rows() x cols()
  std::map<int, std::shared_ptr<detail::FftPlan>> forward_plans;
  std::map<int, std::shared_ptr<detail::FftPlan>> backward_plans;

  std::size_t rows() const noexcept { return row_offset.size() - 1; }
  std::size_t cols() const noexcept { return col_offset.size() - 1; }
  std::size_t M() const noexcept { return row_offset.back(); }
  std::size_t block_rows(std::size_t q) const { return row_offset[q + 1] - row_offset[q]; }
  std::size_t block_cols(std::size_t p) const { return col_offset[p + 1] - col_offset[p]; }

  const OperatorBlock& block(std::size_t q, std::size_t p) const { return blocks[q * cols() + p]; }
};

/// N i.i.d. draws from the prior.
inline cvec sample_signal(std::size_t N, const BernoulliGaussianPrior& prior, std::uint64_t seed) {
  if (N < 1) throw InputError("sample_signal: N must be >= 1");
  CounterRng rng(seed, "signal");
  cvec x(static_cast<Eigen::Index>(N));
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = prior.sample(rng);
  return x;
}

/// Integer block sizes: N_p = floor(gamma_p N) with the remainder added to the
/// last block, and M_q = round(M_q/N * N).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> block_sizes(const CouplingSpec& spec,
                                                                                std::size_t N) {
  const auto Lc = static_cast<std::size_t>(spec.cols());
  const auto Lr = static_cast<std::size_t>(spec.rows());
  std::vector<std::size_t> cols(Lc), rows(Lr);
  std::size_t used = 0;
  for (std::size_t p = 0; p < Lc; ++p) {
    // The slack keeps an exact integer gamma_p N from rounding down.
    cols[p] = static_cast<std::size_t>(std::floor(spec.gamma(static_cast<Eigen::Index>(p)) * static_cast<double>(N) + 1e-9));
    used += cols[p];
  }
  cols.back() += N - used;
  for (std::size_t p = 0; p < Lc; ++p) {
    if (cols[p] == 0) {
      std::ostringstream msg;
      msg << "build_coupled_operator: N=" << N << " leaves signal block " << p << " empty";
      throw InputError(msg.str());
    }
  }
  for (std::size_t q = 0; q < Lr; ++q) {
    rows[q] = static_cast<std::size_t>(std::llround(spec.row_rate(static_cast<Eigen::Index>(q)) * static_cast<double>(N)));
  }
  return {rows, cols};
}

/// Draws every block of the coupled operator. Randomness is split per block
/// (q, p) so each block is reproducible on its own.
inline CoupledOperator build_coupled_operator(const CouplingSpec& spec, std::size_t N, std::uint64_t seed,
                                              EnsembleKind kind) {
  spec.validate();
  if (N < 1) throw InputError("build_coupled_operator: N must be >= 1");
  CoupledOperator op;
  op.spec = spec;
  op.kind = kind;
  op.N = N;
  op.seed = seed;
  const auto [rows, cols] = block_sizes(spec, N);
  op.row_offset.assign(rows.size() + 1, 0);
  op.col_offset.assign(cols.size() + 1, 0);
  for (std::size_t q = 0; q < rows.size(); ++q) op.row_offset[q + 1] = op.row_offset[q] + rows[q];
  for (std::size_t p = 0; p < cols.size(); ++p) op.col_offset[p + 1] = op.col_offset[p] + cols[p];

  const double dN = static_cast<double>(N);
  op.blocks.resize(rows.size() * cols.size());
  for (std::size_t q = 0; q < rows.size(); ++q) {
    for (std::size_t p = 0; p < cols.size(); ++p) {
      const double J = spec.J(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(p));
      if (J == 0.0 || rows[q] == 0) continue;
      auto& slot = op.blocks[q * cols.size() + p];
      if (kind == EnsembleKind::RowOrthogonal) {
        if (rows[q] > cols[p]) {
          std::ostringstream msg;
          msg << "build_coupled_operator: block (" << q << "," << p << ") needs " << rows[q]
              << " distinct DFT rows but has only " << cols[p];
          throw InputError(msg.str());
        }
        DftBlock b;
        b.n = cols[p];
        CounterRng row_rng(seed, "dft_rows", q, p);
        CounterRng perm_rng(seed, "dft_perm", q, p);
        b.rows = sample_without_replacement(b.n, rows[q], row_rng);
        b.perm = random_permutation(b.n, perm_rng);
        // Realized gamma_p = N_p / N keeps the entry variance at exactly J / N.
        b.scale = std::sqrt(J * static_cast<double>(b.n) / dN);
        const int n = static_cast<int>(b.n);
        if (!op.forward_plans.contains(n)) {
          op.forward_plans[n] = detail::make_plan(n, FFTW_FORWARD);
          op.backward_plans[n] = detail::make_plan(n, FFTW_BACKWARD);
        }
        slot = std::move(b);
      } else {
        GaussianBlock b;
        CounterRng rng(seed, "gaussian_block", q, p);
        const double sd = std::sqrt(J / dN);
        b.entries.resize(static_cast<Eigen::Index>(rows[q]), static_cast<Eigen::Index>(cols[p]));
        for (Eigen::Index i = 0; i < b.entries.rows(); ++i) {
          for (Eigen::Index j = 0; j < b.entries.cols(); ++j) b.entries(i, j) = sd * rng.complex_normal();
        }
        slot = std::move(b);
      }
    }
  }
  return op;
}

namespace detail {

inline void execute(const FftPlan& plan, const std::complex<double>* in, std::complex<double>* out) {
  fftw_execute_dft(plan.plan, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

}  // namespace detail

/// y = A x via one FFT per nonzero DFT block.
inline cvec apply(const CoupledOperator& op, const cvec& x) {
  if (static_cast<std::size_t>(x.size()) != op.N) {
    std::ostringstream msg;
    msg << "apply: x has length " << x.size() << ", operator expects " << op.N;
    throw InputError(msg.str());
  }
  cvec y = cvec::Zero(static_cast<Eigen::Index>(op.M()));
  std::vector<std::complex<double>> buf, spectrum;
  for (std::size_t q = 0; q < op.rows(); ++q) {
    const auto r0 = static_cast<Eigen::Index>(op.row_offset[q]);
    for (std::size_t p = 0; p < op.cols(); ++p) {
      const auto c0 = static_cast<Eigen::Index>(op.col_offset[p]);
      const auto& blk = op.block(q, p);
      if (const auto* d = std::get_if<DftBlock>(&blk)) {
        buf.resize(d->n);
        spectrum.resize(d->n);
        for (std::size_t k = 0; k < d->n; ++k) buf[k] = x(c0 + static_cast<Eigen::Index>(d->perm[k]));
        detail::execute(*op.forward_plans.at(static_cast<int>(d->n)), buf.data(), spectrum.data());
        const double c = d->entry_modulus();
        for (std::size_t i = 0; i < d->m(); ++i) y(r0 + static_cast<Eigen::Index>(i)) += c * spectrum[d->rows[i]];
      } else if (const auto* g = std::get_if<GaussianBlock>(&blk)) {
        y.segment(r0, g->entries.rows()).noalias() += g->entries * x.segment(c0, g->entries.cols());
      }
    }
  }
  return y;
}

/// x = A^H y.
inline cvec adjoint_apply(const CoupledOperator& op, const cvec& y) {
  if (static_cast<std::size_t>(y.size()) != op.M()) {
    std::ostringstream msg;
    msg << "adjoint_apply: y has length " << y.size() << ", operator expects " << op.M();
    throw InputError(msg.str());
  }
  cvec x = cvec::Zero(static_cast<Eigen::Index>(op.N));
  std::vector<std::complex<double>> buf, signal;
  for (std::size_t q = 0; q < op.rows(); ++q) {
    const auto r0 = static_cast<Eigen::Index>(op.row_offset[q]);
    for (std::size_t p = 0; p < op.cols(); ++p) {
      const auto c0 = static_cast<Eigen::Index>(op.col_offset[p]);
      const auto& blk = op.block(q, p);
      if (const auto* d = std::get_if<DftBlock>(&blk)) {
        buf.assign(d->n, {});
        signal.resize(d->n);
        for (std::size_t i = 0; i < d->m(); ++i) buf[d->rows[i]] = y(r0 + static_cast<Eigen::Index>(i));
        detail::execute(*op.backward_plans.at(static_cast<int>(d->n)), buf.data(), signal.data());
        const double c = d->entry_modulus();
        for (std::size_t k = 0; k < d->n; ++k) x(c0 + static_cast<Eigen::Index>(d->perm[k])) += c * signal[k];
      } else if (const auto* g = std::get_if<GaussianBlock>(&blk)) {
        x.segment(c0, g->entries.cols()).noalias() += g->entries.adjoint() * y.segment(r0, g->entries.rows());
      }
    }
  }
  return x;
}

/// Entries of block (q, p), built directly from the DFT formula rather than
/// through the FFT path.
inline cmat materialize_block(const CoupledOperator& op, std::size_t q, std::size_t p) {
  const auto m = static_cast<Eigen::Index>(op.block_rows(q));
  const auto n = static_cast<Eigen::Index>(op.block_cols(p));
  cmat out = cmat::Zero(m, n);
  const auto& blk = op.block(q, p);
  if (const auto* d = std::get_if<DftBlock>(&blk)) {
    const double c = d->entry_modulus();
    const double w = -2.0 * std::numbers::pi / static_cast<double>(d->n);
    for (std::size_t i = 0; i < d->m(); ++i) {
      for (std::size_t k = 0; k < d->n; ++k) {
        // Reduce the phase index modulo n before converting to an angle.
        const auto e = (d->rows[i] * k) % d->n;
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d->perm[k])) =
            std::polar(c, w * static_cast<double>(e));
      }
    }
  } else if (const auto* g = std::get_if<GaussianBlock>(&blk)) {
    out = g->entries;
  }
  return out;
}

inline constexpr std::size_t kDenseLimit = 4096;

/// Full M x N matrix. Test oracle only; refuses N > 4096.
inline cmat dense_materialize(const CoupledOperator& op) {
  if (op.N > kDenseLimit) {
    std::ostringstream msg;
    msg << "dense_materialize: N=" << op.N << " exceeds the limit of " << kDenseLimit;
    throw InputError(msg.str());
  }
  cmat A = cmat::Zero(static_cast<Eigen::Index>(op.M()), static_cast<Eigen::Index>(op.N));
  for (std::size_t q = 0; q < op.rows(); ++q) {
    for (std::size_t p = 0; p < op.cols(); ++p) {
      A.block(static_cast<Eigen::Index>(op.row_offset[q]), static_cast<Eigen::Index>(op.col_offset[p]),
              static_cast<Eigen::Index>(op.block_rows(q)), static_cast<Eigen::Index>(op.block_cols(p))) =
          materialize_block(op, q, p);
    }
  }
  return A;
}

/// Empirical mean squared modulus of each block's entries (0 for empty blocks).
inline Eigen::MatrixXd block_entry_variance(const CoupledOperator& op) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(op.rows()), static_cast<Eigen::Index>(op.cols()));
  for (std::size_t q = 0; q < op.rows(); ++q) {
    for (std::size_t p = 0; p < op.cols(); ++p) {
      if (std::holds_alternative<std::monostate>(op.block(q, p))) continue;
      const cmat b = materialize_block(op, q, p);
      if (b.size() == 0) continue;
      // Neumaier summation; a plain running sum drifts by ~size * eps.
      double sum = 0.0, carry = 0.0;
      for (Eigen::Index i = 0; i < b.size(); ++i) {
        const double x = std::norm(b.data()[i]);
        const double t = sum + x;
        carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
      }
      v(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(p)) = (sum + carry) / static_cast<double>(b.size());
    }
  }
  return v;
}

struct SyntheticInstance {
  cvec x;
  cvec y;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// y = A x + sigma z with x from the prior and z ~ CN(0, I).
inline SyntheticInstance gen_instance(const CoupledOperator& op, const BernoulliGaussianPrior& prior, double sigma,
                                      std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputError("gen_instance: sigma must be finite and >= 0");
  SyntheticInstance inst;
  inst.sigma = sigma;
  inst.seed = seed;
  inst.x = sample_signal(op.N, prior, seed);
  inst.y = sccs::apply(op, inst.x);
  if (sigma > 0.0) {
    CounterRng rng(seed, "noise");
    for (Eigen::Index i = 0; i < inst.y.size(); ++i) inst.y(i) += sigma * rng.complex_normal();
  }
  return inst;
}

}  // namespace sccs
