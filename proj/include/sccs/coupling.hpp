#pragma once

#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "coupling_spec.hpp"
#include "errors.hpp"

namespace sccs {

/// Parameters of a seeded band coupling: L blocks on each side, a first
/// block-row measured at alpha_seed and the rest at alpha_bulk.
struct SeedingParams {
  int L = 1;
  int W = 1;
  double alpha_seed = 0.0;
  double alpha_bulk = 0.0;
  double J = 0.0;

  void validate() const {
    if (L < 1) throw InputError("seeding: L must be >= 1");
    if (W < 1 || W > L) throw InputError("seeding: W must satisfy 1 <= W <= L");
    if (!(alpha_seed > 0.0)) throw InputError("seeding: alpha_seed must be > 0");
    if (!(alpha_bulk > 0.0)) throw InputError("seeding: alpha_bulk must be > 0");
    if (!(J >= 0.0)) throw InputError("seeding: J must be >= 0");
  }
};

/// Band coupling with unit variance on the diagonal and the W - 1 block
/// diagonals below it, variance J on the single block diagonal above it, and
/// zero elsewhere. gamma_p = 1/L.
inline CouplingSpec build_seeding_spec(const SeedingParams& params, double rho, double sigma2) {
  params.validate();
  const int L = params.L;
  CouplingSpec spec;
  spec.gamma = Eigen::VectorXd::Constant(L, 1.0 / L);
  spec.alpha = Eigen::MatrixXd::Constant(L, L, params.alpha_bulk);
  spec.alpha.row(0).setConstant(params.alpha_seed);
  spec.J = Eigen::MatrixXd::Zero(L, L);
  for (int q = 0; q < L; ++q) {
    for (int p = 0; p < L; ++p) {
      const int below = q - p;
      if (below >= 0 && below <= params.W - 1) spec.J(q, p) = 1.0;
      else if (p == q + 1) spec.J(q, p) = params.J;
    }
  }
  spec.sigma2 = sigma2;
  spec.prior = BernoulliGaussianPrior(rho);
  spec.validate();
  return spec;
}

/// Sum over block-rows of M_q / N.
inline double overall_rate(const CouplingSpec& spec) { return spec.overall_rate(); }

// JSON document, schema "sccs.coupling_spec" version "v1".

inline constexpr const char* kSpecSchema = "sccs.coupling_spec";
inline constexpr const char* kSpecVersion = "v1";

inline nlohmann::json spec_to_json(const CouplingSpec& spec) {
  auto matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index q = 0; q < m.rows(); ++q) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index p = 0; p < m.cols(); ++p) row.push_back(m(q, p));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  nlohmann::json gamma = nlohmann::json::array();
  for (Eigen::Index p = 0; p < spec.gamma.size(); ++p) gamma.push_back(spec.gamma(p));
  return {{"schema", kSpecSchema}, {"version", kSpecVersion}, {"L_r", spec.rows()},
          {"L_c", spec.cols()},    {"gamma", gamma},          {"alpha", matrix(spec.alpha)},
          {"J", matrix(spec.J)},   {"sigma2", spec.sigma2},   {"rho", spec.prior.rho}};
}

inline CouplingSpec spec_from_json(const nlohmann::json& doc) {
  auto fail = [](const std::string& what) { throw InputError("coupling spec document: " + what); };
  if (!doc.is_object()) fail("top level must be an object");
  if (doc.value("schema", std::string{}) != kSpecSchema) fail("schema must be \"sccs.coupling_spec\"");
  if (doc.value("version", std::string{}) != kSpecVersion) fail("unsupported version (expected \"v1\")");
  for (const char* key : {"gamma", "alpha", "J", "sigma2", "rho"}) {
    if (!doc.contains(key)) fail(std::string("missing field '") + key + "'");
  }
  auto matrix = [&](const char* key) {
    const auto& rows = doc.at(key);
    if (!rows.is_array() || rows.empty() || !rows[0].is_array()) fail(std::string(key) + " must be a nested array");
    const auto n_rows = static_cast<Eigen::Index>(rows.size());
    const auto n_cols = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(n_rows, n_cols);
    for (Eigen::Index q = 0; q < n_rows; ++q) {
      const auto& row = rows[static_cast<std::size_t>(q)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n_cols) {
        fail(std::string(key) + " rows must all have the same length");
      }
      for (Eigen::Index p = 0; p < n_cols; ++p) {
        const auto& v = row[static_cast<std::size_t>(p)];
        if (!v.is_number()) fail(std::string(key) + " entries must be numbers");
        m(q, p) = v.get<double>();
      }
    }
    return m;
  };
  CouplingSpec spec;
  const auto& gamma = doc.at("gamma");
  if (!gamma.is_array()) fail("gamma must be an array");
  spec.gamma.resize(static_cast<Eigen::Index>(gamma.size()));
  for (std::size_t p = 0; p < gamma.size(); ++p) {
    if (!gamma[p].is_number()) fail("gamma entries must be numbers");
    spec.gamma(static_cast<Eigen::Index>(p)) = gamma[p].get<double>();
  }
  spec.alpha = matrix("alpha");
  spec.J = matrix("J");
  if (!doc.at("sigma2").is_number() || !doc.at("rho").is_number()) fail("sigma2 and rho must be numbers");
  spec.sigma2 = doc.at("sigma2").get<double>();
  spec.prior = BernoulliGaussianPrior(doc.at("rho").get<double>());
  spec.validate();
  return spec;
}

}  // namespace sccs
