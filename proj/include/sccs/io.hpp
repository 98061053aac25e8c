#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coupling.hpp"
#include "errors.hpp"
#include "measurement_ops.hpp"
#include "phase_analysis.hpp"
#include "state_evolution.hpp"

namespace sccs::io {

// Shortest decimal that round-trips, so output is byte-stable and lossless.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string{}; }

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

// t, eps_1 ... eps_L
inline void write_trace_csv(std::ostream& out, const EvolutionTrace& trace) {
  const auto L = trace.history.empty() ? Eigen::Index{0} : trace.history.front().size();
  out << "t";
  for (Eigen::Index p = 0; p < L; ++p) out << ",eps_" << (p + 1);
  out << '\n';
  for (std::size_t t = 0; t < trace.history.size(); ++t) {
    out << t;
    for (Eigen::Index p = 0; p < L; ++p) out << ',' << fmt(trace.history[t](p));
    out << '\n';
  }
}

inline nlohmann::json trace_json(const EvolutionTrace& trace, double sigma2) {
  nlohmann::json final_eps = nlohmann::json::array();
  if (!trace.history.empty()) {
    for (Eigen::Index p = 0; p < trace.history.back().size(); ++p) final_eps.push_back(trace.history.back()(p));
  }
  nlohmann::json doc = {{"converged", trace.converged},
                        {"iterations", trace.iterations},
                        {"oscillating", trace.oscillating},
                        {"clamped_steps", trace.clamped_steps},
                        {"final_eps", final_eps}};
  const auto below = first_iteration_below(trace, 10.0 * sigma2);
  doc["first_iteration_max_eps_below_10_sigma2"] = below ? nlohmann::json(*below) : nlohmann::json(nullptr);
  return doc;
}

// sigma2, alpha_d, alpha_c, alpha_s, sharp, status. Missing values are empty.
inline void write_sweep_csv(std::ostream& out, const std::vector<PhasePoint>& points) {
  out << "sigma2,alpha_d,alpha_c,alpha_s,sharp,status\n";
  for (const auto& pt : points) {
    std::string status = pt.status;
    for (char& c : status) {
      if (c == ',' || c == '\n') c = ';';
    }
    out << fmt(pt.sigma2) << ',' << fmt(pt.alpha_d) << ',' << fmt(pt.alpha_c) << ',' << fmt(pt.alpha_s) << ','
        << (pt.sharp ? "true" : "false") << ',' << status << '\n';
  }
}

inline nlohmann::json sweep_json(const std::vector<PhasePoint>& points) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& pt : points) {
    rows.push_back({{"sigma2", pt.sigma2},
                    {"alpha_d", opt_json(pt.alpha_d)},
                    {"alpha_c", opt_json(pt.alpha_c)},
                    {"alpha_s", opt_json(pt.alpha_s)},
                    {"sharp", pt.sharp},
                    {"status", pt.status},
                    {"curve_scans", pt.curve_scans},
                    {"maxima_gap_at_alpha_c", opt_json(pt.maxima_gap_at_alpha_c)}});
  }
  return rows;
}

inline void write_curve_csv(std::ostream& out, const FreeEntropyCurve& curve) {
  out << "eps,F\n";
  for (std::size_t i = 0; i < curve.eps_grid.size(); ++i) {
    out << fmt(curve.eps_grid[i]) << ',' << fmt(curve.values[i]) << '\n';
  }
}

inline nlohmann::json maxima_json(const FreeEntropyCurve& curve) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : curve.maxima) {
    rows.push_back({{"eps", m.eps}, {"F", m.value}, {"prominence", m.prominence}});
  }
  return rows;
}

inline void write_complex_csv(std::ostream& out, const cvec& v) {
  out << "re,im\n";
  for (Eigen::Index i = 0; i < v.size(); ++i) out << fmt(v(i).real()) << ',' << fmt(v(i).imag()) << '\n';
}

/// Per-block empirical entry variance next to its target J/N.
inline nlohmann::json block_stats_json(const CoupledOperator& op) {
  const Eigen::MatrixXd v = block_entry_variance(op);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t q = 0; q < op.rows(); ++q) {
    for (std::size_t p = 0; p < op.cols(); ++p) {
      const double J = op.spec.J(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(p));
      if (J == 0.0 || op.block_rows(q) == 0) continue;
      const double target = J / static_cast<double>(op.N);
      const double emp = v(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(p));
      rows.push_back({{"q", q}, {"p", p}, {"rows", op.block_rows(q)}, {"cols", op.block_cols(p)},
                      {"empirical_variance", emp}, {"target_variance", target}, {"ratio", emp / target}});
    }
  }
  return rows;
}

/// Writes <prefix>.json (header), <prefix>_x.csv and <prefix>_y.csv.
inline void write_instance(const std::filesystem::path& prefix, const CoupledOperator& op,
                           const SyntheticInstance& inst) {
  const std::string base = prefix.string();
  nlohmann::json header = {{"N", op.N},
                           {"M", op.M()},
                           {"ensemble", to_string(op.kind)},
                           {"operator_seed", op.seed},
                           {"instance_seed", inst.seed},
                           {"sigma", inst.sigma},
                           {"row_offsets", op.row_offset},
                           {"col_offsets", op.col_offset},
                           {"x_file", std::filesystem::path(base + "_x.csv").filename().string()},
                           {"y_file", std::filesystem::path(base + "_y.csv").filename().string()},
                           {"spec", spec_to_json(op.spec)}};
  write_json(base + ".json", header);
  {
    auto out = open_output(base + "_x.csv");
    write_complex_csv(out, inst.x);
  }
  auto out = open_output(base + "_y.csv");
  write_complex_csv(out, inst.y);
}

}  // namespace sccs::io
