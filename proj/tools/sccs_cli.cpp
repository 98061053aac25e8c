// Command-line driver: scalar MMSE tables, free-entropy curves, phase
// diagrams, coupled state evolution and synthetic instances.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <sccs/sccs.hpp>

namespace {

constexpr const char* kToolVersion = "1.0.0";

using nlohmann::json;

// JSON config: either flat {"option": value} for the invoked subcommand or
// nested {"subcommand": {"option": value}}.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* app) : app_(app) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json doc;
    try {
      input >> doc;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<std::string> active;
    for (const auto* sub : app_->get_subcommands()) active.push_back(sub->get_name());
    std::vector<CLI::ConfigItem> items;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      if (it->is_object()) {
        for (auto inner = it->begin(); inner != it->end(); ++inner) {
          items.push_back(item({it.key()}, inner.key(), *inner));
        }
      } else {
        items.push_back(item(active, it.key(), *it));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const json& v, const std::string& name) {
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return sccs::io::fmt(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    throw CLI::ConversionError("config value for '" + name + "' must be a scalar or an array of scalars");
  }

  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const json& v) {
    CLI::ConfigItem res;
    res.parents = std::move(parents);
    res.name = name;
    if (v.is_array()) {
      for (const auto& e : v) res.inputs.push_back(scalar(e, name));
    } else {
      res.inputs.push_back(scalar(v, name));
    }
    return res;
  }

  const CLI::App* app_;
};

// "0.1,1,10", "logspace:1e-6:1e-2:9" or "linspace:0:1:11".
std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
  auto fail = [&](const std::string& why) -> std::vector<double> {
    throw sccs::InputError(flag + ": " + why + " (got '" + text + "')");
  };
  auto number = [&](std::string_view s) {
    double v = 0.0;
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail("malformed number '" + std::string(s) + "'");
    }
    return v;
  };
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) parts.push_back(part);
    if (!s.empty() && s.back() == sep) parts.emplace_back();
    return parts;
  };
  if (text.empty()) return fail("grid is empty");
  if (text.rfind("logspace:", 0) == 0 || text.rfind("linspace:", 0) == 0) {
    const bool log = text[1] == 'o';
    const auto parts = split(text.substr(9), ':');
    if (parts.size() != 3) return fail("expected kind:start:stop:count");
    const double a = number(parts[0]);
    const double b = number(parts[1]);
    const double n = number(parts[2]);
    if (n < 1 || n != std::floor(n)) return fail("count must be a positive integer");
    if (log && !(a > 0.0 && b > 0.0)) return fail("logspace bounds must be > 0");
    const auto count = static_cast<std::size_t>(n);
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
      out[i] = log ? std::exp(std::log(a) + f * (std::log(b) - std::log(a))) : a + f * (b - a);
    }
    return out;
  }
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(number(part));
  return out;
}

// Resolved option values of a subcommand, for the provenance sidecar.
json resolved_config(const CLI::App* sub) {
  json cfg = json::object();
  for (const auto* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      cfg[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else if (!opt->get_default_str().empty()) {
      cfg[name] = opt->get_default_str();
    } else {
      cfg[name] = nullptr;
    }
  }
  return cfg;
}

json provenance(const CLI::App* sub) {
  return {{"tool", "sccs"}, {"version", kToolVersion}, {"command", sub->get_name()}, {"config", resolved_config(sub)}};
}

// Writes tabular output to `path`, or stdout when path is empty.
template <class Writer>
void emit(const std::string& path, Writer&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  auto out = sccs::io::open_output(path);
  write(out);
}

void emit_sidecar(const std::string& path, json doc) {
  if (!path.empty()) sccs::io::write_json(path + ".json", doc);
}

struct SeedingFlags {
  int L = 10;
  int W = 2;
  double alpha_seed = 0.70;
  double alpha_bulk = 0.49;
  double J = 0.5;

  void add(CLI::App* app) {
    app->add_option("--L", L, "number of blocks")->capture_default_str();
    app->add_option("--W", W, "coupling window width")->capture_default_str();
    app->add_option("--alpha-seed", alpha_seed, "rate of the first block-row")->capture_default_str();
    app->add_option("--alpha-bulk", alpha_bulk, "rate of the remaining block-rows")->capture_default_str();
    app->add_option("--J", J, "upper-diagonal coupling variance")->capture_default_str();
  }

  sccs::SeedingParams params() const { return {L, W, alpha_seed, alpha_bulk, J}; }
};

sccs::CouplingSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sccs::InputError("--spec: cannot read '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw sccs::InputError("--spec: '" + path + "' is not valid JSON: " + e.what());
  }
  return sccs::spec_from_json(doc);
}

int run(int argc, char** argv) {
  CLI::App app{"Bayes-optimal MSE and phase transitions of spatially coupled compressed sensing"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "JSON file supplying option values");
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_version_flag("--version", kToolVersion);

  // mmse
  auto* mmse_cmd = app.add_subcommand("mmse", "scalar-channel MMSE with a Monte-Carlo check column");
  double mmse_rho = 0.4;
  std::string mmse_grid = "0.1,1,10,100";
  std::size_t mc_samples = 100000;
  std::uint64_t mmse_seed = 1;
  std::string mmse_out;
  mmse_cmd->add_option("--rho", mmse_rho, "prior density")->capture_default_str();
  mmse_cmd->add_option("--varsigma-grid", mmse_grid, "channel precisions (list or log/linspace)")->capture_default_str();
  mmse_cmd->add_option("--mc-samples", mc_samples, "Monte-Carlo samples per row (0 disables)")->capture_default_str();
  mmse_cmd->add_option("--seed", mmse_seed, "Monte-Carlo seed")->capture_default_str();
  mmse_cmd->add_option("-o,--output", mmse_out, "CSV path (stdout if omitted)");

  // free-entropy
  auto* fe_cmd = app.add_subcommand("free-entropy", "free entropy F(eps) of a single block");
  double fe_rho = 0.4, fe_sigma2 = 1e-4, fe_alpha = 0.5;
  std::string fe_kind = "orthogonal";
  std::size_t fe_points = 2000;
  double fe_floor = 0.0;
  std::string fe_out;
  fe_cmd->add_option("--rho", fe_rho, "prior density")->capture_default_str();
  fe_cmd->add_option("--sigma2", fe_sigma2, "noise variance")->capture_default_str();
  fe_cmd->add_option("--alpha", fe_alpha, "measurement rate")->capture_default_str();
  fe_cmd->add_option("--ensemble", fe_kind, "orthogonal or gaussian")->capture_default_str();
  fe_cmd->add_option("--points", fe_points, "log-spaced grid points")->capture_default_str();
  fe_cmd->add_option("--floor", fe_floor, "smallest eps on the grid (0 = automatic)")->capture_default_str();
  fe_cmd->add_option("-o,--output", fe_out, "CSV path (stdout if omitted)");

  // phase-diagram
  auto* pd_cmd = app.add_subcommand("phase-diagram", "alpha_d, alpha_c, alpha_s over a noise grid");
  double pd_rho = 0.4;
  std::string pd_grid = "logspace:1e-6:1e-2:9";
  std::string pd_kind = "orthogonal";
  double pd_tol = 1e-5;
  std::size_t pd_points = 2000;
  unsigned pd_threads = 1;
  std::string pd_out;
  pd_cmd->add_option("--rho", pd_rho, "prior density")->capture_default_str();
  pd_cmd->add_option("--sigma2-grid", pd_grid, "noise variances (list or log/linspace)")->capture_default_str();
  pd_cmd->add_option("--ensemble", pd_kind, "orthogonal or gaussian")->capture_default_str();
  pd_cmd->add_option("--alpha-tol", pd_tol, "rate bracket tolerance")->capture_default_str();
  pd_cmd->add_option("--points", pd_points, "free-entropy grid points")->capture_default_str();
  pd_cmd->add_option("--threads", pd_threads, "worker threads for sweep points")->capture_default_str();
  pd_cmd->add_option("-o,--output", pd_out, "CSV path (stdout if omitted)");

  // evolve
  auto* ev_cmd = app.add_subcommand("evolve", "coupled state evolution");
  SeedingFlags ev_seed;
  ev_seed.add(ev_cmd);
  std::string ev_spec;
  double ev_rho = 0.4, ev_sigma2 = 1e-6;
  std::string ev_kind = "orthogonal";
  std::string ev_schedule = "self-consistent";
  double ev_tol = 1e-12, ev_damping = 0.0;
  std::size_t ev_max_iter = 100000;
  std::string ev_out;
  auto* ev_spec_opt = ev_cmd->add_option("--spec", ev_spec, "coupling spec JSON (replaces the seeding flags)");
  auto* ev_rho_opt = ev_cmd->add_option("--rho", ev_rho, "prior density")->capture_default_str();
  auto* ev_sigma2_opt = ev_cmd->add_option("--sigma2", ev_sigma2, "noise variance")->capture_default_str();
  ev_cmd->add_option("--ensemble", ev_kind, "orthogonal or gaussian")->capture_default_str();
  ev_cmd->add_option("--schedule", ev_schedule, "self-consistent or single-pass")->capture_default_str();
  ev_cmd->add_option("--tol", ev_tol, "stop when max |eps change| < tol")->capture_default_str();
  ev_cmd->add_option("--max-iter", ev_max_iter, "iteration cap")->capture_default_str();
  ev_cmd->add_option("--damping", ev_damping, "damping on varsigma in [0, 1)")->capture_default_str();
  ev_cmd->add_option("-o,--output", ev_out, "trace CSV path (stdout if omitted)");

  // gen-matrix
  auto* gm_cmd = app.add_subcommand("gen-matrix", "draw a coupled operator and a synthetic instance");
  SeedingFlags gm_seed;
  gm_seed.add(gm_cmd);
  std::string gm_spec;
  double gm_rho = 0.4, gm_sigma2 = 1e-6;
  std::size_t gm_N = 1000;
  std::uint64_t gm_op_seed = 1;
  std::optional<std::uint64_t> gm_inst_seed;
  std::string gm_kind = "orthogonal";
  std::string gm_out = "instance";
  auto* gm_spec_opt = gm_cmd->add_option("--spec", gm_spec, "coupling spec JSON (replaces the seeding flags)");
  auto* gm_rho_opt = gm_cmd->add_option("--rho", gm_rho, "prior density")->capture_default_str();
  auto* gm_sigma2_opt = gm_cmd->add_option("--sigma2", gm_sigma2, "noise variance")->capture_default_str();
  gm_cmd->add_option("--N", gm_N, "signal dimension")->capture_default_str();
  gm_cmd->add_option("--seed", gm_op_seed, "operator seed")->capture_default_str();
  gm_cmd->add_option("--instance-seed", gm_inst_seed, "signal and noise seed (defaults to --seed)");
  gm_cmd->add_option("--ensemble", gm_kind, "orthogonal or gaussian")->capture_default_str();
  gm_cmd->add_option("-o,--output", gm_out, "output prefix")->capture_default_str();

  // seeding-spec
  auto* ss_cmd = app.add_subcommand("seeding-spec", "write the JSON coupling spec of a seeding design");
  SeedingFlags ss_seed;
  ss_seed.add(ss_cmd);
  double ss_rho = 0.4, ss_sigma2 = 1e-6;
  std::string ss_out;
  ss_cmd->add_option("--rho", ss_rho, "prior density")->capture_default_str();
  ss_cmd->add_option("--sigma2", ss_sigma2, "noise variance")->capture_default_str();
  ss_cmd->add_option("-o,--output", ss_out, "JSON path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (mmse_cmd->parsed()) {
    const sccs::BernoulliGaussianPrior prior(mmse_rho);
    const auto grid = parse_grid(mmse_grid, "--varsigma-grid");
    for (double s : grid) {
      if (s < 0.0) throw sccs::InputError("--varsigma-grid: precisions must be >= 0");
    }
    json rows = json::array();
    emit(mmse_out, [&](std::ostream& out) {
      out << "varsigma,mmse,mc_estimate,mc_stderr\n";
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double m = sccs::mmse(grid[i], prior);
        out << sccs::io::fmt(grid[i]) << ',' << sccs::io::fmt(m);
        if (mc_samples > 0) {
          const auto mc = sccs::mmse_mc_oracle(grid[i], prior, mc_samples, mmse_seed + i);
          out << ',' << sccs::io::fmt(mc.estimate) << ',' << sccs::io::fmt(mc.std_err);
        } else {
          out << ",,";
        }
        out << '\n';
      }
    });
    emit_sidecar(mmse_out, provenance(mmse_cmd));
    return 0;
  }

  if (fe_cmd->parsed()) {
    const auto kind = sccs::parse_ensemble(fe_kind);
    if (!(fe_sigma2 > 0.0)) throw sccs::InputError("--sigma2 must be > 0");
    if (!(fe_alpha > 0.0)) throw sccs::InputError("--alpha must be > 0");
    if (fe_points < 8) throw sccs::InputError("--points must be >= 8");
    const auto tmpl = sccs::CouplingSpec::uncoupled(fe_alpha, fe_sigma2, fe_rho);
    sccs::CurveGrid grid;
    grid.points = fe_points;
    grid.floor = fe_floor;
    const auto curve = sccs::scan_curve(tmpl, fe_alpha, kind, grid);
    emit(fe_out, [&](std::ostream& out) { sccs::io::write_curve_csv(out, curve); });
    auto doc = provenance(fe_cmd);
    doc["maxima"] = sccs::io::maxima_json(curve);
    if (fe_out.empty()) {
      std::cerr << curve.maxima.size() << " local maxima\n";
    }
    emit_sidecar(fe_out, doc);
    return 0;
  }

  if (pd_cmd->parsed()) {
    const auto kind = sccs::parse_ensemble(pd_kind);
    const auto grid = parse_grid(pd_grid, "--sigma2-grid");
    for (double s : grid) {
      if (!(s > 0.0)) throw sccs::InputError("--sigma2-grid: noise variances must be > 0");
    }
    if (!(pd_tol > 0.0)) throw sccs::InputError("--alpha-tol must be > 0");
    if (pd_threads < 1) throw sccs::InputError("--threads must be >= 1");
    sccs::PhaseOptions opt;
    opt.alpha_tol = pd_tol;
    opt.grid.points = pd_points;
    const sccs::BernoulliGaussianPrior prior(pd_rho);
    const auto points = sccs::sweep_phase_diagram(prior.rho, grid, kind, opt, pd_threads);
    emit(pd_out, [&](std::ostream& out) { sccs::io::write_sweep_csv(out, points); });
    auto doc = provenance(pd_cmd);
    doc["points"] = sccs::io::sweep_json(points);
    emit_sidecar(pd_out, doc);
    const bool any_ok = std::any_of(points.begin(), points.end(),
                                    [](const sccs::PhasePoint& p) { return p.status.rfind("error", 0) != 0; });
    if (!any_ok) {
      std::cerr << "phase-diagram: every sweep point failed\n";
      return 3;
    }
    return 0;
  }

  if (ev_cmd->parsed()) {
    const auto kind = sccs::parse_ensemble(ev_kind);
    sccs::CouplingSpec spec;
    if (ev_spec_opt->count() > 0) {
      spec = load_spec(ev_spec);
      if (ev_rho_opt->count() > 0) spec.prior = sccs::BernoulliGaussianPrior(ev_rho);
      if (ev_sigma2_opt->count() > 0) spec.sigma2 = ev_sigma2;
      spec.validate();
    } else {
      spec = sccs::build_seeding_spec(ev_seed.params(), ev_rho, ev_sigma2);
    }
    sccs::SeOptions opt;
    opt.tol = ev_tol;
    opt.max_iter = ev_max_iter;
    opt.damping = ev_damping;
    if (ev_schedule == "self-consistent") {
      opt.schedule = sccs::SeSchedule::SelfConsistent;
    } else if (ev_schedule == "single-pass") {
      opt.schedule = sccs::SeSchedule::SinglePass;
    } else {
      throw sccs::InputError("--schedule must be self-consistent or single-pass");
    }
    const auto trace = sccs::run_evolution(spec, kind, opt);
    emit(ev_out, [&](std::ostream& out) { sccs::io::write_trace_csv(out, trace); });
    auto doc = provenance(ev_cmd);
    doc["trace"] = sccs::io::trace_json(trace, spec.sigma2);
    doc["overall_rate"] = spec.overall_rate();
    doc["spec"] = sccs::spec_to_json(spec);
    emit_sidecar(ev_out, doc);
    if (ev_out.empty()) {
      std::cerr << "converged=" << (trace.converged ? "true" : "false") << " iterations=" << trace.iterations << '\n';
    }
    return 0;
  }

  if (gm_cmd->parsed()) {
    const auto kind = sccs::parse_ensemble(gm_kind);
    sccs::CouplingSpec spec;
    if (gm_spec_opt->count() > 0) {
      spec = load_spec(gm_spec);
      if (gm_rho_opt->count() > 0) spec.prior = sccs::BernoulliGaussianPrior(gm_rho);
      if (gm_sigma2_opt->count() > 0) spec.sigma2 = gm_sigma2;
      spec.validate();
    } else {
      spec = sccs::build_seeding_spec(gm_seed.params(), gm_rho, gm_sigma2);
    }
    const auto op = sccs::build_coupled_operator(spec, gm_N, gm_op_seed, kind);
    const auto inst = sccs::gen_instance(op, spec.prior, std::sqrt(spec.sigma2), gm_inst_seed.value_or(gm_op_seed));
    sccs::io::write_instance(gm_out, op, inst);
    auto doc = provenance(gm_cmd);
    doc["blocks"] = sccs::io::block_stats_json(op);
    sccs::io::write_json(gm_out + "_stats.json", doc);
    return 0;
  }

  if (ss_cmd->parsed()) {
    const auto spec = sccs::build_seeding_spec(ss_seed.params(), ss_rho, ss_sigma2);
    const auto doc = sccs::spec_to_json(spec);
    emit(ss_out, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sccs::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const sccs::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  }
}
