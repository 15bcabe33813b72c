#pragma once

// File formats: the measurement matrix and design report as JSON, the
// correlation matrix / beam patterns / trials / summaries / spectra as CSV,
// and the experiment configuration schema (schema_version 1). Angles are
// written with 4 decimals; complex values are never serialized raw.

#include "risdoa/bench.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace risdoa {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

inline std::string fmt_g(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail

// ---- measurement matrix: {"n": N, "p": P, "rows": ["0101...", ...]} ----

inline Json matrix_to_json(const MeasurementMatrix& m) {
  Json j;
  j["n"] = m.n();
  j["p"] = m.p();
  std::vector<std::string> rows;
  rows.reserve(m.rows().size());
  for (const auto& r : m.rows()) rows.push_back(r.to_string());
  j["rows"] = rows;
  return j;
}

inline MeasurementMatrix matrix_from_json(const Json& j) {
  if (!j.contains("n") || !j.contains("p") || !j.contains("rows"))
    throw ConfigError("matrix json: requires n, p, rows");
  const int n = j.at("n").get<int>();
  const int p = j.at("p").get<int>();
  if (n < 2 || p < 1) throw ConfigError("matrix json: invalid n or p");
  const auto& rows = j.at("rows");
  if (!rows.is_array() || static_cast<int>(rows.size()) != p)
    throw ConfigError("matrix json: rows count must equal p");
  std::vector<PhaseCode> codes;
  codes.reserve(p);
  for (const auto& r : rows) {
    const std::string s = r.get<std::string>();
    if (static_cast<int>(s.size()) != n)
      throw ConfigError("matrix json: row length must equal n");
    for (char c : s)
      if (c != '0' && c != '1') throw ConfigError("matrix json: rows must be '0'/'1' strings");
    codes.push_back(PhaseCode::from_string(s));
  }
  return MeasurementMatrix(std::move(codes));
}

inline void save_matrix(const MeasurementMatrix& m, const std::filesystem::path& path) {
  detail::write_file(path, matrix_to_json(m).dump(2) + "\n");
}

inline MeasurementMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix file: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("matrix file is not valid json: " + std::string(e.what()));
  }
  return matrix_from_json(j);
}

// ---- design report ----

inline Json design_report_to_json(const DesignReport& report) {
  Json j;
  j["matrix"] = matrix_to_json(report.matrix);
  j["coherence"] = report.coherence;
  Json rows = Json::array();
  for (const auto& r : report.per_row) {
    rows.push_back({{"pointing_deg", r.pointing_deg},
                    {"highest_sidelobe_db", r.highest_sidelobe_db},
                    {"fitness", r.fitness},
                    {"generations_used", r.generations_used}});
  }
  j["rows"] = rows;
  return j;
}

// P x P correlation coefficients, 6 decimals, no header.
inline std::string correlation_csv(const MeasurementMatrix& m) {
  std::ostringstream out;
  for (int p = 0; p < m.p(); ++p) {
    for (int q = 0; q < m.p(); ++q) {
      if (q) out << ',';
      const double rho = p == q ? 1.0
                                : correlation(Eigen::VectorXd(m.signs().row(p)),
                                              Eigen::VectorXd(m.signs().row(q)));
      out << detail::fmt(rho, 6);
    }
    out << '\n';
  }
  return out.str();
}

// Long-format per-row beam patterns: row,theta_deg,gain_db.
inline std::string pattern_csv(const ArrayGeometry& g, const MeasurementMatrix& m,
                               const std::vector<double>& grid_deg) {
  std::ostringstream out;
  out << "row,theta_deg,gain_db\n";
  for (int p = 0; p < m.p(); ++p) {
    const BeamPattern bp = beam_pattern(g, m.rows()[p], grid_deg);
    for (std::size_t i = 0; i < bp.grid_deg.size(); ++i)
      out << (p + 1) << ',' << detail::fmt(bp.grid_deg[i], 4) << ','
          << detail::fmt(bp.values_db[i], 4) << '\n';
  }
  return out.str();
}

// Spectrum export: theta_deg, abs_z, abs_z_over_epsilon.
inline std::string spectrum_csv(const std::vector<double>& grid_deg,
                                const std::vector<double>& spectrum, double epsilon) {
  if (grid_deg.size() != spectrum.size())
    throw std::invalid_argument("spectrum_csv: grid/spectrum size mismatch");
  std::ostringstream out;
  out << "theta_deg,abs_z,abs_z_over_epsilon\n";
  for (std::size_t i = 0; i < grid_deg.size(); ++i)
    out << detail::fmt(grid_deg[i], 4) << ',' << detail::fmt_g(spectrum[i]) << ','
        << detail::fmt_g(epsilon > 0.0 ? spectrum[i] / epsilon : 0.0) << '\n';
  return out.str();
}

// ---- experiment config schema (version 1) ----

struct MatrixSource {
  std::string load_path;  // empty -> design
  int p_rows = 20;
  double theta_opt_deg = 50.0;
  double sidelobe_ceiling_db = -5.0;
  double pointing_tolerance_deg = 5.0;
  double mainlobe_halfwidth_deg = 0.0;  // 0 -> default
  GaConfig ga;
};

struct ParsedConfig {
  ExperimentConfig experiment;
  MatrixSource matrix;
};

inline Json experiment_config_to_json(const ExperimentConfig& c, const MatrixSource& src) {
  Json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["geometry"] = {{"n_elements", c.geometry.n_elements},
                   {"spacing_wavelengths", c.geometry.spacing_wavelengths}};
  Json scene;
  scene["angles_deg"] = c.scene.angles_deg;
  scene["amplitude_mode"] = c.scene.unit_random_phase ? "unit_random_phase" : "fixed";
  if (!c.scene.unit_random_phase) {
    Json amps = Json::array();
    for (const auto& a : c.scene.amplitudes) amps.push_back({{"re", a.real()}, {"im", a.imag()}});
    scene["amplitudes"] = amps;
  }
  j["scene"] = scene;
  Json matrix;
  if (!src.load_path.empty()) {
    matrix["load"] = src.load_path;
  } else {
    matrix["design"] = {{"p_rows", src.p_rows},
                        {"theta_opt_deg", src.theta_opt_deg},
                        {"sidelobe_ceiling_db", src.sidelobe_ceiling_db},
                        {"pointing_tolerance_deg", src.pointing_tolerance_deg},
                        {"mainlobe_halfwidth_deg", src.mainlobe_halfwidth_deg},
                        {"ga",
                         {{"population_size", src.ga.population_size},
                          {"generations", src.ga.generations},
                          {"crossover_rate", src.ga.crossover_rate},
                          {"mutation_rate", src.ga.mutation_rate},
                          {"correlation_threshold", src.ga.correlation_threshold},
                          {"penalty_factor", src.ga.penalty_factor},
                          {"rng_seed", src.ga.rng_seed}}}};
  }
  j["matrix"] = matrix;
  Json bench;
  bench["snr_grid_db"] = c.snr_grid_db;
  bench["epsilon_mode"] = c.epsilon_auto ? Json("auto") : Json(c.epsilon_list);
  bench["trials"] = c.trials;
  bench["master_seed"] = c.master_seed;
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.emplace_back(method_name(m));
  bench["methods"] = methods;
  bench["miss_penalty_deg"] = c.miss_penalty_deg;
  bench["threads"] = c.threads;
  j["bench"] = bench;
  j["anm"] = {{"epsilon", c.anm.epsilon},
              {"admm_penalty", c.anm.admm_penalty},
              {"max_iterations", c.anm.max_iterations},
              {"primal_dual_tolerance", c.anm.primal_dual_tolerance},
              {"dual_grid_step_deg", c.anm.dual_grid_step_deg},
              {"n_sources_hint", c.anm.n_sources_hint}};
  j["grid_l1"] = {{"lambda_scale", c.l1_lambda_scale},
                  {"max_iterations", c.l1_max_iterations},
                  {"tolerance", c.l1_tolerance},
                  {"grid_lo_deg", c.baseline_grid_lo_deg},
                  {"grid_hi_deg", c.baseline_grid_hi_deg},
                  {"grid_step_deg", c.baseline_grid_step_deg}};
  return j;
}

inline ParsedConfig parse_experiment_config(const Json& j) {
  try {
    if (!j.is_object()) throw ConfigError("config: expected a json object");
    if (j.value("schema_version", -1) != kConfigSchemaVersion)
      throw ConfigError("config: schema_version must be 1");
    ParsedConfig out;
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      out.experiment.geometry = ArrayGeometry(g.value("n_elements", 16),
                                              g.value("spacing_wavelengths", 0.5));
    }
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      if (s.contains("angles_deg"))
        out.experiment.scene.angles_deg = s.at("angles_deg").get<std::vector<double>>();
      const std::string mode = s.value("amplitude_mode", "unit_random_phase");
      if (mode == "unit_random_phase") {
        out.experiment.scene.unit_random_phase = true;
      } else if (mode == "fixed") {
        out.experiment.scene.unit_random_phase = false;
        if (!s.contains("amplitudes")) throw ConfigError("config: fixed mode needs amplitudes");
        for (const auto& a : s.at("amplitudes"))
          out.experiment.scene.amplitudes.emplace_back(a.value("re", 0.0), a.value("im", 0.0));
      } else {
        throw ConfigError("config: unknown amplitude_mode: " + mode);
      }
    }
    if (j.contains("matrix")) {
      const auto& m = j.at("matrix");
      if (m.contains("load")) {
        out.matrix.load_path = m.at("load").get<std::string>();
      } else if (m.contains("design")) {
        const auto& d = m.at("design");
        out.matrix.p_rows = d.value("p_rows", 20);
        out.matrix.theta_opt_deg = d.value("theta_opt_deg", 50.0);
        out.matrix.sidelobe_ceiling_db = d.value("sidelobe_ceiling_db", -5.0);
        out.matrix.pointing_tolerance_deg = d.value("pointing_tolerance_deg", 5.0);
        out.matrix.mainlobe_halfwidth_deg = d.value("mainlobe_halfwidth_deg", 0.0);
        if (d.contains("ga")) {
          const auto& ga = d.at("ga");
          out.matrix.ga.population_size = ga.value("population_size", 64);
          out.matrix.ga.generations = ga.value("generations", 300);
          out.matrix.ga.crossover_rate = ga.value("crossover_rate", 0.8);
          out.matrix.ga.mutation_rate = ga.value("mutation_rate", 0.0);
          out.matrix.ga.correlation_threshold = ga.value("correlation_threshold", 0.3);
          out.matrix.ga.penalty_factor = ga.value("penalty_factor", 0.01);
          out.matrix.ga.rng_seed = ga.value("rng_seed", std::uint64_t{1});
        }
      }
    }
    if (j.contains("bench")) {
      const auto& b = j.at("bench");
      if (b.contains("snr_grid_db"))
        out.experiment.snr_grid_db = b.at("snr_grid_db").get<std::vector<double>>();
      if (b.contains("epsilon_mode")) {
        const auto& e = b.at("epsilon_mode");
        if (e.is_string() && e.get<std::string>() == "auto") {
          out.experiment.epsilon_auto = true;
        } else if (e.is_array()) {
          out.experiment.epsilon_auto = false;
          out.experiment.epsilon_list = e.get<std::vector<double>>();
        } else {
          throw ConfigError("config: epsilon_mode must be \"auto\" or a list");
        }
      }
      out.experiment.trials = b.value("trials", 100);
      out.experiment.master_seed = b.value("master_seed", std::uint64_t{1});
      if (b.contains("methods")) {
        out.experiment.methods.clear();
        for (const auto& m : b.at("methods"))
          out.experiment.methods.push_back(method_from_name(m.get<std::string>()));
      }
      out.experiment.miss_penalty_deg = b.value("miss_penalty_deg", 5.0);
      out.experiment.threads = b.value("threads", 0);
    }
    if (j.contains("anm")) {
      const auto& a = j.at("anm");
      out.experiment.anm.epsilon = a.value("epsilon", 0.0);
      out.experiment.anm.admm_penalty = a.value("admm_penalty", 2.0);
      out.experiment.anm.max_iterations = a.value("max_iterations", 5000);
      out.experiment.anm.primal_dual_tolerance = a.value("primal_dual_tolerance", 1e-6);
      out.experiment.anm.dual_grid_step_deg = a.value("dual_grid_step_deg", 0.01);
      out.experiment.anm.n_sources_hint = a.value("n_sources_hint", 2);
    }
    if (j.contains("grid_l1")) {
      const auto& l = j.at("grid_l1");
      out.experiment.l1_lambda_scale = l.value("lambda_scale", 0.1);
      out.experiment.l1_max_iterations = l.value("max_iterations", 2000);
      out.experiment.l1_tolerance = l.value("tolerance", 1e-10);
      out.experiment.baseline_grid_lo_deg = l.value("grid_lo_deg", -60.0);
      out.experiment.baseline_grid_hi_deg = l.value("grid_hi_deg", 60.0);
      out.experiment.baseline_grid_step_deg = l.value("grid_step_deg", 0.1);
    }
    return out;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ParsedConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("config file is not valid json: " + std::string(e.what()));
  }
  return parse_experiment_config(j);
}

// ---- bench outputs ----

inline std::string trials_csv(const ExperimentResults& results, int k_sources) {
  std::ostringstream out;
  out << "snr_db,method,epsilon,trial";
  for (int k = 1; k <= k_sources; ++k) out << ",true_deg_" << k;
  for (int k = 1; k <= k_sources; ++k) out << ",est_deg_" << k;
  for (int k = 1; k <= k_sources; ++k) out << ",err_deg_" << k;
  out << ",misses,converged,feas_ratio\n";
  for (const auto& rec : results.trials) {
    out << detail::fmt(rec.snr_db, 2) << ',' << method_name(rec.method) << ','
        << detail::fmt_g(rec.epsilon) << ',' << rec.trial;
    for (int k = 0; k < k_sources; ++k) out << ',' << detail::fmt(rec.true_deg[k], 4);
    for (int k = 0; k < k_sources; ++k) {
      out << ',';
      if (k < static_cast<int>(rec.est_deg.size())) out << detail::fmt(rec.est_deg[k], 4);
    }
    for (int k = 0; k < k_sources; ++k) out << ',' << detail::fmt(rec.err_deg[k], 4);
    out << ',' << rec.misses << ',' << (rec.converged ? 1 : 0) << ',';
    if (rec.method == Method::Anm) out << detail::fmt(rec.feas_ratio, 6);
    out << '\n';
  }
  return out.str();
}

inline std::string summary_csv(const ExperimentResults& results) {
  std::ostringstream out;
  out << "snr_db,method,epsilon,rmse_deg,trials,mean_runtime_ms,miss_rate\n";
  for (const auto& row : results.summary) {
    out << detail::fmt(row.snr_db, 2) << ',' << method_name(row.method) << ',';
    if (row.epsilon_set) out << detail::fmt_g(row.epsilon);
    out << ',' << detail::fmt(row.rmse_deg, 4) << ',' << row.trials << ','
        << detail::fmt(row.mean_runtime_ms, 3) << ',' << detail::fmt(row.miss_rate, 4) << '\n';
  }
  return out.str();
}

inline Json run_manifest(const ExperimentConfig& config, const MatrixSource& src,
                         const MeasurementMatrix& matrix) {
  Json j;
  j["version"] = kVersion;
  j["config"] = experiment_config_to_json(config, src);
  j["master_seed"] = config.master_seed;
  j["matrix"] = matrix_to_json(matrix);
  return j;
}

// Writes trials.csv, rmse_summary.csv and manifest.json into out_dir.
// extra_manifest entries are merged into the manifest (the epsilon sweep
// records its ladder there).
inline void emit_outputs(const ExperimentResults& results, const ExperimentConfig& config,
                         const MatrixSource& src, const MeasurementMatrix& matrix,
                         const std::filesystem::path& out_dir,
                         const Json& extra_manifest = Json::object()) {
  if (results.trials.empty()) throw std::invalid_argument("emit_outputs: empty results");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  detail::write_file(out_dir / "trials.csv", trials_csv(results, config.scene.k()));
  detail::write_file(out_dir / "rmse_summary.csv", summary_csv(results));
  Json manifest = run_manifest(config, src, matrix);
  for (auto it = extra_manifest.begin(); it != extra_manifest.end(); ++it)
    manifest[it.key()] = it.value();
  detail::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace risdoa
