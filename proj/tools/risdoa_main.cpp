// Command-line front end: matrix design, beam-pattern export, single-shot
// estimation, Monte Carlo benchmarking and the epsilon sweep.
//
// Exit codes: 0 success, 2 configuration error, 3 design failure,
// 4 solver non-convergence when --strict is given.

#include "risdoa/io.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDesign = 3;
constexpr int kExitNonConverged = 4;

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

risdoa::MeasurementMatrix resolve_matrix(const risdoa::ParsedConfig& parsed) {
  if (!parsed.matrix.load_path.empty()) return risdoa::load_matrix(parsed.matrix.load_path);
  const auto& geom = parsed.experiment.geometry;
  const risdoa::BeamMask mask = risdoa::make_beam_mask(
      geom, parsed.matrix.theta_opt_deg, parsed.matrix.sidelobe_ceiling_db,
      parsed.matrix.pointing_tolerance_deg, parsed.matrix.mainlobe_halfwidth_deg);
  return risdoa::design_matrix(geom, parsed.matrix.p_rows, mask, parsed.matrix.ga).matrix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"one-bit RIS beamforming design and gridless DOA estimation"};
  app.require_subcommand(1);

  std::string config_path;

  // ---- design ----
  auto* design = app.add_subcommand("design", "design a measurement matrix with the GA");
  int d_n = 16, d_p = 20;
  double d_spacing = 0.5, d_theta_opt = 50.0, d_lth = -5.0, d_thth = 5.0, d_halfwidth = 0.0;
  double d_threshold = 0.3;
  std::uint64_t d_seed = 1;
  std::string d_out = "matrix.json", d_report, d_corr;
  design->add_option("--config", config_path, "json config file (flags override)");
  design->add_option("--n", d_n, "number of RIS elements");
  design->add_option("--spacing", d_spacing, "element spacing in wavelengths");
  design->add_option("--p", d_p, "number of measurement vectors");
  design->add_option("--theta-opt", d_theta_opt, "receiver departure angle (deg)");
  design->add_option("--l-th", d_lth, "sidelobe ceiling (dB, negative)");
  design->add_option("--theta-th", d_thth, "pointing tolerance (deg)");
  design->add_option("--halfwidth", d_halfwidth, "mainlobe halfwidth (deg, 0 = default)");
  design->add_option("--threshold", d_threshold, "row correlation threshold");
  design->add_option("--seed", d_seed, "rng seed");
  design->add_option("--out", d_out, "output matrix json");
  design->add_option("--report", d_report, "output design report json");
  design->add_option("--corr", d_corr, "output correlation matrix csv");

  // ---- pattern ----
  auto* pattern = app.add_subcommand("pattern", "export per-row beam patterns as csv");
  std::string pt_matrix, pt_out = "patterns.csv";
  double pt_spacing = 0.5, pt_lo = -90.0, pt_hi = 90.0, pt_step = 0.1;
  pattern->add_option("--config", config_path, "json config file (flags override)");
  pattern->add_option("--matrix", pt_matrix, "matrix json file (otherwise per config)");
  pattern->add_option("--spacing", pt_spacing, "element spacing in wavelengths");
  pattern->add_option("--lo", pt_lo, "grid start (deg)");
  pattern->add_option("--hi", pt_hi, "grid end (deg)");
  pattern->add_option("--step", pt_step, "grid step (deg)");
  pattern->add_option("--out", pt_out, "output csv");

  // ---- estimate ----
  auto* estimate = app.add_subcommand("estimate", "single synthesized run with spectrum export");
  std::string e_matrix, e_angles = "10.24,30.56", e_spectrum;
  double e_spacing = 0.5, e_snr = 20.0, e_epsilon = 0.0;
  int e_k = 0;
  std::uint64_t e_seed = 1;
  bool e_noiseless = false, e_strict = false;
  estimate->add_option("--config", config_path, "json config file (flags override)");
  estimate->add_option("--matrix", e_matrix, "matrix json file (otherwise designed)");
  estimate->add_option("--spacing", e_spacing, "element spacing in wavelengths");
  estimate->add_option("--angles", e_angles, "true source angles, comma separated (deg)");
  estimate->add_option("--snr", e_snr, "snr in dB");
  estimate->add_flag("--noiseless", e_noiseless, "disable noise (snr still sets epsilon)");
  estimate->add_option("--epsilon", e_epsilon, "override epsilon (0 = auto from snr)");
  estimate->add_option("--k", e_k, "number of sources to pick (default: scene size)");
  estimate->add_option("--seed", e_seed, "rng seed");
  estimate->add_option("--spectrum-out", e_spectrum, "output spectrum csv");
  estimate->add_flag("--strict", e_strict, "exit 4 if the solver did not converge");

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "Monte Carlo RMSE sweep over SNR");
  std::string b_out_dir = "bench_out", b_methods, b_snr_grid, b_matrix;
  std::uint64_t b_seed = 0;
  int b_trials = 0, b_threads = -1;
  bool b_strict = false;
  bench->add_option("--config", config_path, "json config file (flags override)");
  bench->add_option("--seed", b_seed, "master seed")->required();
  bench->add_option("--out-dir", b_out_dir, "output directory");
  bench->add_option("--trials", b_trials, "Monte Carlo trials per point");
  bench->add_option("--methods", b_methods, "comma list: anm,grid_l1");
  bench->add_option("--snr-grid", b_snr_grid, "comma list of SNR points (dB)");
  bench->add_option("--matrix", b_matrix, "matrix json file (otherwise per config)");
  bench->add_option("--threads", b_threads, "worker threads (0 = hardware)");
  bench->add_flag("--strict", b_strict, "exit 4 if any trial failed to converge");

  // ---- sweep-epsilon ----
  auto* sweep = app.add_subcommand("sweep-epsilon", "RMSE over an epsilon ladder");
  std::string s_out_dir = "sweep_out", s_snr_grid = "0,10,20,30", s_factors = "0.1,0.3333,1,3,10";
  std::string s_epsilons, s_matrix;
  std::uint64_t s_seed = 0;
  int s_trials = 50, s_threads = -1;
  sweep->add_option("--config", config_path, "json config file (flags override)");
  sweep->add_option("--seed", s_seed, "master seed")->required();
  sweep->add_option("--out-dir", s_out_dir, "output directory");
  sweep->add_option("--snr", s_snr_grid, "comma list of SNR points (dB)");
  sweep->add_option("--factors", s_factors, "ladder as multiples of the epsilon rule");
  sweep->add_option("--epsilons", s_epsilons, "absolute epsilon ladder (overrides --factors)");
  sweep->add_option("--trials", s_trials, "trials per (snr, epsilon)");
  sweep->add_option("--matrix", s_matrix, "matrix json file (otherwise per config)");
  sweep->add_option("--threads", s_threads, "worker threads (0 = hardware)");

  CLI11_PARSE(app, argc, argv);

  try {
    risdoa::ParsedConfig parsed;
    if (!config_path.empty()) parsed = risdoa::load_experiment_config(config_path);

    if (design->parsed()) {
      if (config_path.empty()) {
        parsed.experiment.geometry = risdoa::ArrayGeometry(d_n, d_spacing);
        parsed.matrix.p_rows = d_p;
        parsed.matrix.theta_opt_deg = d_theta_opt;
        parsed.matrix.sidelobe_ceiling_db = d_lth;
        parsed.matrix.pointing_tolerance_deg = d_thth;
        parsed.matrix.mainlobe_halfwidth_deg = d_halfwidth;
        parsed.matrix.ga.correlation_threshold = d_threshold;
      }
      if (design->count("--seed")) parsed.matrix.ga.rng_seed = d_seed;
      const auto& geom = parsed.experiment.geometry;
      const risdoa::BeamMask mask = risdoa::make_beam_mask(
          geom, parsed.matrix.theta_opt_deg, parsed.matrix.sidelobe_ceiling_db,
          parsed.matrix.pointing_tolerance_deg, parsed.matrix.mainlobe_halfwidth_deg);
      const risdoa::DesignReport report =
          risdoa::design_matrix(geom, parsed.matrix.p_rows, mask, parsed.matrix.ga);
      risdoa::save_matrix(report.matrix, d_out);
      if (!d_report.empty())
        risdoa::detail::write_file(d_report, risdoa::design_report_to_json(report).dump(2) + "\n");
      if (!d_corr.empty())
        risdoa::detail::write_file(d_corr, risdoa::correlation_csv(report.matrix));
      std::cout << "designed " << report.matrix.p() << "x" << report.matrix.n()
                << " matrix, coherence " << report.coherence << ", written to " << d_out << "\n";
      return kExitOk;
    }

    if (pattern->parsed()) {
      const risdoa::MeasurementMatrix m =
          !pt_matrix.empty() ? risdoa::load_matrix(pt_matrix) : resolve_matrix(parsed);
      const risdoa::ArrayGeometry geom(
          m.n(), pattern->count("--spacing") || config_path.empty()
                     ? pt_spacing
                     : parsed.experiment.geometry.spacing_wavelengths);
      const auto grid = risdoa::make_angle_grid(pt_lo, pt_hi, pt_step);
      risdoa::detail::write_file(pt_out, risdoa::pattern_csv(geom, m, grid));
      std::cout << "patterns for " << m.p() << " rows written to " << pt_out << "\n";
      return kExitOk;
    }

    if (estimate->parsed()) {
      risdoa::MeasurementMatrix m =
          !e_matrix.empty() ? risdoa::load_matrix(e_matrix) : resolve_matrix(parsed);
      risdoa::ArrayGeometry geom(m.n(), estimate->count("--spacing")
                                            ? e_spacing
                                            : parsed.experiment.geometry.spacing_wavelengths);
      risdoa::SceneConfig scene = parsed.experiment.scene;
      if (estimate->count("--angles") || config_path.empty())
        scene.angles_deg = parse_list(e_angles);
      const int k = e_k > 0 ? e_k : scene.k();
      risdoa::RngStream rng(risdoa::derive_seed(e_seed, 0xE57));
      const risdoa::SynthesizedSignal sig = risdoa::synthesize_received(
          geom, scene, m, e_noiseless ? std::numeric_limits<double>::infinity() : e_snr, rng);
      risdoa::AnmConfig anm = parsed.experiment.anm;
      const double eps = e_epsilon > 0.0
                             ? e_epsilon
                             : (anm.epsilon > 0.0 ? anm.epsilon : risdoa::epsilon_from_snr(e_snr));
      const risdoa::AnmSolver solver(geom, m, anm);
      const risdoa::EstimationResult res = solver.estimate(sig.y, k, eps);
      if (!e_spectrum.empty())
        risdoa::detail::write_file(
            e_spectrum, risdoa::spectrum_csv(res.grid_deg, res.spectrum, res.epsilon_used));
      risdoa::Json out;
      out["angles_deg"] = res.angles_deg;
      out["true_angles_deg"] = scene.angles_deg;
      out["epsilon"] = res.epsilon_used;
      out["converged"] = res.diagnostics.converged;
      out["iterations"] = res.diagnostics.iterations;
      out["duality_gap"] = res.diagnostics.duality_gap;
      out["primal_residual"] = res.diagnostics.primal_residual;
      out["dual_residual"] = res.diagnostics.dual_residual;
      out["min_eigenvalue"] = res.diagnostics.min_eigenvalue;
      out["fully_shrunk"] = res.diagnostics.fully_shrunk;
      out["shortfall"] = res.shortfall;
      std::cout << out.dump(2) << "\n";
      if (e_strict && !res.diagnostics.converged) return kExitNonConverged;
      return kExitOk;
    }

    if (bench->parsed() || sweep->parsed()) {
      const bool is_sweep = sweep->parsed();
      risdoa::ExperimentConfig& cfg = parsed.experiment;
      if (is_sweep) {
        cfg.methods = {risdoa::Method::Anm};
        cfg.trials = s_trials;
        cfg.master_seed = s_seed;
        cfg.snr_grid_db = parse_list(s_snr_grid);
        if (s_threads >= 0) cfg.threads = s_threads;
        // one run per snr so the ladder can follow the per-snr rule
      } else {
        cfg.master_seed = b_seed;
        if (b_trials > 0) cfg.trials = b_trials;
        if (!b_methods.empty()) {
          cfg.methods.clear();
          std::stringstream ss(b_methods);
          std::string item;
          while (std::getline(ss, item, ','))
            if (!item.empty()) cfg.methods.push_back(risdoa::method_from_name(item));
        }
        if (!b_snr_grid.empty()) cfg.snr_grid_db = parse_list(b_snr_grid);
        if (b_threads >= 0) cfg.threads = b_threads;
      }
      const std::string matrix_flag = is_sweep ? s_matrix : b_matrix;
      if (!matrix_flag.empty()) parsed.matrix.load_path = matrix_flag;
      const risdoa::MeasurementMatrix m = resolve_matrix(parsed);
      const std::string out_dir = is_sweep ? s_out_dir : b_out_dir;

      if (is_sweep) {
        risdoa::ExperimentResults all;
        for (double snr : cfg.snr_grid_db) {
          risdoa::ExperimentConfig one = cfg;
          one.snr_grid_db = {snr};
          one.epsilon_auto = false;
          if (!s_epsilons.empty()) {
            one.epsilon_list = parse_list(s_epsilons);
          } else {
            one.epsilon_list.clear();
            for (double f : parse_list(s_factors))
              one.epsilon_list.push_back(f * risdoa::epsilon_from_snr(snr));
          }
          risdoa::ExperimentResults r = risdoa::run_experiment(m, one);
          all.trials.insert(all.trials.end(), r.trials.begin(), r.trials.end());
          all.summary.insert(all.summary.end(), r.summary.begin(), r.summary.end());
        }
        risdoa::Json sweep_info;
        if (!s_epsilons.empty())
          sweep_info["epsilon_sweep"] = {{"epsilons", parse_list(s_epsilons)}};
        else
          sweep_info["epsilon_sweep"] = {{"rule_factors", parse_list(s_factors)}};
        risdoa::emit_outputs(all, cfg, parsed.matrix, m, out_dir, sweep_info);
        std::cout << "epsilon sweep written to " << out_dir << "\n";
        return kExitOk;
      }

      const risdoa::ExperimentResults results = risdoa::run_experiment(m, cfg);
      risdoa::emit_outputs(results, cfg, parsed.matrix, m, out_dir);
      bool all_converged = true;
      for (const auto& rec : results.trials) all_converged = all_converged && rec.converged;
      std::cout << "bench written to " << out_dir << "\n";
      for (const auto& row : results.summary)
        std::cout << "  snr " << row.snr_db << " dB  " << risdoa::method_name(row.method)
                  << "  rmse " << row.rmse_deg << " deg\n";
      if (b_strict && !all_converged) return kExitNonConverged;
      return kExitOk;
    }
  } catch (const risdoa::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const risdoa::DesignError& e) {
    std::cerr << "design failure: " << e.what() << "\n";
    return kExitDesign;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
