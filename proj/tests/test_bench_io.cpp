#include "risdoa/bench.hpp"
#include "risdoa/io.hpp"

#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>

using namespace risdoa;
using Catch::Approx;

namespace {

MeasurementMatrix walsh16() {
  return MeasurementMatrix({PhaseCode::from_string("0000000011111111"),
                            PhaseCode::from_string("0000111100001111"),
                            PhaseCode::from_string("0011001100110011"),
                            PhaseCode::from_string("0101010101010101"),
                            PhaseCode::from_string("0110011001100110"),
                            PhaseCode::from_string("0101101001011010"),
                            PhaseCode::from_string("0011110000111100"),
                            PhaseCode::from_string("0110100101101001")});
}

std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("risdoa_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("noiseless synthesis is exact") {
  const ArrayGeometry g(16, 0.5);
  const MeasurementMatrix u({PhaseCode::from_string("0000000000000000"),
                             PhaseCode::from_string("0101010101010101")});
  SceneConfig scene;
  scene.angles_deg = {0.0};
  RngStream rng(1);
  const SynthesizedSignal s =
      synthesize_received(g, scene, u, std::numeric_limits<double>::infinity(), rng);
  REQUIRE(s.sigma_w == 0.0);
  // all-zero phase row sums the 16 in-phase elements
  REQUIRE(std::abs(s.y[0] - Complex(16, 0) * s.amplitudes[0]) < 1e-9);
}

TEST_CASE("snr calibration matches the request over many draws") {
  const ArrayGeometry g(16, 0.5);
  const MeasurementMatrix u = walsh16();
  SceneConfig scene;  // defaults: unit random phases at table-1 angles
  const double snr_db = 13.0;
  const double expected_sigma2 = std::pow(10.0, -snr_db / 10.0);
  double power = 0.0;
  std::int64_t count = 0;
  for (int trial = 0; trial < 100000 / 10; ++trial) {
    RngStream rng(derive_seed(777, static_cast<std::uint64_t>(trial)));
    SceneConfig probe = scene;
    const SynthesizedSignal s = synthesize_received(g, probe, u, snr_db, rng);
    // recompute the clean part to isolate the noise
    const SourceScene src(probe.angles_deg, s.amplitudes);
    const Eigen::VectorXcd clean = u.signs() * element_signals(g, src);
    power += (s.y - clean).squaredNorm();
    count += s.y.size();
  }
  const double measured_db = 10.0 * std::log10(expected_sigma2 / (power / count)) + snr_db;
  REQUIRE(measured_db == Approx(snr_db).margin(0.1));
}

TEST_CASE("rmse closed forms") {
  REQUIRE(rmse({10.24, 30.56}, {{10.24, 30.56}}) == 0.0);
  REQUIRE(rmse({10.24, 30.56}, {{10.30, 30.50}}) == Approx(0.06).margin(1e-12));
  REQUIRE(rmse({10.0, 20.0}, {{10.0, 20.0}, {10.2, 20.2}}) ==
          Approx(std::sqrt(0.02)).margin(1e-12));
  REQUIRE_THROWS_AS(rmse({10.0}, {}), std::invalid_argument);
}

TEST_CASE("rmse matching is permutation safe and penalizes misses") {
  RngStream rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> truth = {-20.0, 5.0, 40.0};
    std::vector<double> est = {41.1, -19.5, 4.2};
    const double base = rmse(truth, {est});
    std::swap(est[0], est[2]);
    REQUIRE(rmse(truth, {est}) == Approx(base).margin(1e-12));
  }

  const MatchedErrors me = match_errors({10.0, 30.0}, {10.5}, 5.0);
  REQUIRE(me.misses == 1);
  REQUIRE(me.per_source.size() == 2);
  REQUIRE(std::abs(me.per_source[0]) == Approx(0.5));
  REQUIRE(std::abs(me.per_source[1]) == Approx(5.0));

  const MatchedErrors none = match_errors({10.0, 30.0}, {}, 5.0);
  REQUIRE(none.misses == 2);
}

TEST_CASE("matrix json round trip and validation") {
  const MeasurementMatrix u = walsh16();
  const auto dir = temp_dir("matrix");
  save_matrix(u, dir / "m.json");
  const MeasurementMatrix back = load_matrix(dir / "m.json");
  REQUIRE(back.p() == u.p());
  REQUIRE(back.n() == u.n());
  for (int p = 0; p < u.p(); ++p)
    REQUIRE(back.rows()[p].to_string() == u.rows()[p].to_string());

  REQUIRE_THROWS_AS(matrix_from_json(Json{{"n", 4}, {"p", 1}, {"rows", {"01x1"}}}),
                    ConfigError);
  REQUIRE_THROWS_AS(matrix_from_json(Json{{"n", 4}, {"p", 2}, {"rows", {"0101"}}}),
                    ConfigError);
  REQUIRE_THROWS_AS(matrix_from_json(Json{{"n", 4}, {"p", 1}, {"rows", {"011"}}}),
                    ConfigError);
}

TEST_CASE("config parse, echo and reparse") {
  ExperimentConfig cfg;
  cfg.trials = 7;
  cfg.master_seed = 42;
  cfg.snr_grid_db = {5, 15};
  cfg.methods = {Method::Anm};
  MatrixSource src;
  src.p_rows = 6;
  src.ga.rng_seed = 9;
  const Json echo = experiment_config_to_json(cfg, src);
  const ParsedConfig parsed = parse_experiment_config(echo);
  REQUIRE(parsed.experiment.trials == 7);
  REQUIRE(parsed.experiment.master_seed == 42);
  REQUIRE(parsed.experiment.snr_grid_db == std::vector<double>{5, 15});
  REQUIRE(parsed.experiment.methods.size() == 1);
  REQUIRE(parsed.matrix.p_rows == 6);
  REQUIRE(parsed.matrix.ga.rng_seed == 9);
  // echo of the parse equals the original echo
  REQUIRE(experiment_config_to_json(parsed.experiment, parsed.matrix) == echo);

  REQUIRE_THROWS_AS(parse_experiment_config(Json{{"schema_version", 2}}), ConfigError);
  REQUIRE_THROWS_AS(parse_experiment_config(Json::array()), ConfigError);
}

TEST_CASE("experiment runs deterministically and aggregates") {
  const MeasurementMatrix u = walsh16();
  ExperimentConfig cfg;
  cfg.geometry = ArrayGeometry(16, 0.5);
  cfg.trials = 3;
  cfg.snr_grid_db = {20.0, 30.0};
  cfg.master_seed = 5;
  cfg.methods = {Method::Anm, Method::GridL1};
  cfg.anm.max_iterations = 4000;
  cfg.threads = 2;

  const ExperimentResults r1 = run_experiment(u, cfg);
  REQUIRE(r1.summary.size() == 4);  // |snr| x |methods| in auto mode
  REQUIRE(static_cast<int>(r1.trials.size()) == 2 * 2 * 3);

  const ExperimentResults r2 = run_experiment(u, cfg);
  REQUIRE(trials_csv(r1, cfg.scene.k()) == trials_csv(r2, cfg.scene.k()));

  for (const auto& row : r1.summary) REQUIRE(row.trials == 3);
  // anm rows carry an epsilon; grid_l1 rows leave it unset
  for (const auto& row : r1.summary)
    REQUIRE(row.epsilon_set == (row.method == Method::Anm));
}

TEST_CASE("experiment config validation") {
  ExperimentConfig cfg;
  cfg.trials = 0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ExperimentConfig{};
  cfg.methods.clear();
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ExperimentConfig{};
  cfg.epsilon_auto = false;
  cfg.epsilon_list = {1.0};
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);  // sweep with grid_l1
  cfg.methods = {Method::Anm};
  REQUIRE_NOTHROW(cfg.validate());
}

TEST_CASE("csv outputs are well formed and summary round trips") {
  const MeasurementMatrix u = walsh16();
  ExperimentConfig cfg;
  cfg.geometry = ArrayGeometry(16, 0.5);
  cfg.trials = 2;
  cfg.snr_grid_db = {20.0};
  cfg.master_seed = 3;
  cfg.anm.max_iterations = 4000;
  const ExperimentResults res = run_experiment(u, cfg);

  const std::string tcsv = trials_csv(res, cfg.scene.k());
  REQUIRE(tcsv.rfind("snr_db,method,epsilon,trial,true_deg_1,true_deg_2,", 0) == 0);

  const std::string scsv = summary_csv(res);
  std::stringstream ss(scsv);
  std::string line;
  std::getline(ss, line);
  REQUIRE(line == "snr_db,method,epsilon,rmse_deg,trials,mean_runtime_ms,miss_rate");
  int rows = 0;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream fields(line);
    std::string f;
    std::vector<std::string> cols;
    while (std::getline(fields, f, ',')) cols.push_back(f);
    REQUIRE(cols.size() == 7);
    const double rmse_parsed = std::stod(cols[3]);
    const int trials_parsed = std::stoi(cols[4]);
    bool found = false;
    for (const auto& row : res.summary) {
      if (method_name(row.method) == cols[1] && trials_parsed == row.trials &&
          std::abs(rmse_parsed - row.rmse_deg) <= 5e-5)
        found = true;
    }
    REQUIRE(found);
  }
  REQUIRE(rows == static_cast<int>(res.summary.size()));

  const auto dir = temp_dir("emit");
  MatrixSource src;
  emit_outputs(res, cfg, src, u, dir);
  REQUIRE(std::filesystem::exists(dir / "trials.csv"));
  REQUIRE(std::filesystem::exists(dir / "rmse_summary.csv"));
  REQUIRE(std::filesystem::exists(dir / "manifest.json"));

  std::ifstream manifest(dir / "manifest.json");
  Json m;
  manifest >> m;
  REQUIRE(m["version"] == kVersion);
  REQUIRE(m["config"]["schema_version"] == 1);

  REQUIRE_THROWS_WITH(
      detail::write_file("/proc/risdoa_nonexistent/x.csv", "x"),
      Catch::Matchers::ContainsSubstring("risdoa_nonexistent"));
}

TEST_CASE("correlation csv has unit diagonal at six decimals") {
  const std::string csv = correlation_csv(walsh16());
  std::stringstream ss(csv);
  std::string line;
  int row = 0;
  while (std::getline(ss, line)) {
    std::stringstream fields(line);
    std::string f;
    int col = 0;
    while (std::getline(fields, f, ',')) {
      if (col == row) REQUIRE(f == "1.000000");
      REQUIRE(f.size() >= 8);  // sign/zero + "." + six decimals
      ++col;
    }
    ++row;
  }
  REQUIRE(row == 8);
}

TEST_CASE("spectrum csv format") {
  const std::string csv = spectrum_csv({1.0, 2.0}, {0.5, 0.25}, 0.5);
  REQUIRE(csv.rfind("theta_deg,abs_z,abs_z_over_epsilon\n", 0) == 0);
  REQUIRE(csv.find("1.0000,0.5,1\n") != std::string::npos);
}
