#pragma once

// Monte Carlo experiment engine: scene synthesis with calibrated noise,
// RMSE aggregation with sorted-assignment matching, and the sweep driver
// used by the bench and epsilon-sweep commands. Trials are independent and
// may run on several threads; every trial draws from a stream derived from
// (master_seed, snr index, method, trial), so results do not depend on the
// schedule.

#include "risdoa/anm.hpp"
#include "risdoa/array_model.hpp"
#include "risdoa/beam_design.hpp"
#include "risdoa/grid_l1.hpp"
#include "risdoa/rng.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

namespace risdoa {

enum class Method { Anm, GridL1 };

inline const char* method_name(Method m) { return m == Method::Anm ? "anm" : "grid_l1"; }

inline Method method_from_name(const std::string& s) {
  if (s == "anm") return Method::Anm;
  if (s == "grid_l1") return Method::GridL1;
  throw std::invalid_argument("unknown method: " + s);
}

struct SceneConfig {
  std::vector<double> angles_deg{10.24, 30.56};
  bool unit_random_phase = true;       // |s_k| = 1, phase uniform per trial
  std::vector<Complex> amplitudes{};   // used when unit_random_phase is false

  int k() const { return static_cast<int>(angles_deg.size()); }
};

struct SynthesizedSignal {
  Eigen::VectorXcd y;
  double sigma_w = 0.0;
  std::vector<Complex> amplitudes;
};

// y = U A(theta) s + w. Noise is calibrated against unit mean source
// power: sigma_w^2 = mean_k |s_k|^2 * 10^(-SNR/10), the standard
// simulation convention and the scale the epsilon selection rule
// expects. Pass a non-finite SNR for a noiseless draw.
inline SynthesizedSignal synthesize_received(const ArrayGeometry& g, const SceneConfig& scene,
                                             const MeasurementMatrix& u, double snr_db,
                                             RngStream& rng) {
  if (scene.angles_deg.empty()) throw std::invalid_argument("synthesize_received: empty scene");
  SynthesizedSignal out;
  out.amplitudes.resize(scene.angles_deg.size());
  double mean_power = 0.0;
  for (std::size_t k = 0; k < scene.angles_deg.size(); ++k) {
    if (scene.unit_random_phase) {
      out.amplitudes[k] = std::polar(1.0, 2.0 * kPi * rng.uniform());
    } else {
      if (scene.amplitudes.size() != scene.angles_deg.size())
        throw std::invalid_argument("synthesize_received: fixed amplitudes size mismatch");
      out.amplitudes[k] = scene.amplitudes[k];
    }
    mean_power += std::norm(out.amplitudes[k]);
  }
  mean_power /= static_cast<double>(scene.angles_deg.size());
  const SourceScene src(scene.angles_deg, out.amplitudes);
  const Eigen::VectorXcd x = element_signals(g, src);
  Eigen::VectorXcd y = u.signs() * x;
  const double sigma2 =
      std::isfinite(snr_db) ? mean_power * std::pow(10.0, -snr_db / 10.0) : 0.0;
  out.sigma_w = std::sqrt(sigma2);
  if (sigma2 > 0.0)
    for (int p = 0; p < y.size(); ++p) y[p] += rng.complex_gaussian(sigma2);
  out.y = std::move(y);
  return out;
}

struct MatchedErrors {
  std::vector<double> per_source;  // length K; misses carry the penalty
  int misses = 0;
};

// Ascending-sort pairing of estimates to truths; a missing estimate
// contributes the fixed penalty. Minimizes total squared error over
// monotone assignments (optimal in 1-D).
inline MatchedErrors match_errors(const std::vector<double>& truth_sorted,
                                  std::vector<double> estimates, double miss_penalty_deg = 5.0) {
  const int k = static_cast<int>(truth_sorted.size());
  std::sort(estimates.begin(), estimates.end());
  const int m = std::min<int>(static_cast<int>(estimates.size()), k);
  const double pen2 = miss_penalty_deg * miss_penalty_deg;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // dp[i][j]: first i truths matched using first j estimates (all j used)
  std::vector<std::vector<double>> dp(k + 1, std::vector<double>(m + 1, kInf));
  dp[0][0] = 0.0;
  for (int i = 1; i <= k; ++i) {
    dp[i][0] = dp[i - 1][0] + pen2;
    for (int j = 1; j <= std::min(i, m); ++j) {
      const double e = truth_sorted[i - 1] - estimates[j - 1];
      dp[i][j] = std::min(dp[i - 1][j] + pen2, dp[i - 1][j - 1] + e * e);
    }
  }
  // walk back to recover per-source errors
  MatchedErrors out;
  out.per_source.assign(k, miss_penalty_deg);
  int j = m;
  for (int i = k; i >= 1; --i) {
    if (j >= 1 && dp[i][j] == dp[i - 1][j - 1] + (truth_sorted[i - 1] - estimates[j - 1]) *
                                                     (truth_sorted[i - 1] - estimates[j - 1])) {
      out.per_source[i - 1] = truth_sorted[i - 1] - estimates[j - 1];
      --j;
    } else {
      ++out.misses;
    }
  }
  return out;
}

// sqrt( (1/(M K)) sum_m sum_k (theta_hat_{k,m} - theta_k)^2 ), estimates
// matched to truths by ascending sort; shortfall trials use the penalty.
inline double rmse(const std::vector<double>& truth_sorted,
                   const std::vector<std::vector<double>>& estimates_per_trial,
                   double miss_penalty_deg = 5.0) {
  if (estimates_per_trial.empty()) throw std::invalid_argument("rmse: needs M >= 1 trials");
  const int k = static_cast<int>(truth_sorted.size());
  double total = 0.0;
  for (const auto& est : estimates_per_trial) {
    const MatchedErrors me = match_errors(truth_sorted, est, miss_penalty_deg);
    for (double e : me.per_source) total += e * e;
  }
  return std::sqrt(total / (static_cast<double>(estimates_per_trial.size()) * k));
}

struct ExperimentConfig {
  ArrayGeometry geometry{16, 0.5};
  SceneConfig scene;
  std::vector<double> snr_grid_db{0, 5, 10, 15, 20, 25, 30};
  bool epsilon_auto = true;
  std::vector<double> epsilon_list;  // used when epsilon_auto is false (ANM only)
  int trials = 100;
  std::uint64_t master_seed = 1;
  std::vector<Method> methods{Method::Anm, Method::GridL1};
  AnmConfig anm;
  double l1_lambda_scale = 0.1;
  int l1_max_iterations = 2000;
  double l1_tolerance = 1e-10;
  double baseline_grid_lo_deg = -60.0;
  double baseline_grid_hi_deg = 60.0;
  double baseline_grid_step_deg = 0.1;
  double miss_penalty_deg = 5.0;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const {
    if (trials < 1) throw std::invalid_argument("ExperimentConfig: trials >= 1");
    if (snr_grid_db.empty()) throw std::invalid_argument("ExperimentConfig: empty SNR grid");
    if (methods.empty()) throw std::invalid_argument("ExperimentConfig: empty method list");
    if (scene.angles_deg.empty()) throw std::invalid_argument("ExperimentConfig: empty scene");
    if (!epsilon_auto) {
      if (epsilon_list.empty())
        throw std::invalid_argument("ExperimentConfig: fixed epsilon mode needs values");
      for (Method m : methods)
        if (m != Method::Anm)
          throw std::invalid_argument("ExperimentConfig: epsilon sweep applies to anm only");
    }
  }
};

struct TrialRecord {
  int snr_index = 0;
  int method_index = 0;
  int epsilon_index = 0;
  int trial = 0;
  double snr_db = 0.0;
  Method method = Method::Anm;
  double epsilon = 0.0;  // epsilon for anm; lambda for grid_l1
  std::vector<double> true_deg;
  std::vector<double> est_deg;
  std::vector<double> err_deg;  // matched, penalty on misses
  int misses = 0;
  bool converged = false;
  double feas_ratio = 0.0;  // max |z| / epsilon on the dual grid (anm only)
  double runtime_ms = 0.0;  // not serialized per-trial; summarized
};

struct SummaryRow {
  double snr_db = 0.0;
  Method method = Method::Anm;
  double epsilon = 0.0;  // rule / ladder value for anm; unset for grid_l1
  bool epsilon_set = false;
  double rmse_deg = 0.0;
  int trials = 0;
  double mean_runtime_ms = 0.0;
  double miss_rate = 0.0;
};

struct ExperimentResults {
  std::vector<TrialRecord> trials;  // ordered by (snr, method, epsilon, trial)
  std::vector<SummaryRow> summary;
};

namespace detail {

template <typename Fn>
inline void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(threads);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

inline ExperimentResults run_experiment(const MeasurementMatrix& u,
                                        const ExperimentConfig& config) {
  config.validate();
  if (u.n() != config.geometry.n_elements)
    throw std::invalid_argument("run_experiment: matrix width does not match geometry");
  const int k = config.scene.k();
  std::vector<double> truth = config.scene.angles_deg;  // already sorted by SourceScene rules

  const bool needs_anm = std::count(config.methods.begin(), config.methods.end(), Method::Anm);
  const bool needs_l1 =
      std::count(config.methods.begin(), config.methods.end(), Method::GridL1);
  std::optional<AnmSolver> solver;
  if (needs_anm) solver.emplace(config.geometry, u, config.anm);
  std::optional<GridDictionary> dict;
  if (needs_l1)
    dict = build_dictionary(u, config.geometry, config.baseline_grid_lo_deg,
                            config.baseline_grid_hi_deg, config.baseline_grid_step_deg);

  const int n_eps = config.epsilon_auto ? 1 : static_cast<int>(config.epsilon_list.size());
  const int n_snr = static_cast<int>(config.snr_grid_db.size());
  const int n_methods = static_cast<int>(config.methods.size());
  const int total = n_snr * n_methods * n_eps * config.trials;

  ExperimentResults results;
  results.trials.resize(total);

  detail::parallel_for(total, config.threads, [&](int task) {
    int rem = task;
    const int ti = rem % config.trials;
    rem /= config.trials;
    const int ei = rem % n_eps;
    rem /= n_eps;
    const int mi = rem % n_methods;
    const int si = rem / n_methods;

    TrialRecord rec;
    rec.snr_index = si;
    rec.method_index = mi;
    rec.epsilon_index = ei;
    rec.trial = ti;
    rec.snr_db = config.snr_grid_db[si];
    rec.method = config.methods[mi];
    rec.true_deg = truth;

    // the epsilon ladder reuses one synthesis per (snr, method, trial)
    RngStream rng(derive_seed(config.master_seed, 0xBE7C, static_cast<std::uint64_t>(si),
                              static_cast<std::uint64_t>(mi), static_cast<std::uint64_t>(ti)));
    const SynthesizedSignal sig =
        synthesize_received(config.geometry, config.scene, u, rec.snr_db, rng);

    const auto t0 = std::chrono::steady_clock::now();
    if (rec.method == Method::Anm) {
      const double eps = config.epsilon_auto
                             ? (config.anm.epsilon > 0.0 ? config.anm.epsilon
                                                         : epsilon_from_snr(rec.snr_db))
                             : config.epsilon_list[ei];
      rec.epsilon = eps;
      const EstimationResult est = solver->estimate(sig.y, k, eps);
      rec.est_deg = est.angles_deg;
      rec.converged = est.diagnostics.converged;
      double mz = 0.0;
      for (double v : est.spectrum) mz = std::max(mz, v);
      rec.feas_ratio = mz / eps;
    } else {
      const double lambda = default_l1_lambda(sig.y, *dict, config.l1_lambda_scale);
      rec.epsilon = lambda;
      const GridEstimate est = grid_estimate(sig.y, *dict, k, lambda, config.l1_max_iterations,
                                             config.l1_tolerance);
      rec.est_deg = est.angles_deg;
      rec.converged = est.converged;
    }
    rec.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    const MatchedErrors me = match_errors(truth, rec.est_deg, config.miss_penalty_deg);
    rec.err_deg = me.per_source;
    rec.misses = me.misses;
    results.trials[task] = std::move(rec);
  });

  // summaries per (snr, method, epsilon) in task order
  for (int si = 0; si < n_snr; ++si) {
    for (int mi = 0; mi < n_methods; ++mi) {
      for (int ei = 0; ei < n_eps; ++ei) {
        SummaryRow row;
        row.snr_db = config.snr_grid_db[si];
        row.method = config.methods[mi];
        if (row.method == Method::Anm) {
          row.epsilon = config.epsilon_auto
                            ? (config.anm.epsilon > 0.0 ? config.anm.epsilon
                                                        : epsilon_from_snr(row.snr_db))
                            : config.epsilon_list[ei];
          row.epsilon_set = true;
        }
        row.trials = config.trials;
        double total_sq = 0.0, total_ms = 0.0;
        int total_miss = 0;
        for (int ti = 0; ti < config.trials; ++ti) {
          const int idx = ((si * n_methods + mi) * n_eps + ei) * config.trials + ti;
          const TrialRecord& rec = results.trials[idx];
          for (double e : rec.err_deg) total_sq += e * e;
          total_ms += rec.runtime_ms;
          total_miss += rec.misses;
        }
        row.rmse_deg = std::sqrt(total_sq / (static_cast<double>(config.trials) * k));
        row.mean_runtime_ms = total_ms / config.trials;
        row.miss_rate = static_cast<double>(total_miss) / (static_cast<double>(config.trials) * k);
        results.summary.push_back(row);
      }
    }
  }
  return results;
}

}  // namespace risdoa
