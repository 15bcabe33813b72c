#pragma once

// Measurement-matrix design. Each row is a binary phase code whose
// reflection beam is shaped toward theta_opt by a genetic algorithm; the
// GA fitness is the reciprocal of a weighted pattern-mismatch objective,
// and individuals that correlate too strongly with already-accepted rows
// (or population peers) have their fitness multiplied by a small penalty.
// The matrix builder keeps a pool of constraint-satisfying codes seen
// during the GA runs and maintains the accepted set with a seeded
// drop/refill search so the final P rows stay below the correlation
// threshold.

#include "risdoa/array_model.hpp"
#include "risdoa/rng.hpp"

#include <limits>
#include <optional>
#include <unordered_map>

namespace risdoa {

// Two-level target profile: 0 dB plateau within the mainlobe window,
// sidelobe_ceiling_db elsewhere, sampled on the design grid.
struct BeamMask {
  double theta_opt_deg = 50.0;
  double mainlobe_halfwidth_deg = 8.0;
  double sidelobe_ceiling_db = -5.0;   // l_th
  double pointing_tolerance_deg = 5.0;  // theta_th
  std::vector<double> grid_deg;
  std::vector<double> target_db;
};

inline double half_power_beamwidth_deg(const ArrayGeometry& g) {
  return rad2deg(0.886 / (g.n_elements * g.spacing_wavelengths));
}

// Default mask: one-bit codes broaden the mainlobe well past the continuous
// half-power width, so the window is sized at 1.25x HPBW, and the design
// grid spans a neighborhood of theta_opt (one-bit patterns are even in
// theta, so a full-span grid would always see the mirror mainlobe as a
// 0 dB sidelobe).
inline BeamMask make_beam_mask(const ArrayGeometry& g, double theta_opt_deg,
                               double sidelobe_ceiling_db = -5.0,
                               double pointing_tolerance_deg = 5.0,
                               double mainlobe_halfwidth_deg = 0.0,
                               std::vector<double> grid_deg = {}) {
  BeamMask m;
  m.theta_opt_deg = theta_opt_deg;
  m.sidelobe_ceiling_db = sidelobe_ceiling_db;
  m.pointing_tolerance_deg = pointing_tolerance_deg;
  if (!(sidelobe_ceiling_db < 0.0))
    throw std::invalid_argument("make_beam_mask: sidelobe ceiling must be negative dB");
  if (!(pointing_tolerance_deg > 0.0))
    throw std::invalid_argument("make_beam_mask: pointing tolerance must be positive");
  m.mainlobe_halfwidth_deg = mainlobe_halfwidth_deg > 0.0
                                 ? mainlobe_halfwidth_deg
                                 : 1.25 * half_power_beamwidth_deg(g);
  if (grid_deg.empty()) {
    const double span =
        std::max(15.0, m.mainlobe_halfwidth_deg + pointing_tolerance_deg + 2.0);
    const double lo = std::max(-90.0, theta_opt_deg - span);
    const double hi = std::min(90.0, theta_opt_deg + span);
    grid_deg = make_angle_grid(lo, hi, 0.1);
  }
  m.grid_deg = std::move(grid_deg);
  m.target_db.resize(m.grid_deg.size());
  for (std::size_t i = 0; i < m.grid_deg.size(); ++i)
    m.target_db[i] = std::abs(m.grid_deg[i] - theta_opt_deg) <= m.mainlobe_halfwidth_deg
                         ? 0.0
                         : sidelobe_ceiling_db;
  return m;
}

struct PatternMetrics {
  double theta_cal_deg;  // main beam pointing (argmax; ties -> smallest angle)
  double sidelobe_db;    // l_cal: highest value outside the mainlobe window
};

inline PatternMetrics pattern_metrics(const BeamPattern& p, const BeamMask& mask) {
  if (p.grid_deg.empty()) throw std::invalid_argument("pattern_metrics: empty pattern");
  int peak = 0;
  for (int i = 1; i < static_cast<int>(p.values_db.size()); ++i)
    if (p.values_db[i] > p.values_db[peak]) peak = i;
  const double theta_cal = p.grid_deg[peak];
  double lcal = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < p.grid_deg.size(); ++i) {
    if (std::abs(p.grid_deg[i] - theta_cal) > mask.mainlobe_halfwidth_deg) {
      lcal = std::max(lcal, p.values_db[i]);
      any = true;
    }
  }
  if (!any)
    throw std::runtime_error("pattern_metrics: no samples outside the mainlobe window");
  return {theta_cal, lcal};
}

// alpha = max{ l_th / l_cal, |theta_cal - theta_opt| / theta_th }, both
// sidelobe levels in (negative) dB. l_cal >= 0 cannot occur for a
// normalized pattern with its peak excluded, but is clamped before the
// division.
inline double alpha(double l_cal_db, double theta_cal_deg, const BeamMask& mask) {
  const double lcal = std::min(l_cal_db, -0.01);
  const double sidelobe_ratio = mask.sidelobe_ceiling_db / lcal;
  const double pointing_ratio =
      std::abs(theta_cal_deg - mask.theta_opt_deg) / mask.pointing_tolerance_deg;
  return std::max(sidelobe_ratio, pointing_ratio);
}

struct GaConfig {
  int population_size = 64;
  int generations = 300;
  double crossover_rate = 0.8;
  double mutation_rate = 0.0;  // <= 0 selects the 1/N default
  double correlation_threshold = 0.3;
  double penalty_factor = 0.01;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (population_size < 2) throw std::invalid_argument("GaConfig: population_size >= 2");
    if (generations < 1) throw std::invalid_argument("GaConfig: generations >= 1");
    if (crossover_rate < 0.0 || crossover_rate > 1.0)
      throw std::invalid_argument("GaConfig: crossover_rate in [0,1]");
    if (mutation_rate > 1.0) throw std::invalid_argument("GaConfig: mutation_rate in [0,1]");
    if (!(correlation_threshold > 0.0) || correlation_threshold > 1.0)
      throw std::invalid_argument("GaConfig: correlation_threshold in (0,1]");
    if (!(penalty_factor > 0.0) || !(penalty_factor < 1.0))
      throw std::invalid_argument("GaConfig: penalty_factor in (0,1)");
  }
};

inline constexpr double kSentinelFitness = 1e30;  // cap for a zero-mismatch objective

// Evaluates the design objective F = alpha * sum |F_dB - F_target|^2 on the
// mask grid, reusing one steering-table across calls.
class BeamObjective {
 public:
  BeamObjective(const ArrayGeometry& g, BeamMask mask)
      : geometry_(g), mask_(std::move(mask)) {
    const int gsize = static_cast<int>(mask_.grid_deg.size());
    steer_.resize(gsize, g.n_elements);
    for (int i = 0; i < gsize; ++i)
      steer_.row(i) = detail::phase_ramp(g, mask_.grid_deg[i]).transpose();
    target_ = Eigen::Map<const Eigen::VectorXd>(mask_.target_db.data(), gsize);
  }

  struct Eval {
    double theta_cal_deg;
    double sidelobe_db;
    double alpha;
    double objective;  // F
    double fitness;    // 1/F, capped
  };

  Eval evaluate(const Eigen::VectorXd& signs) const {
    const Eigen::VectorXd mags = (steer_ * signs.cast<Complex>()).cwiseAbs();
    const double fmax = mags.maxCoeff();
    if (!(fmax > 0.0)) throw std::runtime_error("BeamObjective: degenerate pattern");
    Eigen::VectorXd db(mags.size());
    int peak = 0;
    for (int i = 0; i < mags.size(); ++i) {
      db[i] = mags[i] > 0.0 ? std::max(20.0 * std::log10(mags[i] / fmax), kDbFloor) : kDbFloor;
      if (db[i] > db[peak]) peak = i;
    }
    const double theta_cal = mask_.grid_deg[peak];
    double lcal = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int i = 0; i < db.size(); ++i) {
      if (std::abs(mask_.grid_deg[i] - theta_cal) > mask_.mainlobe_halfwidth_deg) {
        lcal = std::max(lcal, db[i]);
        any = true;
      }
    }
    if (!any) throw std::runtime_error("BeamObjective: no samples outside the mainlobe window");
    const double a = alpha(lcal, theta_cal, mask_);
    const double mismatch = (db - target_).squaredNorm();
    const double f = a * mismatch;
    const double fitness = f > 0.0 ? std::min(1.0 / f, kSentinelFitness) : kSentinelFitness;
    return {theta_cal, lcal, a, f, fitness};
  }

  Eval evaluate(const PhaseCode& code) const { return evaluate(code.signs()); }

  const BeamMask& mask() const { return mask_; }
  const ArrayGeometry& geometry() const { return geometry_; }

  bool satisfies_constraints(const Eval& e) const {
    return std::abs(e.theta_cal_deg - mask_.theta_opt_deg) <= mask_.pointing_tolerance_deg &&
           e.sidelobe_db <= mask_.sidelobe_ceiling_db;
  }

 private:
  ArrayGeometry geometry_;
  BeamMask mask_;
  Eigen::MatrixXcd steer_;  // G x N phase table on the mask grid
  Eigen::VectorXd target_;
};

inline double objective(const ArrayGeometry& g, const PhaseCode& code, const BeamMask& mask) {
  return BeamObjective(g, mask).evaluate(code).objective;
}

namespace detail {

// |rho| against one +-1 vector, with constant vectors counted as violating
// when they are the vector under test (a constant peer is skipped by the
// caller instead, so one degenerate peer does not penalize everyone else).
inline std::optional<double> abs_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const int n = static_cast<int>(a.size());
  const double ma = a.mean(), mb = b.mean();
  const double sa2 = 1.0 - ma * ma, sb2 = 1.0 - mb * mb;  // +-1 entries
  if (sa2 <= 1e-12 || sb2 <= 1e-12) return std::nullopt;
  return std::abs((a.dot(b) / n - ma * mb) / std::sqrt(sa2 * sb2));
}

}  // namespace detail

// Multiplies base_fitness by penalty_factor when the code is constant or
// correlates above the threshold with any accepted row or population peer;
// otherwise the fitness is returned unchanged.
inline double penalized_fitness(const PhaseCode& code, double base_fitness,
                                const std::vector<PhaseCode>& accepted,
                                const std::vector<PhaseCode>& peers, const GaConfig& config) {
  if (!(base_fitness > 0.0)) throw std::invalid_argument("penalized_fitness: base_fitness > 0");
  if (accepted.empty() && peers.empty()) return base_fitness;
  const Eigen::VectorXd u = code.signs();
  bool violates = code.is_constant();
  auto scan = [&](const std::vector<PhaseCode>& group) {
    for (const auto& other : group) {
      if (violates) return;
      if (other.is_constant()) continue;
      const auto r = detail::abs_correlation(u, other.signs());
      if (!r.has_value() || *r > config.correlation_threshold) violates = true;
    }
  };
  scan(accepted);
  scan(peers);
  return violates ? base_fitness * config.penalty_factor : base_fitness;
}

struct RowDiagnostics {
  double pointing_deg = 0.0;        // theta_cal
  double highest_sidelobe_db = 0.0;  // l_cal
  double fitness = 0.0;             // raw 1/F of the returned code
  int generations_used = 0;
};

struct EvolveResult {
  PhaseCode code;
  RowDiagnostics diagnostics;
  std::vector<double> elite_objective_history;  // raw F per generation
};

// Carries partial results when the design cannot be completed.
class DesignError : public std::runtime_error {
 public:
  DesignError(const std::string& what, std::vector<PhaseCode> partial)
      : std::runtime_error(what), partial_rows(std::move(partial)) {}
  std::vector<PhaseCode> partial_rows;
};

namespace detail {

// Everything the matrix builder wants to remember about a code it has seen.
struct PoolEntry {
  std::vector<std::uint8_t> bits;
  Eigen::VectorXd signs;
  double mean;
  double inv_sd;  // 1/sigma of the +-1 entries
  RowDiagnostics diag;
};

struct FeasiblePool {
  std::vector<PoolEntry> entries;
  std::unordered_map<std::string, int> index;

  bool add(const PhaseCode& code, const BeamObjective::Eval& e, int generations) {
    std::string key = code.to_string();
    if (index.count(key)) return false;
    PoolEntry entry;
    entry.bits = code.bits();
    entry.signs = code.signs();
    entry.mean = entry.signs.mean();
    const double var = 1.0 - entry.mean * entry.mean;
    if (var <= 1e-12) return false;  // constant codes cannot join a low-coherence set
    entry.inv_sd = 1.0 / std::sqrt(var);
    entry.diag = {e.theta_cal_deg, e.sidelobe_db, e.fitness, generations};
    index.emplace(std::move(key), static_cast<int>(entries.size()));
    entries.push_back(std::move(entry));
    return true;
  }

  double abs_rho(int i, int j) const {
    const auto& a = entries[i];
    const auto& b = entries[j];
    const int n = static_cast<int>(a.signs.size());
    return std::abs((a.signs.dot(b.signs) / n - a.mean * b.mean) * a.inv_sd * b.inv_sd);
  }
};

inline EvolveResult evolve_impl(const BeamObjective& objective_fn,
                                const std::vector<PhaseCode>& accepted, const GaConfig& config,
                                FeasiblePool* pool) {
  config.validate();
  const int n = objective_fn.geometry().n_elements;
  const int np = config.population_size;
  const double pm = config.mutation_rate > 0.0 ? config.mutation_rate : 1.0 / n;

  std::vector<Eigen::VectorXd> accepted_signs;
  accepted_signs.reserve(accepted.size());
  for (const auto& r : accepted) accepted_signs.push_back(r.signs());

  using Chromosome = std::vector<std::uint8_t>;
  std::vector<Chromosome> pop(np, Chromosome(n));

  auto seed_population = [&](std::uint64_t salt) {
    for (int i = 0; i < np; ++i) {
      RngStream s(derive_seed(config.rng_seed, 0xA11, salt, static_cast<std::uint64_t>(i)));
      for (int b = 0; b < n; ++b) pop[i][b] = static_cast<std::uint8_t>(s.next_u64() & 1u);
    }
  };
  seed_population(0);

  struct Scored {
    BeamObjective::Eval eval;
    Eigen::VectorXd signs;
    double mean;
    bool constant;
    double roulette_fitness;  // penalized against accepted rows and peers
    double stable_fitness;    // penalized against accepted rows only
  };
  std::vector<Scored> scored(np);

  std::optional<Chromosome> elite_bits;
  BeamObjective::Eval elite_eval{};
  double elite_stable = -1.0;
  std::vector<double> elite_history;
  bool reseeded = false;

  for (int g = 0; g < config.generations; ++g) {
    for (int i = 0; i < np; ++i) {
      Scored& s = scored[i];
      s.signs.resize(n);
      for (int b = 0; b < n; ++b) s.signs[b] = pop[i][b] ? -1.0 : 1.0;
      s.mean = s.signs.mean();
      s.constant = (1.0 - s.mean * s.mean) <= 1e-12;
      s.eval = objective_fn.evaluate(s.signs);
      if (pool && !s.constant && objective_fn.satisfies_constraints(s.eval))
        pool->add(PhaseCode(pop[i]), s.eval, config.generations);
    }
    // penalties: accepted rows first (stable part), then population peers
    for (int i = 0; i < np; ++i) {
      Scored& s = scored[i];
      bool viol_accepted = s.constant;
      for (const auto& r : accepted_signs) {
        if (viol_accepted) break;
        const auto rho = abs_correlation(s.signs, r);
        if (!rho.has_value() || *rho > config.correlation_threshold) viol_accepted = true;
      }
      bool viol = viol_accepted;
      for (int j = 0; j < np && !viol; ++j) {
        if (j == i || scored[j].constant) continue;
        const auto rho = abs_correlation(s.signs, scored[j].signs);
        if (rho.has_value() && *rho > config.correlation_threshold) viol = true;
      }
      s.stable_fitness = viol_accepted ? s.eval.fitness * config.penalty_factor : s.eval.fitness;
      s.roulette_fitness = viol ? s.eval.fitness * config.penalty_factor : s.eval.fitness;
    }

    double total = 0.0;
    for (const auto& s : scored) total += s.roulette_fitness;
    if (!(total > 0.0) || !std::isfinite(total)) {
      if (!reseeded) {
        reseeded = true;
        seed_population(0x5EED);
        --g;
        continue;
      }
      throw DesignError("evolve_one_vector: population fitness collapsed", accepted);
    }

    for (int i = 0; i < np; ++i) {
      if (scored[i].stable_fitness > elite_stable) {
        elite_stable = scored[i].stable_fitness;
        elite_bits = pop[i];
        elite_eval = scored[i].eval;
      }
    }
    elite_history.push_back(elite_eval.objective);

    if (g + 1 == config.generations) break;

    // roulette-wheel selection on the penalized fitness share
    std::vector<double> cumulative(np);
    double acc = 0.0;
    for (int i = 0; i < np; ++i) {
      acc += scored[i].roulette_fitness;
      cumulative[i] = acc;
    }
    RngStream sel(derive_seed(config.rng_seed, 0x5E1, static_cast<std::uint64_t>(g)));
    auto pick_parent = [&]() {
      const double r = sel.uniform() * acc;
      const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), r);
      return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(), np - 1));
    };

    std::vector<Chromosome> next;
    next.reserve(np);
    next.push_back(*elite_bits);  // elitism of 1
    std::uint64_t pair_idx = 0;
    while (static_cast<int>(next.size()) < np) {
      const int p1 = pick_parent();
      const int p2 = pick_parent();
      Chromosome c1 = pop[p1];
      Chromosome c2 = pop[p2];
      RngStream ops(derive_seed(config.rng_seed, 0xC05, static_cast<std::uint64_t>(g), pair_idx));
      if (ops.bernoulli(config.crossover_rate) && n > 1) {
        const int cut = 1 + static_cast<int>(ops.below(static_cast<std::uint64_t>(n - 1)));
        for (int b = cut; b < n; ++b) std::swap(c1[b], c2[b]);
      }
      for (Chromosome* child : {&c1, &c2}) {
        if (static_cast<int>(next.size()) >= np) break;
        RngStream mut(derive_seed(config.rng_seed, 0x307, static_cast<std::uint64_t>(g),
                                  static_cast<std::uint64_t>(next.size())));
        for (int b = 0; b < n; ++b)
          if (mut.bernoulli(pm)) (*child)[b] ^= 1u;
        next.push_back(*child);
      }
      ++pair_idx;
    }
    pop = std::move(next);
  }

  EvolveResult result{PhaseCode(*elite_bits),
                      {elite_eval.theta_cal_deg, elite_eval.sidelobe_db, elite_eval.fitness,
                       config.generations},
                      std::move(elite_history)};
  return result;
}

}  // namespace detail

inline EvolveResult evolve_one_vector(const ArrayGeometry& g, const BeamMask& mask,
                                      const std::vector<PhaseCode>& accepted,
                                      const GaConfig& config) {
  const BeamObjective obj(g, mask);
  return detail::evolve_impl(obj, accepted, config, nullptr);
}

struct DesignReport {
  MeasurementMatrix matrix;
  std::vector<RowDiagnostics> per_row;
  double coherence = 0.0;  // 0 by convention when P == 1
};

// Builds the P-row matrix. GA runs generate candidate codes (each run is
// coherence-penalized against the rows currently held); every code that
// meets the hard pointing/sidelobe constraints enters a pool, and a seeded
// drop/refill search over the pool maintains the accepted set until P
// mutually-compatible rows are found. Row-by-row retries alone stall well
// short of P because an early accepted row can block every remaining
// candidate, so the search may evict and replace rows it already holds.
inline DesignReport design_matrix(const ArrayGeometry& g, int p_rows, const BeamMask& mask,
                                  const GaConfig& config, int max_ga_rounds = 0) {
  config.validate();
  if (p_rows < 1) throw std::invalid_argument("design_matrix: P >= 1");
  if (max_ga_rounds <= 0) max_ga_rounds = std::max(3 * p_rows, 12);
  const BeamObjective obj(g, mask);
  const double thr = config.correlation_threshold;

  detail::FeasiblePool pool;
  std::vector<int> best_set;  // indices into pool
  int stalled_rounds = 0;     // rounds without growth; saturation cutoff

  auto compatible = [&](int cand, const std::vector<int>& set) {
    for (int s : set)
      if (pool.abs_rho(cand, s) > thr) return false;
    return true;
  };

  for (int round = 0; round < max_ga_rounds && static_cast<int>(best_set.size()) < p_rows;
       ++round) {
    GaConfig cfg = config;
    cfg.rng_seed = derive_seed(config.rng_seed, 0xDE5, static_cast<std::uint64_t>(round));
    std::vector<PhaseCode> accepted;
    accepted.reserve(best_set.size());
    for (int idx : best_set) accepted.emplace_back(pool.entries[idx].bits);
    detail::evolve_impl(obj, accepted, cfg, &pool);

    // seeded drop/refill search over the pool
    RngStream search(derive_seed(config.rng_seed, 0xF11, static_cast<std::uint64_t>(round)));
    std::vector<int> current = best_set;
    auto refill = [&](std::vector<int>& set) {
      const int m = static_cast<int>(pool.entries.size());
      std::vector<char> open(m, 1);
      for (int s : set) open[s] = 0;
      std::vector<int> order(m);
      for (int i = 0; i < m; ++i) order[i] = i;
      for (int i = m - 1; i > 0; --i)
        std::swap(order[i], order[search.below(static_cast<std::uint64_t>(i + 1))]);
      for (int cand : order) {
        if (static_cast<int>(set.size()) >= p_rows) break;
        if (open[cand] && compatible(cand, set)) {
          set.push_back(cand);
          open[cand] = 0;
        }
      }
    };
    const std::size_t before = best_set.size();
    refill(current);
    if (current.size() > best_set.size()) best_set = current;
    const int moves = 2500;
    for (int mv = 0; mv < moves && static_cast<int>(best_set.size()) < p_rows; ++mv) {
      const int drop = 1 + static_cast<int>(search.bernoulli(0.5));
      for (int d = 0; d < drop && current.size() > 1; ++d)
        current.erase(current.begin() +
                      static_cast<std::ptrdiff_t>(search.below(current.size())));
      refill(current);
      if (current.size() > best_set.size()) best_set = current;
    }
    stalled_rounds = best_set.size() > before ? 0 : stalled_rounds + 1;
    if (stalled_rounds >= 8 && round >= 11) break;  // pool saturated short of P
  }

  if (static_cast<int>(best_set.size()) < p_rows) {
    std::vector<PhaseCode> partial;
    for (int idx : best_set) partial.emplace_back(pool.entries[idx].bits);
    throw DesignError("design_matrix: GA round budget exhausted with " +
                          std::to_string(best_set.size()) + "/" + std::to_string(p_rows) +
                          " rows",
                      std::move(partial));
  }

  std::vector<PhaseCode> rows;
  std::vector<RowDiagnostics> per_row;
  rows.reserve(p_rows);
  for (int idx : best_set) {
    rows.emplace_back(pool.entries[idx].bits);
    per_row.push_back(pool.entries[idx].diag);
  }
  MeasurementMatrix matrix(std::move(rows));
  const double coherence = p_rows >= 2 ? mutual_coherence(matrix) : 0.0;
  return DesignReport{std::move(matrix), std::move(per_row), coherence};
}

}  // namespace risdoa
