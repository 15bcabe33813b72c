#pragma once

// Gridless DOA estimation from y = U A(theta) s + w by atomic-norm
// denoising:
//
//   min_x  (1/2) ||U x - y||^2 + eps ||x||_A
//
// where ||x||_A is the atomic norm over unit-modulus steering atoms. The
// atomic norm is expressed through the standard Toeplitz lift
//
//   ||x||_A = min_{u,t} tr(Toep(u))/(2N) + t/2
//             s.t. [[Toep(u), x], [x^H, t]] >= 0,
//
// and the lifted program is solved with ADMM: the (t, u, x) block has
// closed-form updates (the x step solves a small positive-definite system
// in U^T U), the consensus copy is projected onto the PSD cone by a
// Hermitian eigendecomposition, and the penalty is rebalanced from the
// primal/dual residuals. Convergence is certified by the duality gap
// against the dual-feasible point obtained from the scaled residual
// q = y - U x, rather than by trusting the iteration count. Source angles
// are read off the peaks of the dual polynomial z(theta) = <U a(theta), q>.

#include "risdoa/array_model.hpp"

#include <array>
#include <functional>
#include <optional>

namespace risdoa {

// eps = 262.6 e^{-0.1327 gamma}, gamma in dB.
inline double epsilon_from_snr(double snr_db) { return 262.6 * std::exp(-0.1327 * snr_db); }

struct AnmConfig {
  double epsilon = 0.0;  // <= 0 means resolve from the SNR rule
  double admm_penalty = 2.0;
  int max_iterations = 5000;
  double primal_dual_tolerance = 1e-6;
  double dual_grid_step_deg = 0.01;
  int n_sources_hint = 2;

  void validate() const {
    if (!(admm_penalty > 0.0)) throw std::invalid_argument("AnmConfig: admm_penalty > 0");
    if (max_iterations < 1) throw std::invalid_argument("AnmConfig: max_iterations >= 1");
    if (!(primal_dual_tolerance > 0.0))
      throw std::invalid_argument("AnmConfig: tolerance > 0");
    if (!(dual_grid_step_deg > 0.0) || dual_grid_step_deg > 0.1)
      throw std::invalid_argument("AnmConfig: dual_grid_step_deg in (0, 0.1]");
  }
};

struct AnmSolution {
  Eigen::VectorXcd signal_estimate;   // x_hat
  Eigen::VectorXcd toeplitz_vector;   // first column of the lifted Toeplitz block
  double lift_scalar = 0.0;           // t
  Eigen::VectorXcd dual_certificate;  // q, length P
  double epsilon = 0.0;
  double atomic_norm_value = 0.0;  // (Re u_0 + t) / 2 at termination
  int iterations = 0;
  bool converged = false;
  bool fully_shrunk = false;          // eps >= ||U^H y||_A* so x_hat = 0 exactly
  bool certificate_rescaled = false;  // residual scaled back into the feasible ball
  double duality_gap = 0.0;           // relative
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double min_eigenvalue = 0.0;  // of the lifted matrix at termination
  std::vector<std::array<double, 3>> residual_history;  // (primal, dual, gap) per check
};

struct PeakPick {
  std::vector<double> angles_deg;  // ascending
  bool shortfall = false;          // fewer than K strict local maxima found
};

// Strict local maxima of the sampled spectrum, tallest K kept, each
// optionally refined by golden-section search within one grid step.
inline PeakPick pick_peaks(const std::vector<double>& spectrum, int k,
                           const std::vector<double>& grid_deg,
                           const std::function<double(double)>& value_at = {}) {
  if (k < 1) throw std::invalid_argument("pick_peaks: K >= 1");
  if (spectrum.size() < 3 || spectrum.size() != grid_deg.size())
    throw std::invalid_argument("pick_peaks: spectrum needs >= 3 samples matching the grid");
  std::vector<int> maxima;
  for (int i = 1; i + 1 < static_cast<int>(spectrum.size()); ++i)
    if (spectrum[i] > spectrum[i - 1] && spectrum[i] > spectrum[i + 1]) maxima.push_back(i);
  std::sort(maxima.begin(), maxima.end(), [&](int a, int b) {
    if (spectrum[a] != spectrum[b]) return spectrum[a] > spectrum[b];
    return a < b;
  });
  PeakPick out;
  out.shortfall = static_cast<int>(maxima.size()) < k;
  maxima.resize(std::min<std::size_t>(maxima.size(), k));
  constexpr double kGolden = 0.61803398874989484820;
  for (int idx : maxima) {
    double theta = grid_deg[idx];
    if (value_at) {
      double lo = grid_deg[idx - 1], hi = grid_deg[idx + 1];
      double x1 = hi - kGolden * (hi - lo), x2 = lo + kGolden * (hi - lo);
      double f1 = value_at(x1), f2 = value_at(x2);
      while (hi - lo > 1e-4) {
        if (f1 < f2) {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + kGolden * (hi - lo);
          f2 = value_at(x2);
        } else {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - kGolden * (hi - lo);
          f1 = value_at(x1);
        }
      }
      theta = 0.5 * (lo + hi);
    }
    out.angles_deg.push_back(theta);
  }
  std::sort(out.angles_deg.begin(), out.angles_deg.end());
  return out;
}

struct EstimationResult {
  std::vector<double> angles_deg;
  std::vector<double> grid_deg;
  std::vector<double> spectrum;  // |z(theta)| on the dual grid
  double epsilon_used = 0.0;
  bool shortfall = false;
  AnmSolution diagnostics;
};

// Holds everything derived from (geometry, U, config) so repeated solves
// (e.g. Monte Carlo trials) share the steering table and normal matrix.
// solve() is const and safe to call concurrently.
class AnmSolver {
 public:
  AnmSolver(const ArrayGeometry& g, const MeasurementMatrix& u, AnmConfig config)
      : AnmSolver(g, Eigen::MatrixXd(u.signs()), std::move(config)) {}

  // general real sensing matrix; tests use identity sensing through this
  AnmSolver(const ArrayGeometry& g, Eigen::MatrixXd sensing, AnmConfig config)
      : geometry_(g), config_(std::move(config)), umat_(std::move(sensing)) {
    config_.validate();
    if (umat_.cols() != g.n_elements)
      throw std::invalid_argument("AnmSolver: matrix width does not match geometry");
    utu_ = umat_.transpose() * umat_;
    // dual grid over (-90, 90]
    const double step = config_.dual_grid_step_deg;
    const int count = static_cast<int>(std::floor(180.0 / step + 0.5));
    grid_deg_.resize(count);
    for (int i = 0; i < count; ++i) grid_deg_[i] = -90.0 + (i + 1) * step;
    steer_conj_.resize(count, g.n_elements);
    for (int i = 0; i < count; ++i)
      steer_conj_.row(i) = detail::phase_ramp(g, grid_deg_[i]).conjugate().transpose();
  }

  const std::vector<double>& grid_deg() const { return grid_deg_; }
  const AnmConfig& config() const { return config_; }

  // |z(theta)| = |<U a(theta), q>| sampled on the dual grid.
  std::vector<double> dual_polynomial(const Eigen::VectorXcd& q) const {
    const Eigen::VectorXcd v = umat_.transpose() * q;
    const Eigen::VectorXd mags = (steer_conj_ * v).cwiseAbs();
    return {mags.data(), mags.data() + mags.size()};
  }

  double dual_value_at(const Eigen::VectorXcd& q, double theta_deg) const {
    const Eigen::VectorXcd v = umat_.transpose() * q;
    return std::abs(detail::phase_ramp(geometry_, theta_deg).dot(v));  // dot conjugates a
  }

  AnmSolution solve(const Eigen::VectorXcd& y, double epsilon) const {
    if (!(epsilon > 0.0)) throw std::domain_error("AnmSolver: epsilon must be positive");
    const int n = geometry_.n_elements;
    const int np1 = n + 1;
    AnmSolution sol;
    sol.epsilon = epsilon;

    // full-shrinkage guard: x = 0 is optimal iff ||U^H y||_A* <= eps
    {
      const double nu = grid_max(umat_.transpose() * y);
      if (epsilon >= nu) {
        sol.signal_estimate = Eigen::VectorXcd::Zero(n);
        sol.toeplitz_vector = Eigen::VectorXcd::Zero(n);
        sol.dual_certificate = y;
        sol.converged = true;
        sol.fully_shrunk = true;
        sol.min_eigenvalue = 0.0;
        return sol;
      }
    }

    double rho = config_.admm_penalty;
    Eigen::MatrixXcd Z = Eigen::MatrixXcd::Zero(np1, np1);
    Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(np1, np1);
    Eigen::MatrixXcd Zprev = Z, Zhat = Z;
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n);
    Eigen::VectorXcd uvec = Eigen::VectorXcd::Zero(n);
    double t = 0.0;
    const Eigen::VectorXcd uty = umat_.transpose() * y;

    Eigen::LLT<Eigen::MatrixXd> llt(utu_ + 2.0 * rho * Eigen::MatrixXd::Identity(n, n));
    constexpr int kCheckInterval = 25;
    constexpr double kFeasTol = 4e-7;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig;
    int it = 0;
    bool converged = false;
    double pr = 0.0, dr = 0.0, gap = 1.0;
    while (it < config_.max_iterations) {
      ++it;
      const Eigen::MatrixXcd G = Z + W;
      t = G(n, n).real() - epsilon / (2.0 * rho);
      const Eigen::VectorXcd gx = G.col(n).head(n);
      const Eigen::VectorXcd rhs = uty + 2.0 * rho * gx;
      x.real() = llt.solve(rhs.real().eval());
      x.imag() = llt.solve(rhs.imag().eval());
      for (int kd = 0; kd < n; ++kd) {
        Complex acc(0.0, 0.0);
        for (int i = 0; i + kd < n; ++i) acc += G(i, i + kd);
        uvec[kd] = acc / static_cast<double>(n - kd);
      }
      uvec[0] = Complex(uvec[0].real() - epsilon / (2.0 * rho * n), 0.0);
      for (int i = 0; i < n; ++i) {
        Zhat(i, i) = uvec[0];
        for (int j = i + 1; j < n; ++j) {
          Zhat(i, j) = uvec[j - i];
          Zhat(j, i) = std::conj(uvec[j - i]);
        }
      }
      Zhat.col(n).head(n) = x;
      Zhat.row(n).head(n) = x.adjoint();
      Zhat(n, n) = Complex(t, 0.0);

      eig.compute(Zhat - W);
      const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
      Z = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().adjoint();
      W += Z - Zhat;

      if (it % kCheckInterval == 0 || it == config_.max_iterations) {
        pr = (Z - Zhat).norm();
        dr = rho * (Z - Zprev).norm();
        const double pobj =
            0.5 * (umat_ * x - y).squaredNorm() + epsilon * (uvec[0].real() + t) / 2.0;
        const Eigen::VectorXcd q = y - umat_ * x;
        const double mz = grid_max(umat_.transpose() * q);
        const double scale = mz > epsilon ? epsilon / mz : 1.0;
        const Eigen::VectorXcd qf = scale * q;
        const double dobj = std::real(qf.dot(y)) - 0.5 * qf.squaredNorm();
        gap = std::abs(pobj - dobj) / std::max(1.0, std::abs(pobj));
        sol.residual_history.push_back({pr, dr, gap});
        if (gap <= config_.primal_dual_tolerance && pr <= kFeasTol) {
          converged = true;
          break;
        }
        if (pr > 10.0 * dr && rho < 1e6) {
          rho *= 2.0;
          W *= 0.5;
          llt.compute(utu_ + 2.0 * rho * Eigen::MatrixXd::Identity(n, n));
        } else if (dr > 10.0 * pr && rho > 1e-6) {
          rho *= 0.5;
          W *= 2.0;
          llt.compute(utu_ + 2.0 * rho * Eigen::MatrixXd::Identity(n, n));
        }
      }
      Zprev = Z;
    }

    sol.signal_estimate = x;
    sol.toeplitz_vector = uvec;
    sol.lift_scalar = t;
    sol.atomic_norm_value = (uvec[0].real() + t) / 2.0;
    sol.iterations = it;
    sol.converged = converged;
    sol.duality_gap = gap;
    sol.primal_residual = pr;
    sol.dual_residual = dr;
    eig.compute(Zhat);
    sol.min_eigenvalue = eig.eigenvalues().minCoeff();

    // Residual-based certificate; projected back into the feasible ball if
    // the sampled dual norm exceeds eps by more than 1e-3 relative.
    Eigen::VectorXcd q = y - umat_ * x;
    const double mz = grid_max(umat_.transpose() * q);
    if (mz > epsilon * (1.0 + 1e-3)) {
      q *= epsilon / mz;
      sol.certificate_rescaled = true;
    }
    sol.dual_certificate = q;
    return sol;
  }

  EstimationResult estimate(const Eigen::VectorXcd& y, int k_sources, double epsilon) const {
    if (k_sources < 1) throw std::invalid_argument("estimate: K >= 1");
    EstimationResult res;
    res.epsilon_used = epsilon;
    res.diagnostics = solve(y, epsilon);
    res.grid_deg = grid_deg_;
    res.spectrum = dual_polynomial(res.diagnostics.dual_certificate);
    if (res.diagnostics.fully_shrunk) {
      // no recovered support; report the shrinkage instead of noise peaks
      res.shortfall = true;
      return res;
    }
    const Eigen::VectorXcd v = umat_.transpose() * res.diagnostics.dual_certificate;
    auto zabs = [&](double theta) { return std::abs(detail::phase_ramp(geometry_, theta).dot(v)); };
    const PeakPick picked = pick_peaks(res.spectrum, k_sources, grid_deg_, zabs);
    res.angles_deg = picked.angles_deg;
    res.shortfall = picked.shortfall;
    return res;
  }

 private:
  double grid_max(const Eigen::VectorXcd& v) const {
    return (steer_conj_ * v).cwiseAbs().maxCoeff();
  }

  ArrayGeometry geometry_;
  AnmConfig config_;
  Eigen::MatrixXd umat_;
  Eigen::MatrixXd utu_;
  std::vector<double> grid_deg_;
  Eigen::MatrixXcd steer_conj_;  // G x N, row g = a(theta_g)^H
};

inline AnmSolution atomic_denoise(const Eigen::VectorXcd& y, const MeasurementMatrix& u,
                                  const ArrayGeometry& g, const AnmConfig& config) {
  double eps = config.epsilon;
  if (!(eps > 0.0)) throw std::domain_error("atomic_denoise: epsilon must be resolved > 0");
  return AnmSolver(g, u, config).solve(y, eps);
}

inline std::vector<double> dual_polynomial(const MeasurementMatrix& u, const ArrayGeometry& g,
                                           const Eigen::VectorXcd& certificate,
                                           const std::vector<double>& grid_deg) {
  if (certificate.size() != u.p())
    throw std::invalid_argument("dual_polynomial: certificate length != P");
  const Eigen::VectorXcd v = u.signs().transpose() * certificate;
  std::vector<double> out(grid_deg.size());
  for (std::size_t i = 0; i < grid_deg.size(); ++i)
    out[i] = std::abs(detail::phase_ramp(g, grid_deg[i]).dot(v));
  return out;
}

// estimate() with epsilon resolved from the config or the SNR rule; a
// non-positive k_sources falls back to the configured hint.
inline EstimationResult estimate(const Eigen::VectorXcd& y, const MeasurementMatrix& u,
                                 const ArrayGeometry& g, int k_sources, const AnmConfig& config,
                                 std::optional<double> snr_db = std::nullopt) {
  double eps = config.epsilon;
  if (!(eps > 0.0)) {
    if (!snr_db.has_value())
      throw std::invalid_argument("estimate: epsilon unset and no SNR given for the auto rule");
    eps = epsilon_from_snr(*snr_db);
  }
  if (k_sources <= 0) k_sources = config.n_sources_hint;
  return AnmSolver(g, u, config).estimate(y, k_sources, eps);
}

// ||x||_A via the same lift with x held fixed; used by tests and
// diagnostics. Terminates on feasibility plus value stagnation.
inline double atomic_norm(const Eigen::VectorXcd& x, const ArrayGeometry& g,
                          int max_iterations = 20000, double tolerance = 1e-9) {
  const int n = g.n_elements;
  if (x.size() != n) throw std::invalid_argument("atomic_norm: size mismatch");
  const int np1 = n + 1;
  double rho = 1.0;
  Eigen::MatrixXcd Z = Eigen::MatrixXcd::Zero(np1, np1);
  Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(np1, np1);
  Eigen::MatrixXcd Zhat = Z;
  Eigen::VectorXcd uvec = Eigen::VectorXcd::Zero(n);
  double t = 0.0, value_prev = -1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::MatrixXcd G = Z + W;
    t = G(n, n).real() - 1.0 / (2.0 * rho);
    for (int kd = 0; kd < n; ++kd) {
      Complex acc(0.0, 0.0);
      for (int i = 0; i + kd < n; ++i) acc += G(i, i + kd);
      uvec[kd] = acc / static_cast<double>(n - kd);
    }
    uvec[0] = Complex(uvec[0].real() - 1.0 / (2.0 * rho * n), 0.0);
    for (int i = 0; i < n; ++i) {
      Zhat(i, i) = uvec[0];
      for (int j = i + 1; j < n; ++j) {
        Zhat(i, j) = uvec[j - i];
        Zhat(j, i) = std::conj(uvec[j - i]);
      }
    }
    Zhat.col(n).head(n) = x;
    Zhat.row(n).head(n) = x.adjoint();
    Zhat(n, n) = Complex(t, 0.0);
    eig.compute(Zhat - W);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    Z = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().adjoint();
    W += Z - Zhat;
    if (it % 50 == 0) {
      const double value = (uvec[0].real() + t) / 2.0;
      const double pr = (Z - Zhat).norm();
      if (value_prev >= 0.0 && std::abs(value - value_prev) <= tolerance * std::max(1.0, value) &&
          pr <= 1e-7)
        break;
      value_prev = value;
    }
  }
  return (uvec[0].real() + t) / 2.0;
}

}  // namespace risdoa
