#pragma once

// On-grid sparse recovery baseline: single-snapshot l1 minimization over a
// fixed dictionary of compressed steering vectors,
//
//   min_c (1/2) ||Phi c - y||^2 + lambda ||c||_1,  Phi[:, g] = U a(theta_g),
//
// solved by a monotone accelerated proximal-gradient iteration with
// backtracking. Grid bias is part of the comparison and is deliberately
// not refined away.

#include "risdoa/array_model.hpp"

namespace risdoa {

struct GridDictionary {
  std::vector<double> grid_deg;
  Eigen::MatrixXcd atoms;        // P x G
  Eigen::VectorXd column_norms;  // cached for the solver
};

inline GridDictionary build_dictionary(const MeasurementMatrix& u, const ArrayGeometry& g,
                                       double lo_deg = -60.0, double hi_deg = 60.0,
                                       double step_deg = 0.1) {
  GridDictionary d;
  d.grid_deg = make_angle_grid(lo_deg, hi_deg, step_deg);
  if (d.grid_deg.empty()) throw std::invalid_argument("build_dictionary: empty grid");
  d.atoms.resize(u.p(), static_cast<int>(d.grid_deg.size()));
  const Eigen::MatrixXcd umat = u.signs().cast<Complex>();
  for (int col = 0; col < d.atoms.cols(); ++col)
    d.atoms.col(col) = umat * detail::phase_ramp(g, d.grid_deg[col]);
  d.column_norms = d.atoms.colwise().norm();
  return d;
}

struct L1Solution {
  Eigen::VectorXcd coefficients;
  int iterations = 0;
  double objective = 0.0;
  bool converged = false;
  std::vector<double> objective_history;
};

namespace detail {

inline double l1_objective(const Eigen::MatrixXcd& phi, const Eigen::VectorXcd& c,
                           const Eigen::VectorXcd& y, double lambda) {
  return 0.5 * (phi * c - y).squaredNorm() + lambda * c.cwiseAbs().sum();
}

inline Eigen::VectorXcd soft_threshold(const Eigen::VectorXcd& v, double tau) {
  Eigen::VectorXcd out(v.size());
  for (int i = 0; i < v.size(); ++i) {
    const double m = std::abs(v[i]);
    out[i] = m > tau ? v[i] * ((m - tau) / m) : Complex(0.0, 0.0);
  }
  return out;
}

}  // namespace detail

inline L1Solution l1_solve(const Eigen::VectorXcd& y, const GridDictionary& dict, double lambda,
                           int max_iterations = 2000, double tolerance = 1e-10) {
  if (!(lambda > 0.0)) throw std::invalid_argument("l1_solve: lambda must be positive");
  const Eigen::MatrixXcd& phi = dict.atoms;
  const int gsize = static_cast<int>(phi.cols());

  // Lipschitz estimate ||Phi||_2^2 by power iteration on Phi^H Phi.
  Eigen::VectorXcd pv = Eigen::VectorXcd::Ones(gsize).normalized();
  for (int i = 0; i < 30; ++i) pv = (phi.adjoint() * (phi * pv)).normalized();
  double lip = (phi.adjoint() * (phi * pv)).norm();
  lip = std::max(lip, 1e-12);

  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(gsize);
  Eigen::VectorXcd z = c;
  double tk = 1.0;
  double obj = detail::l1_objective(phi, c, y, lambda);
  L1Solution sol;
  sol.objective_history.push_back(obj);

  int it = 0;
  for (; it < max_iterations; ++it) {
    const Eigen::VectorXcd rz = phi * z - y;
    const Eigen::VectorXcd grad = phi.adjoint() * rz;
    const double fz = 0.5 * rz.squaredNorm();
    Eigen::VectorXcd cand;
    double lcur = lip;
    double fc = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      cand = detail::soft_threshold(z - grad / lcur, lambda / lcur);
      fc = 0.5 * (phi * cand - y).squaredNorm();
      const Eigen::VectorXcd diff = cand - z;
      const double quad =
          fz + std::real(grad.dot(diff)) + 0.5 * lcur * diff.squaredNorm();
      if (fc <= quad + 1e-12 * std::abs(quad)) break;
      lcur *= 2.0;
    }
    lip = lcur;
    const double cand_obj = fc + lambda * cand.cwiseAbs().sum();
    // monotone variant: keep the better of the candidate and the last iterate
    const Eigen::VectorXcd c_prev = c;
    const double obj_prev = obj;
    if (cand_obj <= obj) {
      c = cand;
      obj = cand_obj;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    z = c + ((tk - 1.0) / tn) * (c - c_prev) + (tk / tn) * (cand - c);
    tk = tn;
    sol.objective_history.push_back(obj);
    if (std::abs(obj_prev - obj) <= tolerance * std::max(1.0, std::abs(obj)) && it > 2) {
      sol.converged = true;
      ++it;
      break;
    }
  }
  sol.coefficients = c;
  sol.iterations = it;
  sol.objective = obj;
  return sol;
}

inline double default_l1_lambda(const Eigen::VectorXcd& y, const GridDictionary& dict,
                                double scale = 0.1) {
  return scale * (dict.atoms.adjoint() * y).cwiseAbs().maxCoeff();
}

struct GridEstimate {
  std::vector<double> angles_deg;
  bool shortfall = false;
  int iterations = 0;
  bool converged = false;
};

// Top-K strict local maxima of |c| mapped to grid angles, ascending.
inline GridEstimate grid_estimate(const Eigen::VectorXcd& y, const GridDictionary& dict,
                                  int k_sources, double lambda, int max_iterations = 2000,
                                  double tolerance = 1e-10) {
  if (k_sources < 1) throw std::invalid_argument("grid_estimate: K >= 1");
  const L1Solution sol = l1_solve(y, dict, lambda, max_iterations, tolerance);
  const Eigen::VectorXd mag = sol.coefficients.cwiseAbs();
  std::vector<int> maxima;
  for (int i = 1; i + 1 < mag.size(); ++i)
    if (mag[i] > mag[i - 1] && mag[i] > mag[i + 1]) maxima.push_back(i);
  std::sort(maxima.begin(), maxima.end(), [&](int a, int b) {
    if (mag[a] != mag[b]) return mag[a] > mag[b];
    return a < b;
  });
  GridEstimate out;
  out.iterations = sol.iterations;
  out.converged = sol.converged;
  out.shortfall = static_cast<int>(maxima.size()) < k_sources;
  maxima.resize(std::min<std::size_t>(maxima.size(), k_sources));
  for (int idx : maxima) out.angles_deg.push_back(dict.grid_deg[idx]);
  std::sort(out.angles_deg.begin(), out.angles_deg.end());
  return out;
}

}  // namespace risdoa
