#pragma once

// One-bit ULA model: steering vectors, element-domain echo synthesis,
// far-field reflection patterns of binary phase codes, and the row
// correlation / mutual coherence metrics used by the measurement design.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace risdoa {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDbFloor = -120.0;  // dB floor at pattern nulls

inline double deg2rad(double deg) { return deg * (kPi / 180.0); }
inline double rad2deg(double rad) { return rad * (180.0 / kPi); }

using Complex = std::complex<double>;

struct ArrayGeometry {
  int n_elements;
  double spacing_wavelengths;  // d / lambda

  explicit ArrayGeometry(int n, double spacing = 0.5)
      : n_elements(n), spacing_wavelengths(spacing) {
    if (n_elements < 2) throw std::invalid_argument("ArrayGeometry: n_elements must be >= 2");
    if (!(spacing_wavelengths > 0.0))
      throw std::invalid_argument("ArrayGeometry: spacing must be positive");
  }
};

// Binary phase code: bit 0 <-> phase 0 <-> coefficient +1,
//                    bit 1 <-> phase pi <-> coefficient -1.
class PhaseCode {
 public:
  explicit PhaseCode(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    if (bits_.empty()) throw std::invalid_argument("PhaseCode: empty bit sequence");
    for (auto b : bits_)
      if (b > 1) throw std::invalid_argument("PhaseCode: bits must be 0 or 1");
  }

  static PhaseCode from_string(const std::string& s) {
    std::vector<std::uint8_t> bits(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != '0' && s[i] != '1')
        throw std::invalid_argument("PhaseCode: string must contain only '0'/'1'");
      bits[i] = static_cast<std::uint8_t>(s[i] - '0');
    }
    return PhaseCode(std::move(bits));
  }

  int size() const { return static_cast<int>(bits_.size()); }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  Eigen::VectorXd signs() const {
    Eigen::VectorXd u(size());
    for (int i = 0; i < size(); ++i) u[i] = bits_[i] ? -1.0 : 1.0;
    return u;
  }

  std::string to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i) s[i] = bits_[i] ? '1' : '0';
    return s;
  }

  bool is_constant() const {
    return std::all_of(bits_.begin(), bits_.end(),
                       [&](std::uint8_t b) { return b == bits_.front(); });
  }

  friend bool operator==(const PhaseCode& a, const PhaseCode& b) { return a.bits_ == b.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
};

// Stack of P phase codes realized as a P x N matrix of +-1 entries.
class MeasurementMatrix {
 public:
  explicit MeasurementMatrix(std::vector<PhaseCode> rows) : rows_(std::move(rows)) {
    if (rows_.empty()) throw std::invalid_argument("MeasurementMatrix: needs at least one row");
    const int n = rows_.front().size();
    for (const auto& r : rows_)
      if (r.size() != n)
        throw std::invalid_argument("MeasurementMatrix: rows must share one length");
    signs_.resize(static_cast<int>(rows_.size()), n);
    for (int p = 0; p < static_cast<int>(rows_.size()); ++p)
      signs_.row(p) = rows_[p].signs().transpose();
  }

  int n() const { return static_cast<int>(signs_.cols()); }
  int p() const { return static_cast<int>(signs_.rows()); }
  const std::vector<PhaseCode>& rows() const { return rows_; }
  const Eigen::MatrixXd& signs() const { return signs_; }

 private:
  std::vector<PhaseCode> rows_;
  Eigen::MatrixXd signs_;
};

// K far-field sources: strictly ascending angles in (-90, 90], nonzero amplitudes.
struct SourceScene {
  std::vector<double> angles_deg;
  std::vector<Complex> amplitudes;

  SourceScene(std::vector<double> angles, std::vector<Complex> amps)
      : angles_deg(std::move(angles)), amplitudes(std::move(amps)) {
    if (angles_deg.empty()) throw std::invalid_argument("SourceScene: needs K >= 1 sources");
    if (angles_deg.size() != amplitudes.size())
      throw std::invalid_argument("SourceScene: angles/amplitudes size mismatch");
    for (std::size_t k = 0; k < angles_deg.size(); ++k) {
      if (!(angles_deg[k] > -90.0) || !(angles_deg[k] <= 90.0))
        throw std::domain_error("SourceScene: angle outside (-90, 90]");
      if (k > 0 && !(angles_deg[k] > angles_deg[k - 1]))
        throw std::invalid_argument("SourceScene: angles must be strictly ascending");
      if (std::abs(amplitudes[k]) == 0.0)
        throw std::invalid_argument("SourceScene: amplitudes must be nonzero");
    }
  }

  int k() const { return static_cast<int>(angles_deg.size()); }
};

struct BeamPattern {
  std::vector<double> grid_deg;
  std::vector<double> values_db;  // normalized, peak exactly 0 dB
};

inline std::vector<double> make_angle_grid(double lo_deg, double hi_deg, double step_deg) {
  if (!(step_deg > 0.0) || !(hi_deg >= lo_deg))
    throw std::invalid_argument("make_angle_grid: bad range or step");
  const int count = static_cast<int>(std::floor((hi_deg - lo_deg) / step_deg + 0.5)) + 1;
  std::vector<double> g(count);
  for (int i = 0; i < count; ++i) g[i] = std::min(lo_deg + i * step_deg, hi_deg);
  return g;
}

namespace detail {

// e^{j 2 pi (d/lambda) (n-1) sin(theta)}, no domain check; shared by the
// steering vector and the far-field sum.
inline Eigen::VectorXcd phase_ramp(const ArrayGeometry& g, double angle_deg) {
  const double omega = 2.0 * kPi * g.spacing_wavelengths * std::sin(deg2rad(angle_deg));
  Eigen::VectorXcd a(g.n_elements);
  for (int n = 0; n < g.n_elements; ++n) a[n] = std::polar(1.0, omega * n);
  return a;
}

}  // namespace detail

inline Eigen::VectorXcd steering_vector(const ArrayGeometry& g, double angle_deg) {
  if (!(angle_deg > -90.0) || !(angle_deg <= 90.0))
    throw std::domain_error("steering_vector: angle outside (-90, 90]");
  return detail::phase_ramp(g, angle_deg);
}

inline Eigen::MatrixXcd steering_matrix(const ArrayGeometry& g,
                                        const std::vector<double>& angles_deg) {
  Eigen::MatrixXcd A(g.n_elements, static_cast<int>(angles_deg.size()));
  for (int k = 0; k < A.cols(); ++k) A.col(k) = steering_vector(g, angles_deg[k]);
  return A;
}

// Element-domain echo x with x_n = sum_k s_k e^{j 2pi/lambda (n-1) d sin(theta_k)}.
inline Eigen::VectorXcd element_signals(const ArrayGeometry& g, const SourceScene& scene) {
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(g.n_elements);
  for (int k = 0; k < scene.k(); ++k)
    x += scene.amplitudes[k] * steering_vector(g, scene.angles_deg[k]);
  return x;
}

// |sum_n e^{j(phi_n + 2 pi (n-1)(d/lambda) sin theta)}|, in [0, N].
inline double far_field(const ArrayGeometry& g, const PhaseCode& code, double angle_deg) {
  if (code.size() != g.n_elements)
    throw std::invalid_argument("far_field: code length does not match geometry");
  const Eigen::VectorXcd a = detail::phase_ramp(g, angle_deg);
  return std::abs(a.dot(code.signs().cast<Complex>()));  // dot conjugates a; |.| unaffected
}

inline BeamPattern beam_pattern(const ArrayGeometry& g, const PhaseCode& code,
                                const std::vector<double>& grid_deg) {
  if (grid_deg.empty()) throw std::invalid_argument("beam_pattern: empty grid");
  BeamPattern p;
  p.grid_deg = grid_deg;
  std::vector<double> f(grid_deg.size());
  double fmax = 0.0;
  for (std::size_t i = 0; i < grid_deg.size(); ++i) {
    f[i] = far_field(g, code, grid_deg[i]);
    fmax = std::max(fmax, f[i]);
  }
  if (!(fmax > 0.0)) throw std::runtime_error("beam_pattern: degenerate pattern (f == 0 on grid)");
  p.values_db.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i)
    p.values_db[i] = f[i] > 0.0 ? std::max(20.0 * std::log10(f[i] / fmax), kDbFloor) : kDbFloor;
  return p;
}

// Pearson correlation with population statistics (divide by N in both the
// covariance and the standard deviations).
inline double correlation(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw std::invalid_argument("correlation: length mismatch");
  const int n = static_cast<int>(u.size());
  const double mu = u.mean(), mv = v.mean();
  const double su2 = u.squaredNorm() / n - mu * mu;
  const double sv2 = v.squaredNorm() / n - mv * mv;
  if (su2 <= 1e-24 || sv2 <= 1e-24)
    throw std::domain_error("correlation: undefined for a constant vector");
  const double cov = u.dot(v) / n - mu * mv;
  return std::clamp(cov / std::sqrt(su2 * sv2), -1.0, 1.0);
}

inline double correlation(const PhaseCode& u, const PhaseCode& v) {
  return correlation(u.signs(), v.signs());
}

// max over row pairs p != q of |correlation(u_p, u_q)|.
inline double mutual_coherence(const MeasurementMatrix& m) {
  if (m.p() < 2) throw std::invalid_argument("mutual_coherence: needs P >= 2 rows");
  double worst = 0.0;
  for (int p = 0; p < m.p(); ++p)
    for (int q = p + 1; q < m.p(); ++q)
      worst = std::max(worst,
                       std::abs(correlation(Eigen::VectorXd(m.signs().row(p)),
                                            Eigen::VectorXd(m.signs().row(q)))));
  return worst;
}

}  // namespace risdoa
