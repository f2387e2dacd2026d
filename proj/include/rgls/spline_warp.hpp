#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rgls/signal.hpp"

namespace rgls {

/// Lower bound applied to A(t) before the fractional power [A]^alpha.
inline constexpr double kAmpFloor = 0.01;

/// Cardinal cubic Hermite basis on fixed nodes with Catmull-Rom slopes
/// (centered differences of nodal values, one-sided at the two ends).
/// phi_k(node_j) = delta_kj, and sum_k phi_k(t) = 1.
class SplineBasis {
 public:
  SplineBasis() = default;
  /// Nodes must be strictly increasing, at least two of them.
  explicit SplineBasis(std::vector<double> node_times);
  static SplineBasis uniform(double t_start, double t_end, std::size_t n_intervals = 4);

  const std::vector<double>& node_times() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t n_intervals() const { return nodes_.size() - 1; }
  double start() const { return nodes_.front(); }
  double end() const { return nodes_.back(); }

  /// phi_k(t); t is clamped to [start, end].
  double eval(std::size_t k, double t) const;
  /// All basis values and first derivatives at t (clamped). Both spans have size().
  void eval_all(double t, std::span<double> phi, std::span<double> dphi) const;

 private:
  std::vector<double> nodes_;
};

/// Basis functions tabulated on a sample grid: row i holds phi_k(t_i), row-major.
struct SampledBasis {
  std::size_t n_samples = 0;
  std::size_t n_basis = 0;
  std::vector<double> phi;
  std::vector<double> dphi;

  SampledBasis(const SplineBasis& basis, std::span<const double> times);
  double value(std::size_t i, std::size_t k) const { return phi[i * n_basis + k]; }
  double slope(std::size_t i, std::size_t k) const { return dphi[i * n_basis + k]; }
};

struct WarpValue {
  double p = 0.0;
  double amp = 0.0;
  double dp = 0.0;
  double damp = 0.0;
};

/// Warp p(t) = sum rho_k phi_k(t) and amplitude A(t) = sum amp_k phi_k(t).
struct WarpModel {
  SplineBasis basis;
  std::vector<double> rho;
  std::vector<double> amp;

  WarpModel() = default;
  /// Throws std::invalid_argument if the coefficient vectors do not match the basis.
  WarpModel(SplineBasis basis, std::vector<double> rho, std::vector<double> amp);
  /// p(t) = t, A(t) = 1.
  static WarpModel identity(SplineBasis basis);

  WarpValue eval(double t) const;
  /// p and A sampled at each time.
  void sample(std::span<const double> times, std::span<double> p, std::span<double> a) const;
};

/// True if p'(t) <= 0 anywhere on a dense grid (per interval `per_interval` points).
bool has_fold(const WarpModel& w, std::size_t per_interval = 64);

/// 4-point cubic convolution (Keys, a = -1/2) of u at time tau; zero outside [t0, t_end].
double interpolate(const Trace& u, double tau);

/// d~(t_i) = [max(A_i, kAmpFloor)]^alpha * u((1 - alpha) t_i + alpha p_i) for dense warps
/// p_i, A_i sampled on u's grid. Throws std::invalid_argument unless 0 <= alpha <= 1.
/// Floor hits are logged, or counted into *clamped instead when it is given.
Trace apply_warp(const Trace& u, std::span<const double> p, std::span<const double> a,
                 double alpha, std::size_t* clamped = nullptr);
Trace apply_warp(const Trace& u, const WarpModel& w, double alpha, std::size_t* clamped = nullptr);

}  // namespace rgls
