#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rgls/signal.hpp"
#include "rgls/survey.hpp"

namespace rgls {

/// Real 2D grid, x-major with z fastest: data[ix * nz + iz].
struct Grid2D {
  std::size_t nx = 0;
  std::size_t nz = 0;
  std::vector<double> data;

  Grid2D() = default;
  Grid2D(std::size_t nx_, std::size_t nz_, double fill = 0.0)
      : nx(nx_), nz(nz_), data(nx_ * nz_, fill) {}
  double& operator()(std::size_t ix, std::size_t iz) { return data[ix * nz + iz]; }
  double operator()(std::size_t ix, std::size_t iz) const { return data[ix * nz + iz]; }
};

/// Wave speed (m/s) on a square grid; cell (ix, iz) sits at origin + (ix, iz) * dx.
class VelocityModel {
 public:
  VelocityModel() = default;
  /// Throws std::invalid_argument unless v > 0 everywhere, nx, nz >= 16 and dx > 0.
  VelocityModel(std::size_t nx, std::size_t nz, double dx, Position origin, std::vector<double> v);
  static VelocityModel constant(std::size_t nx, std::size_t nz, double dx, double v,
                                Position origin = {});
  /// v = 1 / sqrt(m).
  static VelocityModel from_squared_slowness(std::size_t nx, std::size_t nz, double dx,
                                             Position origin, std::span<const double> m);

  std::size_t nx() const { return nx_; }
  std::size_t nz() const { return nz_; }
  double dx() const { return dx_; }
  Position origin() const { return origin_; }
  const std::vector<double>& values() const { return v_; }

  double operator()(std::size_t ix, std::size_t iz) const { return v_[ix * nz_ + iz]; }
  double squared_slowness(std::size_t ix, std::size_t iz) const;
  std::vector<double> squared_slowness() const;
  double v_max() const;
  double v_min() const;
  Position position(std::size_t ix, std::size_t iz) const;
  /// Fractional grid coordinates of a physical position.
  double grid_x(double x) const { return (x - origin_.x) / dx_; }
  double grid_z(double z) const { return (z - origin_.z) / dx_; }
  bool same_grid(const VelocityModel& other) const;

 private:
  std::size_t nx_ = 0;
  std::size_t nz_ = 0;
  double dx_ = 0.0;
  Position origin_;
  std::vector<double> v_;
};

/// Absorbing layer around the model: damping d(s) = max_damping * (s / width)^profile_power
/// at normalized depth s into the layer, applied as a convolutional PML.
struct PmlConfig {
  std::size_t width = 20;
  double max_damping = 0.0;
  double profile_power = 2.0;
  /// false: no layer at all, u = 0 just outside the model (reflecting box).
  bool absorbing = true;

  /// max_damping = (power + 1) * v_ref * ln(1 / reflection) / (2 * width * dx).
  static PmlConfig tuned(double v_ref, double dx, std::size_t width = 20,
                         double profile_power = 2.0, double reflection = 1e-5);
  static PmlConfig reflecting();
  /// Throws std::invalid_argument if absorbing with width < 8 or max_damping <= 0.
  void validate() const;
  std::size_t padding() const { return absorbing ? width : 0; }
};

/// Sum of |coefficients| of the 4th-order staggered first derivative (9/8, 1/24).
inline constexpr double kStencilConstant = 7.0 / 6.0;
inline constexpr double kDefaultCfl = 0.9;

/// cfl_safety * dx / (v_max * sqrt(2) * kStencilConstant).
double stability_dt(const VelocityModel& model, double cfl_safety = kDefaultCfl);

/// Interior snapshots of a scalar field, stored as float: data[(n * nx + ix) * nz + iz].
struct Wavefield {
  std::size_t nx = 0;
  std::size_t nz = 0;
  std::size_t nt = 0;
  double dt = 0.0;
  /// Snapshot k holds time level k * stride.
  std::size_t stride = 1;
  std::vector<float> data;

  float at(std::size_t k, std::size_t ix, std::size_t iz) const {
    return data[(k * nx + ix) * nz + iz];
  }
  std::span<const float> snapshot(std::size_t k) const {
    return std::span<const float>(data).subspan(k * nx * nz, nx * nz);
  }
};

/// Injection of value / dx^2 at one node of the padded grid.
struct PointInjection {
  std::size_t node = 0;
  double value = 0.0;
};

/// Bilinear receiver sampling: up to four padded-grid nodes and weights.
struct ReceiverStencil {
  std::size_t node[4] = {0, 0, 0, 0};
  double weight[4] = {0.0, 0.0, 0.0, 0.0};
};

/// m u_tt = Laplacian(u) + f with a 4th-order staggered Laplacian, leapfrog in time,
/// and a convolutional PML on all four sides. u = 0 outside the padded grid.
class AcousticPropagator {
 public:
  AcousticPropagator(const VelocityModel& model, double dt, const PmlConfig& pml);

  std::size_t nx_total() const { return nx_; }
  std::size_t nz_total() const { return nz_; }
  std::size_t padding() const { return pad_; }
  double dt() const { return dt_; }

  /// Padded-grid node nearest to a physical position; throws if outside the model.
  std::size_t nearest_node(const VelocityModel& model, Position p) const;
  ReceiverStencil receiver_stencil(const VelocityModel& model, Position p) const;
  std::size_t node(std::size_t ix_total, std::size_t iz_total) const;

  void reset();
  /// u^{n+1} = 2u^n - u^{n-1} + (dt^2/m) (L u^n + F^n). If accel is non-empty it
  /// receives (L u^n + F^n)/m on the interior (model) cells.
  void step(std::span<const PointInjection> sources, std::span<float> accel = {});
  double sample(const ReceiverStencil& r) const;
  double max_abs() const;
  /// Discrete energy at the current half step; conserved without PML.
  double energy() const;
  /// Current field value at padded-grid node indices (ix_total, iz_total).
  double value(std::size_t ix_total, std::size_t iz_total) const { return cur_[node(ix_total, iz_total)]; }

  /// Reverse sweep of the exact discrete adjoint. `inject(n, add)` must add the
  /// adjoint sources of time level n through add(node, value). `visit(n, ubar)` is
  /// called with the completed adjoint of level n + 1 for n = nt-2 .. 0, then with
  /// n = -1 for the adjoint of level 0.
  using AdjointInjector = std::function<void(std::size_t, const std::function<void(std::size_t, double)>&)>;
  using AdjointVisitor = std::function<void(long, std::span<const double>)>;
  void adjoint_sweep(std::size_t nt, const AdjointInjector& inject, const AdjointVisitor& visit);

  /// Maps an interior (model) cell to its padded node.
  std::size_t interior_node(std::size_t ix, std::size_t iz) const { return node(ix + pad_, iz + pad_); }
  std::size_t model_nx() const { return mnx_; }
  std::size_t model_nz() const { return mnz_; }
  /// dt^2 / m at a padded node.
  double step_scale(std::size_t node) const { return scale_[node]; }

 private:
  void apply_laplacian(const std::vector<double>& u, std::vector<double>& lap);
  void apply_laplacian_adjoint(const std::vector<double>& gbar, std::vector<double>& ubar);

  std::size_t mnx_, mnz_, pad_, nx_, nz_, stride_;
  double dx_, dt_;
  std::vector<double> m_, scale_;
  std::vector<double> cur_, prev_, next_, lap_;
  // Half-point derivatives and PML memory (forward and adjoint).
  std::vector<double> ex_, ez_, gz_;
  std::vector<double> psi_x_, psi_z_, chi_x_, chi_z_;
  std::vector<double> a_half_x_, b_half_x_, a_int_x_, b_int_x_;
  std::vector<double> a_half_z_, b_half_z_, a_int_z_, b_int_z_;
  std::vector<long> pml_half_x_, pml_int_x_, pml_half_z_, pml_int_z_;
};

struct ForwardResult {
  ShotGather gather;
  /// (L u^n + F^n)/m = d2u/dt2 at steps n = 0..nt-2 when requested.
  std::optional<Wavefield> acceleration;
};

/// Simulates one shot. Throws InstabilityError if the field exceeds 1e10 x the source amplitude.
ForwardResult forward(const VelocityModel& model, const SourceTerm& source,
                      std::span<const Position> receivers, std::size_t nt, double dt,
                      const PmlConfig& pml, bool record_wavefield = false,
                      std::size_t snapshot_stride = 1);

/// Discrete adjoint field q^n (n = 0..nt-1) driven by the residual traces at the gather's
/// receivers, propagated backward in time through the same operator.
Wavefield adjoint(const VelocityModel& model, const ShotGather& residual, std::size_t nt,
                  double dt, const PmlConfig& pml);

/// Adjoint of the source-to-trace map at a single source node: returns F^T r as a trace.
Trace adjoint_at_source(const VelocityModel& model, Position source, const ShotGather& residual,
                        std::size_t nt, double dt, const PmlConfig& pml);

/// dJ/dm for J = 1/2 sum_r int |u - d|^2 dt (trapezoid), given residual = d - u.
/// Zero-lag correlation of the adjoint field with d2u/dt2 over the model cells.
Grid2D image_gradient(const VelocityModel& model, const SourceTerm& source,
                      const ShotGather& residual, std::size_t nt, double dt, const PmlConfig& pml);
/// Same, reusing a stored forward acceleration field.
Grid2D image_gradient(const VelocityModel& model, const Wavefield& acceleration,
                      const ShotGather& residual, std::size_t nt, double dt, const PmlConfig& pml);

}  // namespace rgls
