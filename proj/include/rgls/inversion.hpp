#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgls/adjoint_source.hpp"
#include "rgls/survey.hpp"
#include "rgls/wave_solver.hpp"

namespace rgls {

enum class StepRule { fixed_cap, backtracking };

std::string_view to_string(StepRule rule);
StepRule parse_step_rule(std::string_view name);

struct ConvergenceRecord {
  std::size_t iter = 0;
  ResidualMode mode = ResidualMode::ls;
  /// Least-squares misfit of the model at this iteration, whatever the mode.
  double J = 0.0;
  /// RMS(V_k - V_true); NaN without a true model.
  double model_rms = 0.0;
  /// Largest |dv| applied by the update leaving this iterate (0 for the last record).
  double step_size = 0.0;
};

struct ConvergenceLog {
  std::vector<ConvergenceRecord> records;
  /// Iteration at which the rgls -> ls switch took effect, if it did.
  std::optional<std::size_t> switch_iter;
  std::string stop_reason;

  /// iter,mode,J,model_rms,step_size
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct IterationDump {
  std::size_t iter = 0;
  std::size_t shot = 0;
  const ShotGather* predicted = nullptr;
  const ShotGather* residual = nullptr;
  /// Null in ls mode.
  const RglsResidual* rgls = nullptr;
};

struct InversionConfig {
  std::size_t max_iter = 150;
  AdjointSourceSpec adjoint_spec;
  StepRule step_rule = StepRule::fixed_cap;
  /// Largest |dv| (m/s) of one update.
  double step_cap = 50.0;
  bool switch_to_ls = false;
  std::size_t switch_patience = 5;
  double switch_rel_tol = 1e-3;
  /// (0, 0) means 0.5 x min and 1.5 x max over the initial and true models, with the
  /// upper bound lowered to the CFL limit of the data time step.
  std::pair<double, double> v_bounds{0.0, 0.0};
  PmlConfig pml;
  std::size_t workers = 1;
  /// Gradient zeroed within this many cells of any source or receiver.
  double mask_radius_cells = 3.0;
  std::size_t max_backtracks = 8;
  /// Stop when |g| < stationarity_tol * |m|.
  double stationarity_tol = 1e-8;

  std::function<void(const ConvergenceRecord&, const VelocityModel&)> on_iteration;
  std::function<void(const IterationDump&)> on_adjoint;

  /// Throws std::invalid_argument on max_iter 0, step_cap <= 0 or inverted bounds.
  void validate() const;
};

struct InversionResult {
  VelocityModel model;
  ConvergenceLog log;
};

/// J = 1/2 sum over shots and receivers of the trapezoid integral of |u - d|^2.
double misfit(const Survey& obs, const Survey& pred);
double misfit(const ShotGather& obs, const ShotGather& pred);

/// RMS of the pointwise velocity difference over the model grid.
double model_rms(const VelocityModel& a, const VelocityModel& b);

/// Forward-models every shot of the geometry with the survey's wavelets and sampling.
Survey simulate(const VelocityModel& model, const Survey& like, const PmlConfig& pml,
                std::size_t workers = 1);

/// Steepest descent in squared slowness. Each iteration models all shots, builds LS or
/// RGLS adjoint sources, sums the shot gradients in shot order, masks them near the
/// acquisition, and scales the step so the largest velocity change equals step_cap.
/// Throws NonFiniteError if J stops being finite.
InversionResult invert(const Survey& obs, const AcquisitionGeometry& geometry,
                       const VelocityModel& initial, const InversionConfig& cfg,
                       const std::optional<VelocityModel>& true_model = std::nullopt);

/// True when the last entry of J sits less than rel_tol (relative) below the entry
/// `patience` places earlier. A rise counts as a stall.
bool misfit_stalled(std::span<const double> J, std::size_t patience, double rel_tol);

/// Cells farther than radius_cells from every source and receiver.
std::vector<bool> acquisition_mask(const VelocityModel& model, const AcquisitionGeometry& geometry,
                                   double radius_cells);

}  // namespace rgls
