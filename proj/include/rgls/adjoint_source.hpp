#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "rgls/registration.hpp"
#include "rgls/survey.hpp"

namespace rgls {

enum class ResidualMode { ls, rgls };

std::string_view to_string(ResidualMode mode);
/// "ls" or "rgls"; throws std::invalid_argument otherwise.
ResidualMode parse_residual_mode(std::string_view name);

struct AdjointSourceSpec {
  ResidualMode mode = ResidualMode::ls;
  /// Fraction of the fitted warp applied to the prediction, in (0, 1].
  double alpha = 0.1;
  SweepSchedule sched;
  LfaKind lfa_kind = LfaKind::hilbert_sum;
  /// Register every stride-th receiver, interpolate warps in between.
  std::size_t stride = 50;

  /// rgls mode with the geometric sweep for a source of centre frequency f_source.
  static AdjointSourceSpec rgls_default(double f_source);
  /// Throws std::invalid_argument for alpha outside (0, 1] in rgls mode or stride 0.
  void validate() const;
};

/// obs - pred, trace by trace.
ShotGather ls_residual(const ShotGather& obs, const ShotGather& pred);

struct RglsResidual {
  /// d~ - u, with d~ = A^alpha u((1 - alpha) t + alpha p(t)).
  ShotGather residual;
  std::vector<WarpModel> warps;
  /// false where registration failed and the trace fell back to obs - pred.
  std::vector<bool> registered;
  std::size_t fallbacks = 0;
  /// Traces where A hit the amplitude floor somewhere.
  std::size_t clamped = 0;
};

/// Registers obs against pred (each trace pair scaled by 1 / max|pred|) and moves the
/// prediction a fraction alpha along the fitted warp.
RglsResidual rgls_residual(const ShotGather& obs, const ShotGather& pred,
                           const AdjointSourceSpec& spec, std::size_t workers = 1);

/// Dispatches on spec.mode.
ShotGather adjoint_residual(const ShotGather& obs, const ShotGather& pred,
                            const AdjointSourceSpec& spec, std::size_t workers = 1);

}  // namespace rgls
