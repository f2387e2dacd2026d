#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "rgls/signal.hpp"
#include "rgls/spline_warp.hpp"
#include "rgls/survey.hpp"

namespace rgls {

/// Frequency continuation for registration: bands are swept low to high,
/// each solved by damped Newton iterations warm-started from the previous band.
struct SweepSchedule {
  std::vector<FrequencyBand> bands;
  std::size_t newton_max_iter = 20;
  double newton_tol = 1e-6;
  /// lambda in (lambda/2) * integral |p - t|^2.
  double penalty_weight = 1.0;
  std::size_t n_intervals = 4;

  /// n_bands bands with omega_max geometrically spaced from f_source/16 to f_source/2.
  static SweepSchedule geometric(double f_source, std::size_t n_bands = 8);
  /// Throws std::invalid_argument if bands are empty or not strictly increasing.
  void validate() const;
};

struct ObjectiveRecord {
  std::size_t band = 0;
  double value = 0.0;
};

struct RegistrationResult {
  WarpModel warp;
  /// (band, W_LFA) at the start of each band and after every accepted Newton iteration.
  std::vector<ObjectiveRecord> objective_history;
  bool converged = false;
  bool fold_warning = false;
  /// A Newton solve hit the damping cap; the warp is the last good iterate.
  bool failed = false;
  /// Data term of the last band at the identity warp and at the returned warp.
  double initial_misfit = 0.0;
  double final_misfit = 0.0;
};

struct WarpGradient {
  Eigen::VectorXd rho;
  Eigen::VectorXd amp;
};

struct WarpHessian {
  Eigen::MatrixXd rho;
  Eigen::MatrixXd amp;
};

/// C^2 quintic Hermite interpolant of a band-limited signal built from its spectral
/// value, first and second derivative samples. Zero outside the sampled span.
class SmoothSignal {
 public:
  SmoothSignal(BandlimitedSignal s, double dt, double t0);

  struct Sample {
    double value = 0.0;
    double first = 0.0;
    double second = 0.0;
  };
  Sample operator()(double t) const;

 private:
  BandlimitedSignal s_;
  double dt_;
  double t0_;
};

/// W_LFA restricted to one band: 1/2 int |D_k - A U_k(p)|^2 + lambda/2 int |p - t|^2,
/// integrals by the trapezoidal rule on the trace grid. D and U are LFA traces.
class BandObjective {
 public:
  BandObjective(const Trace& lfa_d, const Trace& lfa_u, const FrequencyBand& band,
                double penalty_weight, const SplineBasis& basis);

  double value(const WarpModel& w) const;
  double data_term(const WarpModel& w) const;
  WarpGradient gradient(const WarpModel& w) const;
  WarpHessian hessian(const WarpModel& w) const;
  /// Sum of trapezoid-integrated D_k^2 and U_k^2.
  double power() const { return power_; }

 private:
  struct Terms {
    double data = 0.0;
    double penalty = 0.0;
  };
  Terms terms(const WarpModel& w) const;

  std::vector<double> times_;
  std::vector<double> weights_;
  std::vector<double> d_;
  SmoothSignal u_;
  SampledBasis basis_;
  double penalty_weight_;
  double power_ = 0.0;
};

/// Objective, gradient and Hessian of W_LFA for one band, computing LFA and the
/// low-pass internally. Throws MismatchError unless d and u share dt and length.
double objective(const Trace& d, const Trace& u, const WarpModel& w, const FrequencyBand& band,
                 LfaKind kind, double penalty_weight);
WarpGradient gradient(const Trace& d, const Trace& u, const WarpModel& w,
                      const FrequencyBand& band, LfaKind kind, double penalty_weight);
WarpHessian hessian(const Trace& d, const Trace& u, const WarpModel& w, const FrequencyBand& band,
                    LfaKind kind, double penalty_weight);

struct NewtonOutcome {
  WarpModel warp;
  bool converged = false;
};

/// Alternating damped Newton on rho then amp. Each step adds mu*I (mu = 0, then
/// growing by 10x) until the system is positive definite and the objective does not
/// increase. Throws SingularSystemError if mu passes its cap without ever reaching
/// positive definiteness.
NewtonOutcome newton_solve(const BandObjective& objective, WarpModel w0,
                           const SweepSchedule& sched, std::size_t band_index = 0,
                           std::vector<ObjectiveRecord>* history = nullptr);
WarpModel newton_solve(const Trace& d, const Trace& u, WarpModel w0, const FrequencyBand& band,
                       LfaKind kind, const SweepSchedule& sched);

/// Full frequency sweep starting from p(t) = t, A(t) = 1.
RegistrationResult register_traces(const Trace& d, const Trace& u, const SweepSchedule& sched,
                                   LfaKind kind);

/// Raw-trace registration error 1/2 int |d - A u(p)|^2 dt.
double registration_misfit(const Trace& d, const Trace& u, const WarpModel& w);

struct GatherRegistration {
  std::vector<WarpModel> warps;
  /// Per trace: false if the registration used for it (direct or interpolated) failed.
  std::vector<bool> ok;
  /// Receiver indices that were registered directly.
  std::vector<std::size_t> registered;
};

/// Registers every stride-th trace and linearly interpolates rho and amp across
/// receiver index in between; traces past the last registered one copy it.
GatherRegistration register_gather(const ShotGather& obs, const ShotGather& pred,
                                   const SweepSchedule& sched, LfaKind kind,
                                   std::size_t stride = 50, std::size_t workers = 1);

}  // namespace rgls
