#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rgls/signal.hpp"
#include "rgls/survey.hpp"
#include "rgls/wave_solver.hpp"

namespace rgls {

enum class CaseId { H1, L1, H2, L2, R3, reg1, reg2, reg3 };

std::string_view to_string(CaseId id);
/// Throws std::invalid_argument("unknown case: ...") for anything else.
CaseId parse_case(std::string_view name);
bool is_inversion_case(CaseId id);

struct ScenarioSpec {
  CaseId case_id = CaseId::H2;
  /// 1 is the full 2500 m domain; the grid spacing stays 5 m at every scale.
  double scale = 1.0;
  std::uint64_t rng_seed = 0;
  /// Trace noise of reg2.
  double noise_sigma = 0.075;
  /// Source centre frequency (Hz); the wavelength is kept across scales.
  double f_source = 50.0;
  /// Random part of V_R: Gaussian kernel std in cells and field std in m/s.
  double vr_kernel_cells = 10.0;
  double vr_field_std = 150.0;
  double cfl_safety = kDefaultCfl;

  /// Throws std::invalid_argument for scale outside (0, 1] or negative noise settings.
  void validate() const;
};

inline constexpr double kDomainSize = 2500.0;
inline constexpr double kGridSpacing = 5.0;

/// Lens models in full-scale coordinates (meters).
double v_high(double x, double z);
double v_low(double x, double z);
double v_random_background(double x, double z);

/// Gaussian-smoothed unit normals on an nx x nz grid, scaled so the field std is `std_dev`.
std::vector<double> smoothed_noise(std::size_t nx, std::size_t nz, double kernel_cells,
                                   double std_dev, std::uint64_t seed);

/// True model of an inversion case. Lens coordinates scale with the domain.
VelocityModel build_model(const ScenarioSpec& spec);
/// Constant starting model: 5100 m/s for H and R cases, 6000 m/s for L cases.
VelocityModel build_initial_model(const ScenarioSpec& spec);
AcquisitionGeometry build_geometry(const ScenarioSpec& spec);

struct SamplingPlan {
  double dt = 0.0;
  std::size_t nt = 0;
  /// Ricker delay; the wavelet spans 2 x delay.
  double wavelet_delay = 0.0;
};

/// dt from the stability limit of 1.2 x the fastest velocity in play; record long enough
/// for the domain diagonal at the slowest velocity plus two wavelet durations.
SamplingPlan sampling_plan(const ScenarioSpec& spec);
SourceTerm make_source(Position p, double f_source, const SamplingPlan& plan);

Survey make_observed_survey(const VelocityModel& model, const AcquisitionGeometry& geometry,
                            double f_source, const SamplingPlan& plan, const PmlConfig& pml,
                            std::size_t workers = 1);

/// PML tuned to the default width at the fastest model velocity.
PmlConfig scenario_pml(const ScenarioSpec& spec);

struct RegistrationPair {
  Trace d;
  Trace u;
  /// p*(t) on the trace grid (reg1, reg2 only).
  std::optional<std::vector<double>> truth;
  double f_source = 0.0;
};

/// Layered 1D stand-in for the registration examples.
struct LayeredModel {
  std::vector<double> depths;      // interface depths (m)
  std::vector<double> velocities;  // one more than depths
  static LayeredModel standard();
  /// v - k z with z the layer midpoint (the half-space counts as 250 m thick).
  LayeredModel slowed(double k) const;
  /// Two-way vertical times of the interfaces.
  std::vector<double> two_way_times() const;
};

inline constexpr double kRegistrationFrequency = 15.0;
inline constexpr double kRegistrationDt = 0.004;

/// Normal-incidence primaries (no spreading), normalized to peak 1.
Trace layered_trace(const LayeredModel& model, double f_source, double dt, std::size_t n);
/// p*(t) = t + 0.15 exp(-8 (t / T_c - 1)^2), T_c half the recording time.
double reference_warp(double t, double t_c);
RegistrationPair build_registration_pair(const ScenarioSpec& spec);

/// Every resolved parameter of a scenario.
nlohmann::json scenario_manifest(const ScenarioSpec& spec);

}  // namespace rgls
