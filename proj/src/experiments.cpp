#include "rgls/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "rgls/parallel.hpp"
#include "rgls/spline_warp.hpp"

namespace rgls {
namespace {

constexpr double kLensCentre = 1250.0;
constexpr double kLensWidth2 = 1e6;
constexpr double kEdgeOffset = 10.0;

double lens(double x, double z) {
  const double dx = x - kLensCentre, dz = z - kLensCentre;
  return std::exp(-(dx * dx + dz * dz) / kLensWidth2);
}

std::size_t grid_count(double scale) {
  return static_cast<std::size_t>(std::lround(kDomainSize * scale / kGridSpacing)) + 1;
}

std::size_t scaled_count(double full, double scale) {
  return static_cast<std::size_t>(std::ceil(full * scale - 1e-9));
}

std::vector<double> spread(double a, double b, std::size_t n) {
  if (n == 1) return {0.5 * (a + b)};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto half = static_cast<long>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (long i = -half; i <= half; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + half)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Four sides walked clockwise (x right, z down): top, right, bottom, left.
enum Side { top = 0, right = 1, bottom = 2, left = 3 };

Position on_side(int side, double along, double length, double offset) {
  switch (side) {
    case top: return {along, offset};
    case right: return {length - offset, along};
    case bottom: return {length - along, length - offset};
    default: return {offset, length - along};
  }
}

bool is_lens_case(CaseId id) { return id == CaseId::H1 || id == CaseId::H2 || id == CaseId::L1 || id == CaseId::L2; }
bool is_crosshole(CaseId id) { return id == CaseId::H1 || id == CaseId::L1; }

void require_inversion_case(const ScenarioSpec& spec, const char* what) {
  if (!is_inversion_case(spec.case_id))
    throw std::invalid_argument(std::string(what) + ": " + std::string(to_string(spec.case_id)) +
                                " is not an inversion case");
}

}  // namespace

std::string_view to_string(CaseId id) {
  switch (id) {
    case CaseId::H1: return "H1";
    case CaseId::L1: return "L1";
    case CaseId::H2: return "H2";
    case CaseId::L2: return "L2";
    case CaseId::R3: return "R3";
    case CaseId::reg1: return "reg1";
    case CaseId::reg2: return "reg2";
    case CaseId::reg3: return "reg3";
  }
  return "unknown";
}

CaseId parse_case(std::string_view name) {
  for (CaseId id : {CaseId::H1, CaseId::L1, CaseId::H2, CaseId::L2, CaseId::R3, CaseId::reg1,
                    CaseId::reg2, CaseId::reg3})
    if (name == to_string(id)) return id;
  throw std::invalid_argument("unknown case: " + std::string(name));
}

bool is_inversion_case(CaseId id) { return is_lens_case(id) || id == CaseId::R3; }

void ScenarioSpec::validate() const {
  if (!(scale > 0.0 && scale <= 1.0)) throw std::invalid_argument("ScenarioSpec: scale must lie in (0, 1]");
  if (noise_sigma < 0.0) throw std::invalid_argument("ScenarioSpec: noise_sigma must be >= 0");
  if (!(f_source > 0.0)) throw std::invalid_argument("ScenarioSpec: f_source must be positive");
  if (!(vr_kernel_cells > 0.0) || vr_field_std < 0.0)
    throw std::invalid_argument("ScenarioSpec: bad V_R noise settings");
  if (is_inversion_case(case_id) && grid_count(scale) < 16)
    throw std::invalid_argument("ScenarioSpec: scale too small for a 16-cell grid");
}

double v_high(double x, double z) { return 5200.0 + 900.0 * lens(x, z); }
double v_low(double x, double z) { return 5500.0 - 900.0 * lens(x, z); }
double v_random_background(double x, double z) { return 5000.0 + 900.0 * lens(x, z); }

std::vector<double> smoothed_noise(std::size_t nx, std::size_t nz, double kernel_cells,
                                   double std_dev, std::uint64_t seed) {
  const auto k = gaussian_kernel(kernel_cells);
  const std::size_t h = k.size() / 2;
  const std::size_t px = nx + 2 * h, pz = nz + 2 * h;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> raw(px * pz);
  for (auto& v : raw) v = normal(rng);

  // Separable valid-mode convolution: z first, then x.
  std::vector<double> tmp(px * nz, 0.0);
  for (std::size_t i = 0; i < px; ++i)
    for (std::size_t j = 0; j < nz; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < k.size(); ++q) s += k[q] * raw[i * pz + j + q];
      tmp[i * nz + j] = s;
    }
  double k2 = 0.0;
  for (double v : k) k2 += v * v;
  const double gain = std_dev / k2;  // field variance is (sum k^2)^2 per unit normal
  std::vector<double> out(nx * nz, 0.0);
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < nz; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < k.size(); ++q) s += k[q] * tmp[(i + q) * nz + j];
      out[i * nz + j] = gain * s;
    }
  return out;
}

VelocityModel build_model(const ScenarioSpec& spec) {
  spec.validate();
  require_inversion_case(spec, "build_model");
  const std::size_t n = grid_count(spec.scale);
  std::vector<double> v(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = kGridSpacing * static_cast<double>(i) / spec.scale;
      const double z = kGridSpacing * static_cast<double>(j) / spec.scale;
      switch (spec.case_id) {
        case CaseId::H1:
        case CaseId::H2: v[i * n + j] = v_high(x, z); break;
        case CaseId::L1:
        case CaseId::L2: v[i * n + j] = v_low(x, z); break;
        default: v[i * n + j] = v_random_background(x, z); break;
      }
    }
  if (spec.case_id == CaseId::R3) {
    const auto noise = smoothed_noise(n, n, spec.vr_kernel_cells, spec.vr_field_std, spec.rng_seed);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += noise[i];
  }
  return VelocityModel(n, n, kGridSpacing, Position{}, std::move(v));
}

VelocityModel build_initial_model(const ScenarioSpec& spec) {
  spec.validate();
  require_inversion_case(spec, "build_initial_model");
  const std::size_t n = grid_count(spec.scale);
  const bool low = spec.case_id == CaseId::L1 || spec.case_id == CaseId::L2;
  return VelocityModel::constant(n, n, kGridSpacing, low ? 6000.0 : 5100.0);
}

AcquisitionGeometry build_geometry(const ScenarioSpec& spec) {
  spec.validate();
  require_inversion_case(spec, "build_geometry");
  const double s = spec.scale;
  const double length = kGridSpacing * static_cast<double>(grid_count(s) - 1);
  const double off = kEdgeOffset * s;
  AcquisitionGeometry g;
  if (is_crosshole(spec.case_id)) {
    std::vector<Position> rec;
    for (double z : spread(5.0 * s, length - 5.0 * s, scaled_count(499.0, s)))
      rec.push_back({length - off, z});
    for (double z : spread(25.0 * s, length - 25.0 * s, scaled_count(49.0, s)))
      g.shots.push_back({{off, z}, rec});
    return g;
  }
  const std::size_t per_side_rec = scaled_count(static_cast<double>(scaled_count(750.0, s)) / 3.0, 1.0);
  const auto src_along = spread(25.0 * s, length - 25.0 * s, scaled_count(49.0, s));
  const auto rec_along = spread(5.0 * s, length - 5.0 * s, per_side_rec);
  for (int side : {left, top, right, bottom}) {
    std::vector<Position> rec;
    for (int k = 1; k <= 3; ++k)
      for (double a : rec_along) rec.push_back(on_side((side + k) % 4, a, length, off));
    for (double a : src_along) g.shots.push_back({on_side(side, a, length, off), rec});
  }
  return g;
}

SamplingPlan sampling_plan(const ScenarioSpec& spec) {
  const VelocityModel truth = build_model(spec);
  const VelocityModel init = build_initial_model(spec);
  const double v_fast = 1.2 * std::max(truth.v_max(), init.v_max());
  const double v_slow = std::min(truth.v_min(), init.v_min());
  SamplingPlan p;
  p.dt = spec.cfl_safety * kGridSpacing / (v_fast * std::sqrt(2.0) * kStencilConstant);
  p.wavelet_delay = 1.5 / spec.f_source;
  const double length = kGridSpacing * static_cast<double>(truth.nx() - 1);
  const double record = std::sqrt(2.0) * length / v_slow + 2.0 * (2.0 * p.wavelet_delay);
  p.nt = static_cast<std::size_t>(std::ceil(record / p.dt)) + 1;
  return p;
}

SourceTerm make_source(Position p, double f_source, const SamplingPlan& plan) {
  return SourceTerm{p, ricker(f_source, plan.dt, plan.dt * static_cast<double>(plan.nt - 1), plan.wavelet_delay)};
}

Survey make_observed_survey(const VelocityModel& model, const AcquisitionGeometry& geometry,
                            double f_source, const SamplingPlan& plan, const PmlConfig& pml,
                            std::size_t workers) {
  Survey out(geometry.shots.size());
  parallel_for(geometry.shots.size(), workers, [&](std::size_t s) {
    const auto& shot = geometry.shots[s];
    out[s] = forward(model, make_source(shot.source, f_source, plan), shot.receivers, plan.nt,
                     plan.dt, pml)
                 .gather;
  });
  return out;
}

PmlConfig scenario_pml(const ScenarioSpec& spec) {
  const VelocityModel truth = build_model(spec);
  const VelocityModel init = build_initial_model(spec);
  return PmlConfig::tuned(std::max(truth.v_max(), init.v_max()), kGridSpacing);
}

LayeredModel LayeredModel::standard() {
  LayeredModel m;
  for (int i = 0; i < 12; ++i) m.depths.push_back(150.0 + 240.0 * i);
  m.velocities = {1500, 1700, 1650, 2000, 2150, 2050, 2500, 2700, 2550, 3000, 3300, 3150, 3600};
  return m;
}

LayeredModel LayeredModel::slowed(double k) const {
  LayeredModel out = *this;
  for (std::size_t i = 0; i < velocities.size(); ++i) {
    const double top_z = i == 0 ? 0.0 : depths[i - 1];
    const double bottom_z = i < depths.size() ? depths[i] : top_z + 250.0;
    out.velocities[i] -= k * 0.5 * (top_z + bottom_z);
  }
  return out;
}

std::vector<double> LayeredModel::two_way_times() const {
  std::vector<double> t;
  double acc = 0.0, z = 0.0;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    acc += 2.0 * (depths[i] - z) / velocities[i];
    z = depths[i];
    t.push_back(acc);
  }
  return t;
}

Trace layered_trace(const LayeredModel& model, double f_source, double dt, std::size_t n) {
  const auto times = model.two_way_times();
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double v0 = model.velocities[i], v1 = model.velocities[i + 1];
    const double amp = (v1 - v0) / (v1 + v0);
    for (std::size_t j = 0; j < n; ++j) s[j] += amp * ricker_value(f_source, dt * static_cast<double>(j) - times[i]);
  }
  double peak = 0.0;
  for (double v : s) peak = std::max(peak, std::abs(v));
  for (auto& v : s) v /= peak;
  return Trace(std::move(s), dt, 0.0);
}

double reference_warp(double t, double t_c) {
  const double x = t / t_c - 1.0;
  return t + 0.15 * std::exp(-8.0 * x * x);
}

RegistrationPair build_registration_pair(const ScenarioSpec& spec) {
  spec.validate();
  if (is_inversion_case(spec.case_id))
    throw std::invalid_argument("build_registration_pair: " + std::string(to_string(spec.case_id)) +
                                " is not a registration case");
  constexpr std::size_t n = 751;  // 3 s at 4 ms
  const double f = kRegistrationFrequency;
  const LayeredModel layers = LayeredModel::standard();
  RegistrationPair out;
  out.f_source = f;
  out.u = layered_trace(layers, f, kRegistrationDt, n);
  if (spec.case_id == CaseId::reg3) {
    // Observed from the reference layers, prediction from the slowed copy.
    out.d = out.u;
    out.u = layered_trace(layers.slowed(0.15), f, kRegistrationDt, n);
    return out;
  }
  const double t_c = 0.5 * out.u.t_end();
  std::vector<double> p(n), a(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) p[i] = reference_warp(out.u.time(i), t_c);
  out.d = apply_warp(out.u, p, a, 1.0);
  out.truth = p;
  if (spec.case_id == CaseId::reg2 && spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.rng_seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& v : out.d.samples) v += noise(rng);
    for (auto& v : out.u.samples) v += noise(rng);
  }
  return out;
}

nlohmann::json scenario_manifest(const ScenarioSpec& spec) {
  spec.validate();
  nlohmann::json j{{"case", std::string(to_string(spec.case_id))},
                   {"scale", spec.scale},
                   {"seed", spec.rng_seed},
                   {"f_source", spec.f_source}};
  if (!is_inversion_case(spec.case_id)) {
    j["f_source"] = kRegistrationFrequency;
    j["dt"] = kRegistrationDt;
    j["nt"] = 751;
    j["noise_sigma"] = spec.case_id == CaseId::reg2 ? spec.noise_sigma : 0.0;
    j["warp"] = "t + 0.15 exp(-8 (t / T_c - 1)^2), T_c = half the record";
    return j;
  }
  const VelocityModel truth = build_model(spec);
  const VelocityModel init = build_initial_model(spec);
  const AcquisitionGeometry g = build_geometry(spec);
  const SamplingPlan plan = sampling_plan(spec);
  const PmlConfig pml = scenario_pml(spec);
  j["nx"] = truth.nx();
  j["nz"] = truth.nz();
  j["dx"] = truth.dx();
  j["shots"] = g.shots.size();
  j["receivers_per_shot"] = g.shots.front().receivers.size();
  j["geometry"] = is_crosshole(spec.case_id) ? "crosshole" : "nearly-complete";
  j["dt"] = plan.dt;
  j["nt"] = plan.nt;
  j["wavelet_delay"] = plan.wavelet_delay;
  j["cfl_safety"] = spec.cfl_safety;
  j["initial_velocity"] = init.values().front();
  j["pml"] = {{"width", pml.width}, {"max_damping", pml.max_damping}, {"profile_power", pml.profile_power}};
  if (spec.case_id == CaseId::R3)
    j["vr_noise"] = {{"kernel_cells", spec.vr_kernel_cells}, {"field_std", spec.vr_field_std}};
  return j;
}

}  // namespace rgls
