#include "rgls/inversion.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rgls/errors.hpp"
#include "rgls/parallel.hpp"

namespace rgls {
namespace {

struct ShotWork {
  double J = 0.0;
  Grid2D gradient;
  std::size_t fallbacks = 0;
  std::size_t clamped = 0;
};

std::pair<double, double> resolve_bounds(const InversionConfig& cfg, const VelocityModel& initial,
                                         const std::optional<VelocityModel>& truth, double dt) {
  if (cfg.v_bounds.first > 0.0 || cfg.v_bounds.second > 0.0) return cfg.v_bounds;
  double lo = initial.v_min(), hi = initial.v_max();
  if (truth) {
    lo = std::min(lo, truth->v_min());
    hi = std::max(hi, truth->v_max());
  }
  // Fastest velocity that keeps this dt within the stability limit.
  const double v_cfl = 0.99 * initial.dx() / (dt * std::sqrt(2.0) * kStencilConstant);
  return {0.5 * lo, std::min(1.5 * hi, v_cfl)};
}

VelocityModel with_velocity(const VelocityModel& like, std::vector<double> v) {
  return VelocityModel(like.nx(), like.nz(), like.dx(), like.origin(), std::move(v));
}

double l2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

void check_geometry(const Survey& obs, const AcquisitionGeometry& geometry) {
  if (obs.empty()) throw std::invalid_argument("invert: empty survey");
  if (geometry.shots.size() != obs.size())
    throw MismatchError("invert: geometry and survey have different shot counts");
  for (std::size_t s = 0; s < obs.size(); ++s) {
    const auto& g = geometry.shots[s];
    const auto& o = obs[s];
    if (g.receivers.size() != o.receiver_positions.size() || g.source.x != o.source.position.x ||
        g.source.z != o.source.position.z)
      throw MismatchError("invert: geometry does not match the survey");
    if (o.dt != obs[0].dt || o.nt != obs[0].nt) throw MismatchError("invert: shots differ in sampling");
  }
}

}  // namespace

std::string_view to_string(StepRule rule) {
  return rule == StepRule::fixed_cap ? "fixed_cap" : "backtracking";
}

StepRule parse_step_rule(std::string_view name) {
  if (name == "fixed_cap") return StepRule::fixed_cap;
  if (name == "backtracking") return StepRule::backtracking;
  throw std::invalid_argument("unknown step rule: " + std::string(name));
}

std::string ConvergenceLog::to_csv() const {
  std::ostringstream os;
  os << "iter,mode,J,model_rms,step_size\n";
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g\n", r.iter,
                  std::string(to_string(r.mode)).c_str(), r.J, r.model_rms, r.step_size);
    os << buf;
  }
  return os.str();
}

void ConvergenceLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  f << to_csv();
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

void InversionConfig::validate() const {
  if (max_iter == 0) throw std::invalid_argument("InversionConfig: max_iter must be >= 1");
  if (!(step_cap > 0.0)) throw std::invalid_argument("InversionConfig: step_cap must be positive");
  const bool unset = v_bounds.first == 0.0 && v_bounds.second == 0.0;
  if (!unset && !(v_bounds.first > 0.0 && v_bounds.first < v_bounds.second))
    throw std::invalid_argument("InversionConfig: v_bounds must satisfy 0 < min < max");
  if (switch_to_ls && switch_patience == 0)
    throw std::invalid_argument("InversionConfig: switch_patience must be >= 1");
  adjoint_spec.validate();
  pml.validate();
}

double misfit(const ShotGather& obs, const ShotGather& pred) {
  check_aligned(obs, pred);
  double J = 0.0;
  std::vector<double> sq;
  for (std::size_t r = 0; r < obs.size(); ++r) {
    const auto& d = obs.traces[r].samples;
    const auto& u = pred.traces[r].samples;
    sq.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) sq[i] = (u[i] - d[i]) * (u[i] - d[i]);
    J += trapezoid(sq, obs.traces[r].dt);
  }
  return 0.5 * J;
}

double misfit(const Survey& obs, const Survey& pred) {
  check_aligned(obs, pred);
  double J = 0.0;
  for (std::size_t s = 0; s < obs.size(); ++s) J += misfit(obs[s], pred[s]);
  return J;
}

double model_rms(const VelocityModel& a, const VelocityModel& b) {
  if (!a.same_grid(b)) throw MismatchError("model_rms: models are on different grids");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.values().size()));
}

Survey simulate(const VelocityModel& model, const Survey& like, const PmlConfig& pml,
                std::size_t workers) {
  Survey out(like.size());
  parallel_for(like.size(), workers, [&](std::size_t s) {
    const auto& g = like[s];
    out[s] = forward(model, g.source, g.receiver_positions, g.nt, g.dt, pml).gather;
  });
  return out;
}

bool misfit_stalled(std::span<const double> J, std::size_t patience, double rel_tol) {
  if (patience == 0 || J.size() <= patience) return false;
  const double now = J.back();
  const double before = J[J.size() - 1 - patience];
  return before - now < rel_tol * before;
}

std::vector<bool> acquisition_mask(const VelocityModel& model, const AcquisitionGeometry& geometry,
                                   double radius_cells) {
  std::vector<bool> keep(model.nx() * model.nz(), true);
  const auto nx = static_cast<long>(model.nx());
  const auto nz = static_cast<long>(model.nz());
  const auto reach = static_cast<long>(std::ceil(radius_cells));
  auto blank = [&](Position p) {
    const double gx = model.grid_x(p.x), gz = model.grid_z(p.z);
    const auto cx = static_cast<long>(std::lround(gx)), cz = static_cast<long>(std::lround(gz));
    for (long i = std::max(0L, cx - reach - 1); i <= std::min(nx - 1, cx + reach + 1); ++i)
      for (long k = std::max(0L, cz - reach - 1); k <= std::min(nz - 1, cz + reach + 1); ++k)
        if (std::hypot(static_cast<double>(i) - gx, static_cast<double>(k) - gz) <= radius_cells)
          keep[static_cast<std::size_t>(i * nz + k)] = false;
  };
  for (const auto& shot : geometry.shots) {
    blank(shot.source);
    for (const auto& r : shot.receivers) blank(r);
  }
  return keep;
}

InversionResult invert(const Survey& obs, const AcquisitionGeometry& geometry,
                       const VelocityModel& initial, const InversionConfig& cfg,
                       const std::optional<VelocityModel>& true_model) {
  cfg.validate();
  check_geometry(obs, geometry);
  if (true_model && !true_model->same_grid(initial))
    throw MismatchError("invert: true model is on a different grid");
  const double dt = obs[0].dt;
  const std::size_t nt = obs[0].nt;
  const auto [v_lo, v_hi] = resolve_bounds(cfg, initial, true_model, dt);
  const auto keep = acquisition_mask(initial, geometry, cfg.mask_radius_cells);
  spdlog::info("invert: {} shots, nt {}, dt {:.4e}, v bounds [{:.1f}, {:.1f}], mode {}", obs.size(),
               nt, dt, v_lo, v_hi, to_string(cfg.adjoint_spec.mode));

  InversionResult res{initial, {}};
  VelocityModel& v = res.model;
  ConvergenceLog& log = res.log;
  AdjointSourceSpec spec = cfg.adjoint_spec;
  const std::size_t inner_workers = obs.size() >= cfg.workers ? 1 : cfg.workers;

  auto rms_of = [&](const VelocityModel& m) {
    return true_model ? model_rms(m, *true_model) : std::numeric_limits<double>::quiet_NaN();
  };
  auto total_misfit = [&](const VelocityModel& m) {
    const Survey pred = simulate(m, obs, cfg.pml, cfg.workers);
    double J = 0.0;
    for (std::size_t s = 0; s < obs.size(); ++s) J += misfit(obs[s], pred[s]);
    return J;
  };
  auto finish = [&](ConvergenceRecord rec, const char* reason) {
    log.records.push_back(rec);
    if (cfg.on_iteration) cfg.on_iteration(rec, v);
    log.stop_reason = reason;
  };

  for (std::size_t k = 0;; ++k) {
    if (k == cfg.max_iter) {
      const double J = total_misfit(v);
      if (!std::isfinite(J)) throw NonFiniteError("invert: misfit is not finite at iteration " + std::to_string(k));
      finish({k, spec.mode, J, rms_of(v), 0.0}, "max_iter");
      break;
    }

    if (spec.mode == ResidualMode::rgls && cfg.switch_to_ls) {
      std::vector<double> history(log.records.size());
      for (std::size_t i = 0; i < history.size(); ++i) history[i] = log.records[i].J;
      if (misfit_stalled(history, cfg.switch_patience, cfg.switch_rel_tol)) {
        spec.mode = ResidualMode::ls;
        log.switch_iter = k;
        spdlog::info("invert: misfit stalled, switching from rgls to ls at iteration {}", k);
      }
    }

    std::vector<ShotWork> work(obs.size());
    parallel_for(obs.size(), cfg.workers, [&](std::size_t s) {
      const auto& g = obs[s];
      auto fw = forward(v, g.source, g.receiver_positions, nt, dt, cfg.pml, true);
      work[s].J = misfit(g, fw.gather);
      ShotGather residual;
      std::optional<RglsResidual> rg;
      if (spec.mode == ResidualMode::rgls) {
        rg = rgls_residual(g, fw.gather, spec, inner_workers);
        residual = rg->residual;
        work[s].fallbacks = rg->fallbacks;
        work[s].clamped = rg->clamped;
      } else {
        residual = ls_residual(g, fw.gather);
      }
      if (cfg.on_adjoint) cfg.on_adjoint({k, s, &fw.gather, &residual, rg ? &*rg : nullptr});
      work[s].gradient = image_gradient(v, *fw.acceleration, residual, nt, dt, cfg.pml);
    });

    double J = 0.0;
    std::vector<double> g(v.values().size(), 0.0);
    std::size_t fallbacks = 0, clamped = 0;
    for (const auto& w : work) {
      J += w.J;
      fallbacks += w.fallbacks;
      clamped += w.clamped;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += w.gradient.data[i];
    }
    if (!std::isfinite(J)) throw NonFiniteError("invert: misfit is not finite at iteration " + std::to_string(k));
    if (fallbacks > 0 || clamped > 0)
      spdlog::warn("invert: iter {}: {} traces fell back to obs - pred, {} hit the amplitude floor", k, fallbacks,
                   clamped);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!keep[i]) g[i] = 0.0;

    ConvergenceRecord rec{k, spec.mode, J, rms_of(v), 0.0};
    const auto m = v.squared_slowness();
    if (l2(g) < cfg.stationarity_tol * l2(m)) {
      finish(rec, "stationary");
      break;
    }

    // Linearized dv = v^3 / 2 * tau * g; tau makes the largest one equal step_cap.
    double peak = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double vi = v.values()[i];
      peak = std::max(peak, 0.5 * vi * vi * vi * std::abs(g[i]));
    }
    double tau = cfg.step_cap / peak;
    auto trial_model = [&](double t) {
      std::vector<double> vn(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double mi = m[i] - t * g[i];
        vn[i] = mi > 0.0 ? std::clamp(1.0 / std::sqrt(mi), v_lo, v_hi) : v_hi;
      }
      return with_velocity(v, std::move(vn));
    };
    VelocityModel next = trial_model(tau);
    if (cfg.step_rule == StepRule::backtracking && spec.mode == ResidualMode::ls) {
      std::size_t tries = 0;
      while (!(total_misfit(next) < J)) {
        if (++tries > cfg.max_backtracks) break;
        tau *= 0.5;
        next = trial_model(tau);
      }
      if (tries > cfg.max_backtracks) {
        finish(rec, "line_search");
        break;
      }
    }
    for (std::size_t i = 0; i < m.size(); ++i)
      rec.step_size = std::max(rec.step_size, std::abs(next.values()[i] - v.values()[i]));
    log.records.push_back(rec);
    if (cfg.on_iteration) cfg.on_iteration(rec, v);
    spdlog::debug("invert: iter {} mode {} J {:.6e} rms {:.3f} step {:.3f}", k, to_string(rec.mode), J,
                  rec.model_rms, rec.step_size);
    v = std::move(next);
  }
  return res;
}

}  // namespace rgls
