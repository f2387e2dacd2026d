#include "rgls/adjoint_source.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rgls/errors.hpp"

namespace rgls {
namespace {

double peak(const Trace& u) {
  double m = 0.0;
  for (double x : u.samples) m = std::max(m, std::abs(x));
  return m;
}

Trace difference(const Trace& a, const Trace& b) {
  Trace out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] -= b.samples[i];
  return out;
}

}  // namespace

std::string_view to_string(ResidualMode mode) { return mode == ResidualMode::ls ? "ls" : "rgls"; }

ResidualMode parse_residual_mode(std::string_view name) {
  if (name == "ls") return ResidualMode::ls;
  if (name == "rgls") return ResidualMode::rgls;
  throw std::invalid_argument("unknown residual mode: " + std::string(name));
}

AdjointSourceSpec AdjointSourceSpec::rgls_default(double f_source) {
  AdjointSourceSpec s;
  s.mode = ResidualMode::rgls;
  s.sched = SweepSchedule::geometric(f_source);
  return s;
}

void AdjointSourceSpec::validate() const {
  if (stride == 0) throw std::invalid_argument("AdjointSourceSpec: stride must be >= 1");
  if (mode == ResidualMode::rgls) {
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw std::invalid_argument("AdjointSourceSpec: alpha must lie in (0, 1]");
    sched.validate();
  }
}

ShotGather ls_residual(const ShotGather& obs, const ShotGather& pred) {
  check_aligned(obs, pred);
  ShotGather out = pred;
  for (std::size_t r = 0; r < pred.size(); ++r) out.traces[r] = difference(obs.traces[r], pred.traces[r]);
  return out;
}

RglsResidual rgls_residual(const ShotGather& obs, const ShotGather& pred,
                           const AdjointSourceSpec& spec, std::size_t workers) {
  check_aligned(obs, pred);
  spec.validate();
  const std::size_t n = pred.size();

  ShotGather obs_n = obs, pred_n = pred;
  std::vector<bool> live(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double s = peak(pred.traces[r]);
    live[r] = s > 0.0;
    if (!live[r]) continue;
    for (auto& x : obs_n.traces[r].samples) x /= s;
    for (auto& x : pred_n.traces[r].samples) x /= s;
  }

  GatherRegistration reg = register_gather(obs_n, pred_n, spec.sched, spec.lfa_kind, spec.stride, workers);

  RglsResidual out{pred, std::move(reg.warps), std::vector<bool>(n), 0, 0};
  for (std::size_t r = 0; r < n; ++r) {
    const Trace& u = pred.traces[r];
    if (live[r] && reg.ok[r]) {
      std::size_t hits = 0;
      out.residual.traces[r] = difference(apply_warp(u, out.warps[r], spec.alpha, &hits), u);
      if (hits > 0) ++out.clamped;
      out.registered[r] = true;
    } else {
      out.residual.traces[r] = difference(obs.traces[r], u);
      ++out.fallbacks;
    }
  }
  if (out.fallbacks > 0 || out.clamped > 0)
    spdlog::debug("rgls_residual: {} of {} traces fell back to obs - pred, {} hit the amplitude floor",
                  out.fallbacks, n, out.clamped);
  return out;
}

ShotGather adjoint_residual(const ShotGather& obs, const ShotGather& pred,
                            const AdjointSourceSpec& spec, std::size_t workers) {
  if (spec.mode == ResidualMode::ls) return ls_residual(obs, pred);
  return rgls_residual(obs, pred, spec, workers).residual;
}

}  // namespace rgls
