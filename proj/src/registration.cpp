#include "rgls/registration.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "rgls/errors.hpp"
#include "rgls/parallel.hpp"

namespace rgls {
namespace {

void check_comparable(const Trace& d, const Trace& u) {
  if (d.size() != u.size() || d.dt != u.dt || d.t0 != u.t0)
    throw MismatchError("registration: traces differ in sampling or length");
}

std::vector<double> sample_times(const Trace& u) {
  std::vector<double> t(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) t[i] = u.time(i);
  return t;
}

SplineBasis basis_for(const Trace& u, std::size_t n_intervals) {
  return SplineBasis::uniform(u.t0, u.t_end(), n_intervals);
}

Eigen::VectorXd concat(const std::vector<double>& a, const std::vector<double>& b) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size() + b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) v[static_cast<Eigen::Index>(a.size() + i)] = b[i];
  return v;
}

enum class Block { rho, amp };

struct DampedStep {
  Eigen::VectorXd delta;
  double value = 0.0;
};

// Levenberg-damped Newton step on one parameter block. Returns nullopt when no
// damping level yields a non-increasing objective (stationary to working precision).
std::optional<DampedStep> damped_step(const BandObjective& obj, const WarpModel& w, Block block,
                                      const Eigen::VectorXd& g, const Eigen::MatrixXd& h,
                                      double current) {
  const Eigen::Index n = g.size();
  const double diag_scale = h.diagonal().cwiseAbs().maxCoeff();
  const double scale = std::max({diag_scale, obj.power(), std::numeric_limits<double>::min()});
  const double cap = 1e8 * scale;
  const double seed = 1e-6 * scale;

  bool ever_pd = false;
  double mu = 0.0;
  while (mu <= cap) {
    const Eigen::MatrixXd m = h + mu * Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success && llt.matrixLLT().allFinite()) {
      ever_pd = true;
      const Eigen::VectorXd delta = -llt.solve(g);
      if (delta.allFinite()) {
        WarpModel trial = w;
        auto& target = block == Block::rho ? trial.rho : trial.amp;
        for (Eigen::Index k = 0; k < n; ++k) target[static_cast<std::size_t>(k)] += delta[k];
        const double v = obj.value(trial);
        if (std::isfinite(v) && v <= current) return DampedStep{delta, v};
      }
    }
    mu = mu == 0.0 ? seed : 10.0 * mu;
  }
  if (!ever_pd) throw SingularSystemError("newton: damping cap reached without positive definiteness");
  return std::nullopt;
}

}  // namespace

SweepSchedule SweepSchedule::geometric(double f_source, std::size_t n_bands) {
  if (!(f_source > 0.0)) throw std::invalid_argument("SweepSchedule: source frequency must be positive");
  if (n_bands == 0) throw std::invalid_argument("SweepSchedule: need at least one band");
  SweepSchedule s;
  const double lo = f_source / 16.0;
  const double hi = f_source / 2.0;
  for (std::size_t k = 0; k < n_bands; ++k) {
    const double frac = n_bands == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(n_bands - 1);
    s.bands.push_back(FrequencyBand::with_default_taper(lo * std::pow(hi / lo, frac)));
  }
  return s;
}

void SweepSchedule::validate() const {
  if (bands.empty()) throw std::invalid_argument("SweepSchedule: no bands");
  for (std::size_t k = 1; k < bands.size(); ++k)
    if (!(bands[k].omega_max > bands[k - 1].omega_max))
      throw std::invalid_argument("SweepSchedule: omega_max must be strictly increasing");
  if (n_intervals == 0) throw std::invalid_argument("SweepSchedule: n_intervals must be >= 1");
}

SmoothSignal::SmoothSignal(BandlimitedSignal s, double dt, double t0)
    : s_(std::move(s)), dt_(dt), t0_(t0) {}

SmoothSignal::Sample SmoothSignal::operator()(double t) const {
  const std::size_t n = s_.value.size();
  const double x = (t - t0_) / dt_ + static_cast<double>(s_.lead);
  const auto last = static_cast<double>(n - 1);
  if (!(x >= 0.0 && x <= last)) return {};
  auto j = static_cast<std::size_t>(x);
  if (j >= n - 1) j = n - 2;
  const double s = x - static_cast<double>(j);
  const double h = dt_;
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;

  // Quintic Hermite basis on [0, 1] and its first two s-derivatives.
  const double b0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
  const double b1 = s - 6 * s3 + 8 * s4 - 3 * s5;
  const double b2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
  const double b3 = 0.5 * s3 - s4 + 0.5 * s5;
  const double b4 = -4 * s3 + 7 * s4 - 3 * s5;
  const double b5 = 10 * s3 - 15 * s4 + 6 * s5;

  const double d0 = -30 * s2 + 60 * s3 - 30 * s4;
  const double d1 = 1 - 18 * s2 + 32 * s3 - 15 * s4;
  const double d2 = s - 4.5 * s2 + 6 * s3 - 2.5 * s4;
  const double d3 = 1.5 * s2 - 4 * s3 + 2.5 * s4;
  const double d4 = -12 * s2 + 28 * s3 - 15 * s4;
  const double d5 = 30 * s2 - 60 * s3 + 30 * s4;

  const double e0 = -60 * s + 180 * s2 - 120 * s3;
  const double e1 = -36 * s + 96 * s2 - 60 * s3;
  const double e2 = 1 - 9 * s + 18 * s2 - 10 * s3;
  const double e3 = 3 * s - 12 * s2 + 10 * s3;
  const double e4 = -24 * s + 84 * s2 - 60 * s3;
  const double e5 = 60 * s - 180 * s2 + 120 * s3;

  const double y0 = s_.value[j], y1 = s_.value[j + 1];
  const double v0 = h * s_.first[j], v1 = h * s_.first[j + 1];
  const double a0 = h * h * s_.second[j], a1 = h * h * s_.second[j + 1];

  Sample out;
  out.value = y0 * b0 + v0 * b1 + a0 * b2 + a1 * b3 + v1 * b4 + y1 * b5;
  out.first = (y0 * d0 + v0 * d1 + a0 * d2 + a1 * d3 + v1 * d4 + y1 * d5) / h;
  out.second = (y0 * e0 + v0 * e1 + a0 * e2 + a1 * e3 + v1 * e4 + y1 * e5) / (h * h);
  return out;
}

BandObjective::BandObjective(const Trace& lfa_d, const Trace& lfa_u, const FrequencyBand& band,
                             double penalty_weight, const SplineBasis& basis)
    : times_(sample_times(lfa_u)),
      weights_(trapezoid_weights(lfa_u.size(), lfa_u.dt)),
      d_(lowpass(lfa_d, band).samples),
      u_(lowpass_with_derivatives_extended(lfa_u, band), lfa_u.dt, lfa_u.t0),
      basis_(basis, times_),
      penalty_weight_(penalty_weight) {
  check_comparable(lfa_d, lfa_u);
  for (std::size_t i = 0; i < times_.size(); ++i) {
    const double uv = u_(times_[i]).value;
    power_ += weights_[i] * (d_[i] * d_[i] + uv * uv);
  }
}

BandObjective::Terms BandObjective::terms(const WarpModel& w) const {
  Terms out;
  const std::size_t nb = basis_.n_basis;
  for (std::size_t i = 0; i < times_.size(); ++i) {
    double p = 0.0, a = 0.0;
    for (std::size_t k = 0; k < nb; ++k) {
      p += w.rho[k] * basis_.value(i, k);
      a += w.amp[k] * basis_.value(i, k);
    }
    const double r = d_[i] - a * u_(p).value;
    const double dev = p - times_[i];
    out.data += 0.5 * weights_[i] * r * r;
    out.penalty += 0.5 * penalty_weight_ * weights_[i] * dev * dev;
  }
  return out;
}

double BandObjective::value(const WarpModel& w) const {
  const Terms t = terms(w);
  return t.data + t.penalty;
}

double BandObjective::data_term(const WarpModel& w) const { return terms(w).data; }

WarpGradient BandObjective::gradient(const WarpModel& w) const {
  const std::size_t nb = basis_.n_basis;
  WarpGradient g{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nb)),
                 Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nb))};
  for (std::size_t i = 0; i < times_.size(); ++i) {
    double p = 0.0, a = 0.0;
    for (std::size_t k = 0; k < nb; ++k) {
      p += w.rho[k] * basis_.value(i, k);
      a += w.amp[k] * basis_.value(i, k);
    }
    const SmoothSignal::Sample u = u_(p);
    const double r = d_[i] - a * u.value;
    const double g_rho = weights_[i] * (-r * a * u.first + penalty_weight_ * (p - times_[i]));
    const double g_amp = weights_[i] * (-r * u.value);
    for (std::size_t k = 0; k < nb; ++k) {
      g.rho[static_cast<Eigen::Index>(k)] += g_rho * basis_.value(i, k);
      g.amp[static_cast<Eigen::Index>(k)] += g_amp * basis_.value(i, k);
    }
  }
  return g;
}

WarpHessian BandObjective::hessian(const WarpModel& w) const {
  const auto nb = static_cast<Eigen::Index>(basis_.n_basis);
  WarpHessian h{Eigen::MatrixXd::Zero(nb, nb), Eigen::MatrixXd::Zero(nb, nb)};
  for (std::size_t i = 0; i < times_.size(); ++i) {
    double p = 0.0, a = 0.0;
    for (Eigen::Index k = 0; k < nb; ++k) {
      p += w.rho[static_cast<std::size_t>(k)] * basis_.value(i, static_cast<std::size_t>(k));
      a += w.amp[static_cast<std::size_t>(k)] * basis_.value(i, static_cast<std::size_t>(k));
    }
    const SmoothSignal::Sample u = u_(p);
    const double r = d_[i] - a * u.value;
    const double au1 = a * u.first;
    const double c_rho = weights_[i] * (au1 * au1 - r * a * u.second + penalty_weight_);
    const double c_amp = weights_[i] * u.value * u.value;
    for (Eigen::Index j = 0; j < nb; ++j) {
      const double pj = basis_.value(i, static_cast<std::size_t>(j));
      if (pj == 0.0) continue;
      for (Eigen::Index k = j; k < nb; ++k) {
        const double pp = pj * basis_.value(i, static_cast<std::size_t>(k));
        h.rho(j, k) += c_rho * pp;
        h.amp(j, k) += c_amp * pp;
      }
    }
  }
  h.rho.triangularView<Eigen::StrictlyLower>() = h.rho.transpose();
  h.amp.triangularView<Eigen::StrictlyLower>() = h.amp.transpose();
  return h;
}

namespace {

BandObjective make_objective(const Trace& d, const Trace& u, const WarpModel& w,
                             const FrequencyBand& band, LfaKind kind, double penalty_weight) {
  check_comparable(d, u);
  return BandObjective(lfa(d, kind), lfa(u, kind), band, penalty_weight, w.basis);
}

}  // namespace

double objective(const Trace& d, const Trace& u, const WarpModel& w, const FrequencyBand& band,
                 LfaKind kind, double penalty_weight) {
  return make_objective(d, u, w, band, kind, penalty_weight).value(w);
}

WarpGradient gradient(const Trace& d, const Trace& u, const WarpModel& w,
                      const FrequencyBand& band, LfaKind kind, double penalty_weight) {
  return make_objective(d, u, w, band, kind, penalty_weight).gradient(w);
}

WarpHessian hessian(const Trace& d, const Trace& u, const WarpModel& w, const FrequencyBand& band,
                    LfaKind kind, double penalty_weight) {
  return make_objective(d, u, w, band, kind, penalty_weight).hessian(w);
}

NewtonOutcome newton_solve(const BandObjective& obj, WarpModel w, const SweepSchedule& sched,
                           std::size_t band_index, std::vector<ObjectiveRecord>* history) {
  double current = obj.value(w);
  if (history != nullptr) history->push_back({band_index, current});
  for (std::size_t iter = 0; iter < sched.newton_max_iter; ++iter) {
    Eigen::VectorXd step = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * w.rho.size()));
    bool moved = false;

    {
      const WarpGradient g = obj.gradient(w);
      const WarpHessian h = obj.hessian(w);
      if (auto s = damped_step(obj, w, Block::rho, g.rho, h.rho, current)) {
        for (std::size_t k = 0; k < w.rho.size(); ++k) w.rho[k] += s->delta[static_cast<Eigen::Index>(k)];
        step.head(s->delta.size()) = s->delta;
        current = s->value;
        moved = true;
      }
    }
    {
      const WarpGradient g = obj.gradient(w);
      const WarpHessian h = obj.hessian(w);
      if (auto s = damped_step(obj, w, Block::amp, g.amp, h.amp, current)) {
        for (std::size_t k = 0; k < w.amp.size(); ++k) w.amp[k] += s->delta[static_cast<Eigen::Index>(k)];
        step.tail(s->delta.size()) = s->delta;
        current = s->value;
        moved = true;
      }
    }
    if (history != nullptr && moved) history->push_back({band_index, current});

    const double scale = std::max(concat(w.rho, w.amp).norm(), std::numeric_limits<double>::min());
    if (!moved || step.norm() / scale < sched.newton_tol) return {std::move(w), true};
  }
  return {std::move(w), false};
}

WarpModel newton_solve(const Trace& d, const Trace& u, WarpModel w0, const FrequencyBand& band,
                       LfaKind kind, const SweepSchedule& sched) {
  const BandObjective obj = make_objective(d, u, w0, band, kind, sched.penalty_weight);
  return newton_solve(obj, std::move(w0), sched).warp;
}

RegistrationResult register_traces(const Trace& d, const Trace& u, const SweepSchedule& sched,
                                   LfaKind kind) {
  check_comparable(d, u);
  sched.validate();
  const Trace lfa_d = lfa(d, kind);
  const Trace lfa_u = lfa(u, kind);
  const SplineBasis basis = basis_for(u, sched.n_intervals);

  RegistrationResult result;
  result.warp = WarpModel::identity(basis);
  result.converged = true;
  for (std::size_t k = 0; k < sched.bands.size(); ++k) {
    const BandObjective obj(lfa_d, lfa_u, sched.bands[k], sched.penalty_weight, basis);
    if (k + 1 == sched.bands.size()) result.initial_misfit = obj.data_term(WarpModel::identity(basis));
    try {
      NewtonOutcome out = newton_solve(obj, result.warp, sched, k, &result.objective_history);
      result.warp = std::move(out.warp);
      result.converged = result.converged && out.converged;
    } catch (const SingularSystemError& e) {
      spdlog::warn("registration: band {} failed: {}", k, e.what());
      result.converged = false;
      result.failed = true;
    }
    if (k + 1 == sched.bands.size()) result.final_misfit = obj.data_term(result.warp);
  }
  result.fold_warning = has_fold(result.warp);
  if (result.fold_warning) spdlog::warn("registration: warp folds (p' <= 0 somewhere)");
  return result;
}

double registration_misfit(const Trace& d, const Trace& u, const WarpModel& w) {
  check_comparable(d, u);
  const Trace warped = apply_warp(u, w, 1.0);
  std::vector<double> r2(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = d.samples[i] - warped.samples[i];
    r2[i] = r * r;
  }
  return 0.5 * trapezoid(r2, d.dt);
}

GatherRegistration register_gather(const ShotGather& obs, const ShotGather& pred,
                                   const SweepSchedule& sched, LfaKind kind, std::size_t stride,
                                   std::size_t workers) {
  check_aligned(obs, pred);
  if (stride == 0) throw std::invalid_argument("register_gather: stride must be >= 1");
  const std::size_t n = pred.size();
  GatherRegistration out;
  if (n == 0) return out;
  for (std::size_t r = 0; r < n; r += stride) out.registered.push_back(r);

  std::vector<RegistrationResult> results(out.registered.size());
  parallel_for(out.registered.size(), workers, [&](std::size_t i) {
    const std::size_t r = out.registered[i];
    results[i] = register_traces(obs.traces[r], pred.traces[r], sched, kind);
  });

  out.warps.resize(n);
  out.ok.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i0 = std::min(r / stride, out.registered.size() - 1);
    const std::size_t r0 = out.registered[i0];
    if (r == r0 || i0 + 1 >= out.registered.size()) {
      out.warps[r] = results[i0].warp;
      out.ok[r] = !results[i0].failed;
      continue;
    }
    const std::size_t r1 = out.registered[i0 + 1];
    const double f = static_cast<double>(r - r0) / static_cast<double>(r1 - r0);
    const WarpModel& w0 = results[i0].warp;
    const WarpModel& w1 = results[i0 + 1].warp;
    std::vector<double> rho(w0.rho.size()), amp(w0.amp.size());
    for (std::size_t k = 0; k < rho.size(); ++k) {
      rho[k] = (1.0 - f) * w0.rho[k] + f * w1.rho[k];
      amp[k] = (1.0 - f) * w0.amp[k] + f * w1.amp[k];
    }
    out.warps[r] = WarpModel(w0.basis, std::move(rho), std::move(amp));
    out.ok[r] = !results[i0].failed && !results[i0 + 1].failed;
  }
  return out;
}

}  // namespace rgls
