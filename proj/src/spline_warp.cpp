#include "rgls/spline_warp.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rgls {
namespace {

// Index of the interval containing t (already clamped).
std::size_t locate(const std::vector<double>& nodes, double t) {
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), t);
  const auto j = static_cast<std::size_t>(std::distance(nodes.begin(), it));
  return std::clamp<std::size_t>(j == 0 ? 0 : j - 1, 0, nodes.size() - 2);
}

// Slope at node j as a linear functional of nodal values: (lo, hi, weight) with
// slope = weight * (y[hi] - y[lo]).
struct SlopeStencil {
  std::size_t lo, hi;
  double weight;
};

SlopeStencil slope_stencil(const std::vector<double>& nodes, std::size_t j) {
  const std::size_t n = nodes.size() - 1;
  const std::size_t lo = j == 0 ? 0 : j - 1;
  const std::size_t hi = j == n ? n : j + 1;
  return {lo, hi, 1.0 / (nodes[hi] - nodes[lo])};
}

double keys_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace

SplineBasis::SplineBasis(std::vector<double> node_times) : nodes_(std::move(node_times)) {
  if (nodes_.size() < 2) throw std::invalid_argument("SplineBasis: need at least two nodes");
  for (std::size_t i = 1; i < nodes_.size(); ++i)
    if (!(nodes_[i] > nodes_[i - 1]))
      throw std::invalid_argument("SplineBasis: nodes must be strictly increasing");
}

SplineBasis SplineBasis::uniform(double t_start, double t_end, std::size_t n_intervals) {
  if (n_intervals == 0) throw std::invalid_argument("SplineBasis: n_intervals must be >= 1");
  std::vector<double> nodes(n_intervals + 1);
  const double h = (t_end - t_start) / static_cast<double>(n_intervals);
  for (std::size_t i = 0; i <= n_intervals; ++i) nodes[i] = t_start + h * static_cast<double>(i);
  nodes.back() = t_end;
  return SplineBasis(std::move(nodes));
}

void SplineBasis::eval_all(double t, std::span<double> phi, std::span<double> dphi) const {
  std::fill(phi.begin(), phi.end(), 0.0);
  std::fill(dphi.begin(), dphi.end(), 0.0);
  t = std::clamp(t, start(), end());
  const std::size_t j = locate(nodes_, t);
  const double h = nodes_[j + 1] - nodes_[j];
  const double s = (t - nodes_[j]) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;

  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  // d/dt of the Hermite polynomials (chain rule through s = (t - t_j)/h).
  const double d00 = (6 * s2 - 6 * s) / h, d10 = (3 * s2 - 4 * s + 1) / h;
  const double d01 = (-6 * s2 + 6 * s) / h, d11 = (3 * s2 - 2 * s) / h;

  phi[j] += h00;
  dphi[j] += d00;
  phi[j + 1] += h01;
  dphi[j + 1] += d01;

  const auto add_slope = [&](std::size_t node, double wv, double wd) {
    const SlopeStencil st = slope_stencil(nodes_, node);
    phi[st.hi] += wv * h * st.weight;
    phi[st.lo] -= wv * h * st.weight;
    dphi[st.hi] += wd * h * st.weight;
    dphi[st.lo] -= wd * h * st.weight;
  };
  add_slope(j, h10, d10);
  add_slope(j + 1, h11, d11);
}

double SplineBasis::eval(std::size_t k, double t) const {
  if (k >= size()) throw std::out_of_range("SplineBasis::eval: basis index out of range");
  std::vector<double> phi(size()), dphi(size());
  eval_all(t, phi, dphi);
  return phi[k];
}

SampledBasis::SampledBasis(const SplineBasis& basis, std::span<const double> times)
    : n_samples(times.size()),
      n_basis(basis.size()),
      phi(times.size() * basis.size()),
      dphi(times.size() * basis.size()) {
  for (std::size_t i = 0; i < n_samples; ++i) {
    basis.eval_all(times[i], std::span(phi).subspan(i * n_basis, n_basis),
                   std::span(dphi).subspan(i * n_basis, n_basis));
  }
}

WarpModel::WarpModel(SplineBasis b, std::vector<double> r, std::vector<double> a)
    : basis(std::move(b)), rho(std::move(r)), amp(std::move(a)) {
  if (rho.size() != basis.size() || amp.size() != basis.size())
    throw std::invalid_argument("WarpModel: coefficient count does not match basis");
}

WarpModel WarpModel::identity(SplineBasis b) {
  std::vector<double> r = b.node_times();
  std::vector<double> a(b.size(), 1.0);
  return WarpModel(std::move(b), std::move(r), std::move(a));
}

WarpValue WarpModel::eval(double t) const {
  std::vector<double> phi(basis.size()), dphi(basis.size());
  basis.eval_all(t, phi, dphi);
  WarpValue v;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    v.p += rho[k] * phi[k];
    v.dp += rho[k] * dphi[k];
    v.amp += amp[k] * phi[k];
    v.damp += amp[k] * dphi[k];
  }
  return v;
}

void WarpModel::sample(std::span<const double> times, std::span<double> p,
                       std::span<double> a) const {
  std::vector<double> phi(basis.size()), dphi(basis.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    basis.eval_all(times[i], phi, dphi);
    double pv = 0.0, av = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) {
      pv += rho[k] * phi[k];
      av += amp[k] * phi[k];
    }
    p[i] = pv;
    a[i] = av;
  }
}

bool has_fold(const WarpModel& w, std::size_t per_interval) {
  const auto& nodes = w.basis.node_times();
  for (std::size_t j = 0; j + 1 < nodes.size(); ++j) {
    for (std::size_t q = 0; q <= per_interval; ++q) {
      const double t = nodes[j] + (nodes[j + 1] - nodes[j]) * static_cast<double>(q) /
                                      static_cast<double>(per_interval);
      if (w.eval(t).dp <= 0.0) return true;
    }
  }
  return false;
}

double interpolate(const Trace& u, double tau) {
  const double x = (tau - u.t0) / u.dt;
  const auto last = static_cast<double>(u.size() - 1);
  constexpr double eps = 1e-9;
  if (x < -eps || x > last + eps) return 0.0;
  const double nearest = std::round(x);
  if (std::abs(x - nearest) < 1e-10) {
    return u.samples[static_cast<std::size_t>(std::clamp(nearest, 0.0, last))];
  }
  const auto i = static_cast<long>(std::floor(x));
  double acc = 0.0;
  for (long j = i - 1; j <= i + 2; ++j) {
    if (j < 0 || j > static_cast<long>(last)) continue;
    acc += u.samples[static_cast<std::size_t>(j)] * keys_kernel(x - static_cast<double>(j));
  }
  return acc;
}

Trace apply_warp(const Trace& u, std::span<const double> p, std::span<const double> a,
                 double alpha, std::size_t* n_clamped) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("apply_warp: alpha must lie in [0, 1]");
  if (p.size() != u.size() || a.size() != u.size())
    throw std::invalid_argument("apply_warp: warp samples do not match the trace");
  Trace out = u.zeros_like();
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double t = u.time(i);
    double amp = a[i];
    if (amp < kAmpFloor) {
      amp = kAmpFloor;
      ++clamped;
    }
    const double gain = alpha == 0.0 ? 1.0 : std::pow(amp, alpha);
    const double tau = alpha == 0.0 ? t : (1.0 - alpha) * t + alpha * p[i];
    out.samples[i] = gain * interpolate(u, tau);
  }
  if (n_clamped)
    *n_clamped = clamped;
  else if (clamped > 0)
    spdlog::warn("apply_warp: amplitude clamped to {} at {} of {} samples", kAmpFloor, clamped,
                 u.size());
  return out;
}

Trace apply_warp(const Trace& u, const WarpModel& w, double alpha, std::size_t* clamped) {
  std::vector<double> times(u.size()), p(u.size()), a(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) times[i] = u.time(i);
  w.sample(times, p, a);
  return apply_warp(u, p, a, alpha, clamped);
}

}  // namespace rgls
