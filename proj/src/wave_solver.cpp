#include "rgls/wave_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <limits>
#include <string>

#include <spdlog/spdlog.h>

#include "rgls/errors.hpp"

namespace rgls {

namespace {

constexpr long kGhost = 3;
constexpr double kC1 = 9.0 / 8.0;
constexpr double kC2 = -1.0 / 24.0;
constexpr double kBlowupFactor = 1e10;
constexpr std::size_t kCheckEvery = 32;

}  // namespace

VelocityModel::VelocityModel(std::size_t nx, std::size_t nz, double dx, Position origin,
                             std::vector<double> v)
    : nx_(nx), nz_(nz), dx_(dx), origin_(origin), v_(std::move(v)) {
  if (nx_ < 16 || nz_ < 16) throw std::invalid_argument("VelocityModel: grid must be at least 16x16");
  if (!(dx_ > 0.0)) throw std::invalid_argument("VelocityModel: dx must be positive");
  if (v_.size() != nx_ * nz_) throw std::invalid_argument("VelocityModel: value count does not match grid");
  for (double x : v_) {
    if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("VelocityModel: velocities must be positive");
  }
}

VelocityModel VelocityModel::constant(std::size_t nx, std::size_t nz, double dx, double v,
                                      Position origin) {
  return VelocityModel(nx, nz, dx, origin, std::vector<double>(nx * nz, v));
}

VelocityModel VelocityModel::from_squared_slowness(std::size_t nx, std::size_t nz, double dx,
                                                   Position origin, std::span<const double> m) {
  std::vector<double> v(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(m[i] > 0.0)) throw std::invalid_argument("squared slowness must be positive");
    v[i] = 1.0 / std::sqrt(m[i]);
  }
  return VelocityModel(nx, nz, dx, origin, std::move(v));
}

double VelocityModel::squared_slowness(std::size_t ix, std::size_t iz) const {
  const double v = (*this)(ix, iz);
  return 1.0 / (v * v);
}

std::vector<double> VelocityModel::squared_slowness() const {
  std::vector<double> m(v_.size());
  for (std::size_t i = 0; i < v_.size(); ++i) m[i] = 1.0 / (v_[i] * v_[i]);
  return m;
}

double VelocityModel::v_max() const { return *std::max_element(v_.begin(), v_.end()); }
double VelocityModel::v_min() const { return *std::min_element(v_.begin(), v_.end()); }

Position VelocityModel::position(std::size_t ix, std::size_t iz) const {
  return {origin_.x + dx_ * static_cast<double>(ix), origin_.z + dx_ * static_cast<double>(iz)};
}

bool VelocityModel::same_grid(const VelocityModel& o) const {
  return nx_ == o.nx_ && nz_ == o.nz_ && dx_ == o.dx_ && origin_.x == o.origin_.x &&
         origin_.z == o.origin_.z;
}

PmlConfig PmlConfig::tuned(double v_ref, double dx, std::size_t width, double profile_power,
                           double reflection) {
  PmlConfig c;
  c.width = width;
  c.profile_power = profile_power;
  c.max_damping = (profile_power + 1.0) * v_ref * std::log(1.0 / reflection) /
                  (2.0 * static_cast<double>(width) * dx);
  return c;
}

PmlConfig PmlConfig::reflecting() {
  PmlConfig c;
  c.width = 0;
  c.absorbing = false;
  return c;
}

void PmlConfig::validate() const {
  if (!absorbing) return;
  if (width < 8) throw std::invalid_argument("PML width must be at least 8 cells");
  if (!(max_damping > 0.0)) throw std::invalid_argument("PML max_damping must be positive");
  if (!(profile_power >= 1.0)) throw std::invalid_argument("PML profile power must be >= 1");
}

double stability_dt(const VelocityModel& model, double cfl_safety) {
  if (!(cfl_safety > 0.0) || cfl_safety > 1.0) {
    throw std::invalid_argument("cfl_safety must lie in (0, 1]");
  }
  return cfl_safety * model.dx() / (model.v_max() * std::sqrt(2.0) * kStencilConstant);
}

AcousticPropagator::AcousticPropagator(const VelocityModel& model, double dt, const PmlConfig& pml)
    : mnx_(model.nx()), mnz_(model.nz()), pad_(pml.padding()), dx_(model.dx()), dt_(dt) {
  pml.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const double limit = stability_dt(model, 1.0);
  if (dt > limit) spdlog::warn("dt {} exceeds the stability limit {}", dt, limit);
  nx_ = mnx_ + 2 * pad_;
  nz_ = mnz_ + 2 * pad_;
  stride_ = nz_ + 2 * kGhost;
  const std::size_t total = (nx_ + 2 * kGhost) * stride_;
  m_.assign(total, 0.0);
  scale_.assign(total, 0.0);
  for (std::size_t i = 0; i < nx_; ++i) {
    const std::size_t mi = std::clamp<long>(static_cast<long>(i) - static_cast<long>(pad_), 0,
                                            static_cast<long>(mnx_) - 1);
    for (std::size_t k = 0; k < nz_; ++k) {
      const std::size_t mk = std::clamp<long>(static_cast<long>(k) - static_cast<long>(pad_), 0,
                                              static_cast<long>(mnz_) - 1);
      const std::size_t n = node(i, k);
      m_[n] = model.squared_slowness(mi, mk);
      scale_[n] = dt * dt / m_[n];
    }
  }
  for (auto* v : {&cur_, &prev_, &next_, &lap_, &ex_, &ez_, &gz_, &psi_x_, &psi_z_, &chi_x_, &chi_z_}) {
    v->assign(total, 0.0);
  }

  // Damping coefficients on integer and half points along each axis.
  auto build = [&](std::size_t n_total, std::size_t n_model, std::vector<double>& a_half,
                   std::vector<double>& b_half, std::vector<double>& a_int,
                   std::vector<double>& b_int, std::vector<long>& half_list,
                   std::vector<long>& int_list) {
    a_half.assign(n_total + 2 * kGhost, 0.0);
    b_half.assign(n_total + 2 * kGhost, 1.0);
    a_int.assign(n_total + 2 * kGhost, 0.0);
    b_int.assign(n_total + 2 * kGhost, 1.0);
    if (!pml.absorbing) return;
    const double lo = static_cast<double>(pad_);
    const double hi = static_cast<double>(pad_ + n_model - 1);
    auto damping = [&](double x) {
      const double dist = std::max({lo - x, x - hi, 0.0});
      const double s = std::min(dist / static_cast<double>(pml.width), 1.0);
      return pml.max_damping * std::pow(s, pml.profile_power);
    };
    for (long h = -2; h <= static_cast<long>(n_total); ++h) {
      const double d = damping(static_cast<double>(h) + 0.5);
      if (d > 0.0) {
        b_half[h + kGhost] = std::exp(-d * dt);
        a_half[h + kGhost] = b_half[h + kGhost] - 1.0;
        half_list.push_back(h);
      }
    }
    for (long i = 0; i < static_cast<long>(n_total); ++i) {
      const double d = damping(static_cast<double>(i));
      if (d > 0.0) {
        b_int[i + kGhost] = std::exp(-d * dt);
        a_int[i + kGhost] = b_int[i + kGhost] - 1.0;
        int_list.push_back(i);
      }
    }
  };
  build(nx_, mnx_, a_half_x_, b_half_x_, a_int_x_, b_int_x_, pml_half_x_, pml_int_x_);
  build(nz_, mnz_, a_half_z_, b_half_z_, a_int_z_, b_int_z_, pml_half_z_, pml_int_z_);
}

std::size_t AcousticPropagator::node(std::size_t ix, std::size_t iz) const {
  return (ix + kGhost) * stride_ + iz + kGhost;
}

std::size_t AcousticPropagator::nearest_node(const VelocityModel& model, Position p) const {
  const double gx = model.grid_x(p.x);
  const double gz = model.grid_z(p.z);
  const double eps = 1e-9;
  if (gx < -0.5 - eps || gz < -0.5 - eps || gx > static_cast<double>(mnx_) - 0.5 + eps ||
      gz > static_cast<double>(mnz_) - 0.5 + eps) {
    throw std::invalid_argument("source position lies outside the model");
  }
  const auto ix = static_cast<std::size_t>(std::clamp<long>(std::lround(gx), 0, static_cast<long>(mnx_) - 1));
  const auto iz = static_cast<std::size_t>(std::clamp<long>(std::lround(gz), 0, static_cast<long>(mnz_) - 1));
  return interior_node(ix, iz);
}

ReceiverStencil AcousticPropagator::receiver_stencil(const VelocityModel& model, Position p) const {
  const double eps = 1e-9;
  double gx = model.grid_x(p.x);
  double gz = model.grid_z(p.z);
  const double xmax = static_cast<double>(mnx_ - 1);
  const double zmax = static_cast<double>(mnz_ - 1);
  if (gx < -eps || gz < -eps || gx > xmax + eps || gz > zmax + eps) {
    throw std::invalid_argument("receiver position lies outside the model");
  }
  gx = std::clamp(gx, 0.0, xmax);
  gz = std::clamp(gz, 0.0, zmax);
  const std::size_t ix = std::min(static_cast<std::size_t>(gx), mnx_ - 2);
  const std::size_t iz = std::min(static_cast<std::size_t>(gz), mnz_ - 2);
  const double fx = gx - static_cast<double>(ix);
  const double fz = gz - static_cast<double>(iz);
  ReceiverStencil r;
  r.node[0] = interior_node(ix, iz);
  r.node[1] = interior_node(ix + 1, iz);
  r.node[2] = interior_node(ix, iz + 1);
  r.node[3] = interior_node(ix + 1, iz + 1);
  r.weight[0] = (1 - fx) * (1 - fz);
  r.weight[1] = fx * (1 - fz);
  r.weight[2] = (1 - fx) * fz;
  r.weight[3] = fx * fz;
  return r;
}

void AcousticPropagator::reset() {
  for (auto* v : {&cur_, &prev_, &next_, &lap_, &ex_, &ez_, &gz_, &psi_x_, &psi_z_, &chi_x_, &chi_z_}) {
    std::fill(v->begin(), v->end(), 0.0);
  }
}

void AcousticPropagator::apply_laplacian(const std::vector<double>& u, std::vector<double>& lap) {
  const long NX = static_cast<long>(nx_);
  const long NZ = static_cast<long>(nz_);
  const long S = static_cast<long>(stride_);
  const double c1 = kC1 / dx_;
  const double c2 = kC2 / dx_;
  auto row = [&](long i) { return (i + kGhost) * S + kGhost; };

  for (long h = -2; h <= NX; ++h) {
    const double* u0 = &u[row(h)];
    const double* u1 = &u[row(h + 1)];
    const double* u2 = &u[row(h + 2)];
    const double* um = &u[row(h - 1)];
    double* e = &ex_[row(h)];
    for (long k = 0; k < NZ; ++k) e[k] = c1 * (u1[k] - u0[k]) + c2 * (u2[k] - um[k]);
  }
  for (long h : pml_half_x_) {
    const double a = a_half_x_[h + kGhost];
    const double b = b_half_x_[h + kGhost];
    double* e = &ex_[row(h)];
    double* p = &psi_x_[row(h)];
    for (long k = 0; k < NZ; ++k) {
      p[k] = b * p[k] + a * e[k];
      e[k] += p[k];
    }
  }
  for (long i = 0; i < NX; ++i) {
    const double* e0 = &ex_[row(i)];
    const double* e1 = &ex_[row(i - 1)];
    const double* ep = &ex_[row(i + 1)];
    const double* e2 = &ex_[row(i - 2)];
    double* l = &lap[row(i)];
    for (long k = 0; k < NZ; ++k) l[k] = c1 * (e0[k] - e1[k]) + c2 * (ep[k] - e2[k]);
  }
  for (long i : pml_int_x_) {
    const double a = a_int_x_[i + kGhost];
    const double b = b_int_x_[i + kGhost];
    double* l = &lap[row(i)];
    double* c = &chi_x_[row(i)];
    for (long k = 0; k < NZ; ++k) {
      c[k] = b * c[k] + a * l[k];
      l[k] += c[k];
    }
  }

  double* e = &ez_[kGhost];
  double* g = &gz_[kGhost];
  for (long i = 0; i < NX; ++i) {
    const double* ur = &u[row(i)];
    for (long h = -2; h <= NZ; ++h) e[h] = c1 * (ur[h + 1] - ur[h]) + c2 * (ur[h + 2] - ur[h - 1]);
    double* p = &psi_z_[row(i)];
    for (long h : pml_half_z_) {
      p[h] = b_half_z_[h + kGhost] * p[h] + a_half_z_[h + kGhost] * e[h];
      e[h] += p[h];
    }
    for (long k = 0; k < NZ; ++k) g[k] = c1 * (e[k] - e[k - 1]) + c2 * (e[k + 1] - e[k - 2]);
    double* c = &chi_z_[row(i)];
    for (long k : pml_int_z_) {
      c[k] = b_int_z_[k + kGhost] * c[k] + a_int_z_[k + kGhost] * g[k];
      g[k] += c[k];
    }
    double* l = &lap[row(i)];
    for (long k = 0; k < NZ; ++k) l[k] += g[k];
  }
}

// ubar += L^T gbar, running the PML memories backward.
void AcousticPropagator::apply_laplacian_adjoint(const std::vector<double>& gbar,
                                                 std::vector<double>& ubar) {
  const long NX = static_cast<long>(nx_);
  const long NZ = static_cast<long>(nz_);
  const long S = static_cast<long>(stride_);
  const double c1 = kC1 / dx_;
  const double c2 = kC2 / dx_;
  auto row = [&](long i) { return (i + kGhost) * S + kGhost; };

  // x axis; lap_ holds the adjoint of g (ghost rows stay zero).
  for (long i = 0; i < NX; ++i) std::copy_n(&gbar[row(i)], NZ, &lap_[row(i)]);
  for (long i : pml_int_x_) {
    const double a = a_int_x_[i + kGhost];
    const double b = b_int_x_[i + kGhost];
    double* gb = &lap_[row(i)];
    double* c = &chi_x_[row(i)];
    for (long k = 0; k < NZ; ++k) {
      c[k] += gb[k];
      gb[k] += a * c[k];
      c[k] *= b;
    }
  }
  for (long h = -2; h <= NX; ++h) {
    const double* g0 = &lap_[row(h)];
    const double* g1 = &lap_[row(h + 1)];
    const double* g2 = &lap_[row(h + 2)];
    const double* gm = &lap_[row(h - 1)];
    double* eb = &ex_[row(h)];
    for (long k = 0; k < NZ; ++k) eb[k] = -(c1 * (g1[k] - g0[k]) + c2 * (g2[k] - gm[k]));
  }
  for (long h : pml_half_x_) {
    const double a = a_half_x_[h + kGhost];
    const double b = b_half_x_[h + kGhost];
    double* eb = &ex_[row(h)];
    double* p = &psi_x_[row(h)];
    for (long k = 0; k < NZ; ++k) {
      p[k] += eb[k];
      eb[k] += a * p[k];
      p[k] *= b;
    }
  }
  for (long i = 0; i < NX; ++i) {
    const double* e0 = &ex_[row(i)];
    const double* e1 = &ex_[row(i - 1)];
    const double* ep = &ex_[row(i + 1)];
    const double* e2 = &ex_[row(i - 2)];
    double* ub = &ubar[row(i)];
    for (long k = 0; k < NZ; ++k) ub[k] -= c1 * (e0[k] - e1[k]) + c2 * (ep[k] - e2[k]);
  }

  // z axis, one row at a time; gz_ is a padded row with zero ghosts.
  double* gb = &gz_[kGhost];
  double* eb = &ez_[kGhost];
  for (long i = 0; i < NX; ++i) {
    const double* src = &gbar[row(i)];
    std::copy_n(src, NZ, gb);
    double* c = &chi_z_[row(i)];
    for (long k : pml_int_z_) {
      c[k] += gb[k];
      gb[k] += a_int_z_[k + kGhost] * c[k];
      c[k] *= b_int_z_[k + kGhost];
    }
    for (long h = -2; h <= NZ; ++h) eb[h] = -(c1 * (gb[h + 1] - gb[h]) + c2 * (gb[h + 2] - gb[h - 1]));
    double* p = &psi_z_[row(i)];
    for (long h : pml_half_z_) {
      p[h] += eb[h];
      eb[h] += a_half_z_[h + kGhost] * p[h];
      p[h] *= b_half_z_[h + kGhost];
    }
    double* ub = &ubar[row(i)];
    for (long k = 0; k < NZ; ++k) ub[k] -= c1 * (eb[k] - eb[k - 1]) + c2 * (eb[k + 1] - eb[k - 2]);
  }
}

void AcousticPropagator::step(std::span<const PointInjection> sources, std::span<float> accel) {
  apply_laplacian(cur_, lap_);
  const double inv_area = 1.0 / (dx_ * dx_);
  for (const auto& s : sources) lap_[s.node] += s.value * inv_area;
  const long S = static_cast<long>(stride_);
  for (std::size_t i = 0; i < nx_; ++i) {
    const long base = (static_cast<long>(i) + kGhost) * S + kGhost;
    const double* c = &cur_[base];
    const double* p = &prev_[base];
    const double* l = &lap_[base];
    const double* sc = &scale_[base];
    double* nx = &next_[base];
    for (std::size_t k = 0; k < nz_; ++k) nx[k] = 2.0 * c[k] - p[k] + sc[k] * l[k];
  }
  if (!accel.empty()) {
    if (accel.size() != mnx_ * mnz_) throw std::invalid_argument("accel buffer has the wrong size");
    for (std::size_t i = 0; i < mnx_; ++i) {
      for (std::size_t k = 0; k < mnz_; ++k) {
        const std::size_t n = interior_node(i, k);
        accel[i * mnz_ + k] = static_cast<float>(lap_[n] / m_[n]);
      }
    }
  }
  std::swap(prev_, cur_);
  std::swap(cur_, next_);
}

double AcousticPropagator::sample(const ReceiverStencil& r) const {
  return r.weight[0] * cur_[r.node[0]] + r.weight[1] * cur_[r.node[1]] +
         r.weight[2] * cur_[r.node[2]] + r.weight[3] * cur_[r.node[3]];
}

double AcousticPropagator::max_abs() const {
  double m = 0.0;
  for (double v : cur_) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(v));
  }
  return m;
}

double AcousticPropagator::energy() const {
  const long NX = static_cast<long>(nx_);
  const long NZ = static_cast<long>(nz_);
  const long S = static_cast<long>(stride_);
  auto at = [&](const std::vector<double>& u, long i, long k) { return u[(i + kGhost) * S + k + kGhost]; };
  auto dplus_x = [&](const std::vector<double>& u, long h, long k) {
    return (kC1 * (at(u, h + 1, k) - at(u, h, k)) + kC2 * (at(u, h + 2, k) - at(u, h - 1, k))) / dx_;
  };
  auto dplus_z = [&](const std::vector<double>& u, long i, long h) {
    return (kC1 * (at(u, i, h + 1) - at(u, i, h)) + kC2 * (at(u, i, h + 2) - at(u, i, h - 1))) / dx_;
  };
  double kinetic = 0.0;
  for (long i = 0; i < NX; ++i) {
    for (long k = 0; k < NZ; ++k) {
      const double v = (at(cur_, i, k) - at(prev_, i, k)) / dt_;
      kinetic += m_[(i + kGhost) * S + k + kGhost] * v * v;
    }
  }
  double potential = 0.0;
  for (long h = -2; h <= NX; ++h) {
    for (long k = 0; k < NZ; ++k) potential += dplus_x(cur_, h, k) * dplus_x(prev_, h, k);
  }
  for (long i = 0; i < NX; ++i) {
    for (long h = -2; h <= NZ; ++h) potential += dplus_z(cur_, i, h) * dplus_z(prev_, i, h);
  }
  return 0.5 * (kinetic + potential) * dx_ * dx_;
}

void AcousticPropagator::adjoint_sweep(std::size_t nt, const AdjointInjector& inject,
                                       const AdjointVisitor& visit) {
  if (nt < 2) throw std::invalid_argument("adjoint sweep needs nt >= 2");
  reset();
  // cur_ = adjoint of level n+1, prev_ = partial adjoint of level n, next_ = level n-1.
  std::vector<double>& a1 = cur_;
  std::vector<double>& a0 = prev_;
  std::vector<double>& am = next_;
  std::vector<double> s(a1.size(), 0.0);
  auto adder = [](std::vector<double>& target) {
    return [&target](std::size_t node, double value) { target[node] += value; };
  };
  inject(nt - 1, adder(a1));
  inject(nt - 2, adder(a0));
  const long S = static_cast<long>(stride_);
  for (long n = static_cast<long>(nt) - 2; n >= 0; --n) {
    visit(n, a1);
    for (std::size_t i = 0; i < nx_; ++i) {
      const long base = (static_cast<long>(i) + kGhost) * S + kGhost;
      for (std::size_t k = 0; k < nz_; ++k) {
        const long j = base + static_cast<long>(k);
        s[j] = scale_[j] * a1[j];
        am[j] = -a1[j];
        a0[j] += 2.0 * a1[j];
      }
    }
    if (n >= 1) inject(static_cast<std::size_t>(n - 1), adder(am));
    apply_laplacian_adjoint(s, a0);
    // rotate: a1 <- a0, a0 <- am, am <- old a1
    std::swap(a1, a0);
    std::swap(a0, am);
  }
  visit(-1, a1);
}

namespace {

void check_wavelet(const Trace& w, double dt) {
  if (w.samples.empty()) throw std::invalid_argument("source wavelet is empty");
  if (std::abs(w.dt - dt) > 1e-9 * dt) {
    throw MismatchError("source wavelet dt " + std::to_string(w.dt) + " differs from solver dt " +
                        std::to_string(dt));
  }
}

}  // namespace

ForwardResult forward(const VelocityModel& model, const SourceTerm& source,
                      std::span<const Position> receivers, std::size_t nt, double dt,
                      const PmlConfig& pml, bool record_wavefield, std::size_t snapshot_stride) {
  if (nt < 2) throw std::invalid_argument("forward needs nt >= 2");
  if (snapshot_stride == 0) throw std::invalid_argument("snapshot stride must be positive");
  check_wavelet(source.wavelet, dt);
  AcousticPropagator prop(model, dt, pml);
  const std::size_t src_node = prop.nearest_node(model, source.position);
  std::vector<ReceiverStencil> stencils;
  stencils.reserve(receivers.size());
  for (const auto& r : receivers) stencils.push_back(prop.receiver_stencil(model, r));

  double src_amp = 0.0;
  for (double v : source.wavelet.samples) src_amp = std::max(src_amp, std::abs(v));
  const double limit = kBlowupFactor * std::max(src_amp, 1e-300);

  std::vector<std::vector<double>> rec(receivers.size(), std::vector<double>(nt, 0.0));
  ForwardResult out;
  const std::size_t cells = model.nx() * model.nz();
  if (record_wavefield) {
    Wavefield w;
    w.nx = model.nx();
    w.nz = model.nz();
    w.dt = dt;
    w.stride = snapshot_stride;
    w.nt = (nt - 2) / snapshot_stride + 1;
    w.data.assign(w.nt * cells, 0.0f);
    out.acceleration = std::move(w);
  }
  const auto& wav = source.wavelet.samples;
  for (std::size_t n = 0; n < nt; ++n) {
    for (std::size_t r = 0; r < stencils.size(); ++r) rec[r][n] = prop.sample(stencils[r]);
    if (n + 1 == nt) break;
    const PointInjection inj{src_node, n < wav.size() ? wav[n] : 0.0};
    std::span<float> acc;
    if (record_wavefield && n % snapshot_stride == 0) {
      acc = std::span<float>(out.acceleration->data).subspan((n / snapshot_stride) * cells, cells);
    }
    prop.step(std::span<const PointInjection>(&inj, 1), acc);
    if ((n + 1) % kCheckEvery == 0 || n + 2 == nt) {
      const double amp = prop.max_abs();
      if (!(amp <= limit)) {
        throw InstabilityError("wavefield blew up at step " + std::to_string(n + 1) +
                               " (max |u| = " + std::to_string(amp) + ")");
      }
    }
  }
  ShotGather& g = out.gather;
  g.source = source;
  g.receiver_positions.assign(receivers.begin(), receivers.end());
  g.dt = dt;
  g.nt = nt;
  g.traces.reserve(rec.size());
  for (auto& r : rec) g.traces.emplace_back(std::move(r), dt, 0.0);
  return out;
}

namespace {

void check_residual(const ShotGather& residual, std::size_t nt, double dt) {
  if (residual.nt != nt || std::abs(residual.dt - dt) > 1e-9 * dt) {
    throw MismatchError("residual gather sampling does not match the solver");
  }
  if (residual.traces.size() != residual.receiver_positions.size()) {
    throw MismatchError("residual gather has mismatched trace and receiver counts");
  }
  for (const auto& t : residual.traces) {
    if (t.size() != nt) throw MismatchError("residual trace length differs from nt");
  }
}

AcousticPropagator::AdjointInjector receiver_injector(const std::vector<ReceiverStencil>& stencils,
                                                      const ShotGather& residual,
                                                      std::span<const double> weights) {
  return [&stencils, &residual, weights](std::size_t n, const std::function<void(std::size_t, double)>& add) {
    for (std::size_t r = 0; r < stencils.size(); ++r) {
      const double v = residual.traces[r].samples[n] * (weights.empty() ? 1.0 : weights[n]);
      if (v == 0.0) continue;
      for (int c = 0; c < 4; ++c) {
        if (stencils[r].weight[c] != 0.0) add(stencils[r].node[c], stencils[r].weight[c] * v);
      }
    }
  };
}

std::vector<ReceiverStencil> stencils_for(const AcousticPropagator& prop, const VelocityModel& model,
                                          const ShotGather& g) {
  std::vector<ReceiverStencil> out;
  out.reserve(g.receiver_positions.size());
  for (const auto& p : g.receiver_positions) out.push_back(prop.receiver_stencil(model, p));
  return out;
}

}  // namespace

Wavefield adjoint(const VelocityModel& model, const ShotGather& residual, std::size_t nt,
                  double dt, const PmlConfig& pml) {
  check_residual(residual, nt, dt);
  AcousticPropagator prop(model, dt, pml);
  const auto stencils = stencils_for(prop, model, residual);
  Wavefield q;
  q.nx = model.nx();
  q.nz = model.nz();
  q.nt = nt;
  q.dt = dt;
  q.data.assign(nt * q.nx * q.nz, 0.0f);
  prop.adjoint_sweep(nt, receiver_injector(stencils, residual, {}),
                     [&](long n, std::span<const double> ubar) {
                       const std::size_t level = static_cast<std::size_t>(n + 1);
                       float* dst = &q.data[level * q.nx * q.nz];
                       for (std::size_t i = 0; i < q.nx; ++i) {
                         for (std::size_t k = 0; k < q.nz; ++k) {
                           dst[i * q.nz + k] = static_cast<float>(ubar[prop.interior_node(i, k)]);
                         }
                       }
                     });
  return q;
}

Trace adjoint_at_source(const VelocityModel& model, Position source, const ShotGather& residual,
                        std::size_t nt, double dt, const PmlConfig& pml) {
  check_residual(residual, nt, dt);
  AcousticPropagator prop(model, dt, pml);
  const auto stencils = stencils_for(prop, model, residual);
  const std::size_t node = prop.nearest_node(model, source);
  const double factor = prop.step_scale(node) / (model.dx() * model.dx());
  std::vector<double> out(nt, 0.0);
  prop.adjoint_sweep(nt, receiver_injector(stencils, residual, {}),
                     [&](long n, std::span<const double> ubar) {
                       if (n >= 0) out[static_cast<std::size_t>(n)] = factor * ubar[node];
                     });
  return Trace(std::move(out), dt, 0.0);
}

Grid2D image_gradient(const VelocityModel& model, const Wavefield& acceleration,
                      const ShotGather& residual, std::size_t nt, double dt, const PmlConfig& pml) {
  check_residual(residual, nt, dt);
  if (acceleration.nx != model.nx() || acceleration.nz != model.nz()) {
    throw MismatchError("stored wavefield does not match the model grid");
  }
  AcousticPropagator prop(model, dt, pml);
  const auto stencils = stencils_for(prop, model, residual);
  // dJ/du^n = w_n (u^n - d^n) = -w_n r^n
  std::vector<double> w = trapezoid_weights(nt, dt);
  for (double& x : w) x = -x;
  const std::size_t nx = model.nx();
  const std::size_t nz = model.nz();
  const std::size_t stride = acceleration.stride;
  Grid2D grad(nx, nz, 0.0);
  prop.adjoint_sweep(nt, receiver_injector(stencils, residual, w),
                     [&](long n, std::span<const double> ubar) {
                       if (n < 0 || static_cast<std::size_t>(n) % stride != 0) return;
                       const std::size_t k = static_cast<std::size_t>(n) / stride;
                       if (k >= acceleration.nt) return;
                       const float* a = &acceleration.data[k * nx * nz];
                       for (std::size_t i = 0; i < nx; ++i) {
                         const double* ub = &ubar[prop.interior_node(i, 0)];
                         double* g = &grad.data[i * nz];
                         const float* ai = a + i * nz;
                         for (std::size_t j = 0; j < nz; ++j) g[j] += ub[j] * static_cast<double>(ai[j]);
                       }
                     });
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < nz; ++j) {
      grad(i, j) *= -prop.step_scale(prop.interior_node(i, j)) * static_cast<double>(stride);
    }
  }
  return grad;
}

Grid2D image_gradient(const VelocityModel& model, const SourceTerm& source,
                      const ShotGather& residual, std::size_t nt, double dt, const PmlConfig& pml) {
  auto fwd = forward(model, source, residual.receiver_positions, nt, dt, pml, true);
  return image_gradient(model, *fwd.acceleration, residual, nt, dt, pml);
}

}  // namespace rgls
