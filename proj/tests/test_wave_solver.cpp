#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "rgls/errors.hpp"
#include "rgls/wave_solver.hpp"

using namespace rgls;
using Catch::Approx;

namespace {

double envelope_peak_time(const Trace& t) {
  const auto env = envelope(t);
  std::size_t best = 0;
  for (std::size_t i = 1; i < env.size(); ++i)
    if (env.samples[i] > env.samples[best]) best = i;
  // parabolic refinement
  if (best > 0 && best + 1 < env.size()) {
    const double a = env.samples[best - 1], b = env.samples[best], c = env.samples[best + 1];
    const double den = a - 2 * b + c;
    if (den != 0.0) return t.time(best) + 0.5 * (a - c) / den * t.dt;
  }
  return t.time(best);
}

double envelope_peak(const Trace& t) {
  const auto env = envelope(t);
  double m = 0.0;
  for (double v : env.samples) m = std::max(m, v);
  return m;
}

double trace_misfit(const ShotGather& u, const ShotGather& d) {
  double j = 0.0;
  for (std::size_t r = 0; r < u.size(); ++r) {
    std::vector<double> r2(u.nt);
    for (std::size_t n = 0; n < u.nt; ++n) r2[n] = std::pow(u.traces[r].samples[n] - d.traces[r].samples[n], 2);
    j += 0.5 * trapezoid(r2, u.dt);
  }
  return j;
}

ShotGather residual_of(const ShotGather& d, const ShotGather& u) {
  ShotGather r = u;
  for (std::size_t k = 0; k < r.size(); ++k)
    for (std::size_t n = 0; n < r.nt; ++n) r.traces[k].samples[n] = d.traces[k].samples[n] - u.traces[k].samples[n];
  return r;
}

VelocityModel with_gaussian(const VelocityModel& base, double cx, double cz, double radius, double dv) {
  std::vector<double> v = base.values();
  for (std::size_t i = 0; i < base.nx(); ++i) {
    for (std::size_t k = 0; k < base.nz(); ++k) {
      const auto p = base.position(i, k);
      const double r2 = (std::pow(p.x - cx, 2) + std::pow(p.z - cz, 2)) / (radius * radius);
      v[i * base.nz() + k] += dv * std::exp(-r2);
    }
  }
  return VelocityModel(base.nx(), base.nz(), base.dx(), base.origin(), v);
}

}  // namespace

TEST_CASE("velocity model invariants") {
  const auto m = VelocityModel::constant(20, 16, 5.0, 2500.0);
  const auto s = m.squared_slowness();
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t k = 0; k < 16; ++k) CHECK(m.squared_slowness(i, k) * m(i, k) * m(i, k) == Approx(1.0).epsilon(1e-12));
  const auto back = VelocityModel::from_squared_slowness(20, 16, 5.0, {}, s);
  for (std::size_t i = 0; i < back.values().size(); ++i) CHECK(back.values()[i] == Approx(2500.0).epsilon(1e-12));
  CHECK_THROWS_AS(VelocityModel::constant(15, 16, 5.0, 2500.0), std::invalid_argument);
  CHECK_THROWS_AS(VelocityModel::constant(16, 16, 0.0, 2500.0), std::invalid_argument);
  CHECK_THROWS_AS(VelocityModel::constant(16, 16, 5.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(VelocityModel(16, 16, 5.0, {}, std::vector<double>(10, 1.0)), std::invalid_argument);
}

TEST_CASE("stability dt follows the CFL formula") {
  const auto m = VelocityModel::constant(32, 32, 5.0, 3000.0);
  const double expect = 0.9 * 5.0 / (3000.0 * std::sqrt(2.0) * (9.0 / 8.0 + 1.0 / 24.0));
  CHECK(stability_dt(m) == Approx(expect).epsilon(1e-14));
  CHECK(stability_dt(m) == Approx(9.0914e-4).epsilon(1e-4));
  CHECK(stability_dt(VelocityModel::constant(32, 32, 5.0, 6000.0)) == Approx(expect / 2).epsilon(1e-14));
  CHECK(stability_dt(VelocityModel::constant(32, 32, 10.0, 3000.0)) == Approx(expect * 2).epsilon(1e-14));
}

TEST_CASE("pml configuration checks") {
  CHECK_THROWS_AS(PmlConfig::tuned(3000, 5, 6).validate(), std::invalid_argument);
  PmlConfig bad;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(PmlConfig::tuned(3000, 5).validate());
  CHECK_NOTHROW(PmlConfig::reflecting().validate());
}

TEST_CASE("adjoint of the source-to-receiver map passes the dot-product test") {
  std::mt19937 rng(17);
  std::normal_distribution<double> g;
  auto model = with_gaussian(VelocityModel::constant(40, 36, 10.0, 2000.0), 200, 180, 60, 400);
  const std::size_t nt = 300;
  const double dt = stability_dt(model);
  for (const auto& pml : {PmlConfig::tuned(2400, 10.0, 10), PmlConfig::reflecting()}) {
    std::vector<double> f(nt);
    for (auto& v : f) v = g(rng);
    const SourceTerm src{{105.0, 122.0}, Trace(f, dt)};
    const std::vector<Position> recs{{300.0, 40.0}, {333.3, 301.7}, {12.5, 250.0}};
    const auto fwd = forward(model, src, recs, nt, dt, pml);
    ShotGather r = fwd.gather;
    for (auto& t : r.traces)
      for (auto& v : t.samples) v = g(rng);
    double lhs = 0.0;
    for (std::size_t k = 0; k < recs.size(); ++k)
      for (std::size_t n = 0; n < nt; ++n) lhs += fwd.gather.traces[k].samples[n] * r.traces[k].samples[n];
    const auto ft = adjoint_at_source(model, src.position, r, nt, dt, pml);
    double rhs = 0.0;
    for (std::size_t n = 0; n < nt; ++n) rhs += f[n] * ft.samples[n];
    INFO("lhs " << lhs << " rhs " << rhs);
    CHECK(std::abs(lhs - rhs) < 1e-6 * std::abs(lhs));
  }
}

TEST_CASE("adjoint field agrees with the source-side adjoint and vanishes for zero residual") {
  const auto model = VelocityModel::constant(32, 32, 10.0, 2000.0);
  const std::size_t nt = 120;
  const double dt = stability_dt(model);
  const auto pml = PmlConfig::tuned(2000, 10.0, 10);
  ShotGather r;
  r.dt = dt;
  r.nt = nt;
  r.receiver_positions = {{200.0, 150.0}};
  r.traces = {Trace(std::vector<double>(nt, 0.0), dt)};
  const auto q0 = adjoint(model, r, nt, dt, pml);
  for (float v : q0.data) CHECK(v == 0.0f);

  r.traces[0] = ricker(20.0, dt, (nt - 1) * dt, 0.05);
  const auto q = adjoint(model, r, nt, dt, pml);
  const auto ft = adjoint_at_source(model, {100.0, 100.0}, r, nt, dt, pml);
  const double factor = dt * dt * 2000.0 * 2000.0 / 100.0;
  for (std::size_t n = 0; n + 1 < nt; ++n) {
    CHECK(ft.samples[n] == Approx(factor * q.at(n + 1, 10, 10)).margin(1e-6 * std::abs(factor) + 1e-12));
  }
}

TEST_CASE("adjoint field focuses on the source at the reciprocal time") {
  const auto model = VelocityModel::constant(80, 40, 10.0, 2000.0);
  const double dt = stability_dt(model);
  const std::size_t nt = 700;
  const auto pml = PmlConfig::tuned(2000, 10.0);
  const SourceTerm src{{100.0, 200.0}, ricker(15.0, dt, 0.2, 0.1)};
  const std::vector<Position> recs{{700.0, 200.0}};
  const auto fwd = forward(model, src, recs, nt, dt, pml);
  const auto q = adjoint(model, fwd.gather, nt, dt, pml);
  // q at the source is the time-reversed correlation; it peaks 2 * (offset / v) before the record's arrival.
  std::vector<double> at_src(nt);
  for (std::size_t n = 0; n < nt; ++n) at_src[n] = q.at(n, 10, 20);
  const double t_arrival = envelope_peak_time(fwd.gather.traces[0]);
  const double t_focus = envelope_peak_time(Trace(at_src, dt));
  CHECK(t_focus == Approx(t_arrival - 600.0 / 2000.0).margin(4 * dt));
}

TEST_CASE("first arrival traveltime in a homogeneous medium") {
  const auto model = VelocityModel::constant(220, 60, 5.0, 3000.0);
  const double dt = stability_dt(model);
  const double delay = 0.1;
  const std::size_t nt = static_cast<std::size_t>(0.6 / dt);
  const SourceTerm src{{75.0, 150.0}, ricker(15.0, dt, 0.2, delay)};
  const std::vector<Position> recs{{975.0, 150.0}};
  const auto out = forward(model, src, recs, nt, dt, PmlConfig::tuned(3000, 5.0)).gather;
  const double t = envelope_peak_time(out.traces[0]) - delay;
  CHECK(t == Approx(0.3).margin(2 * dt));
}

TEST_CASE("geometric spreading in 2D goes as one over root r") {
  const auto model = VelocityModel::constant(260, 40, 5.0, 3000.0);
  const double dt = stability_dt(model);
  const std::size_t nt = static_cast<std::size_t>(0.5 / dt);
  const SourceTerm src{{100.0, 100.0}, ricker(15.0, dt, 0.2, 0.1)};
  const std::vector<Position> recs{{250.0, 100.0}, {700.0, 100.0}};
  const auto out = forward(model, src, recs, nt, dt, PmlConfig::tuned(3000, 5.0)).gather;
  const double ratio = envelope_peak(out.traces[0]) / envelope_peak(out.traces[1]);
  CHECK(ratio == Approx(2.0).epsilon(0.15));
}

TEST_CASE("grid refinement converges at better than third order") {
  // Fixed small Courant number so the spatial error dominates.
  // Record ends before any wall reflection reaches the receiver.
  const double v = 2000.0, courant = 0.05, t_end = 0.31;
  const Position s{400.0, 400.0}, r{520.0, 480.0};
  auto run = [&](double dx) {
    const auto n = static_cast<std::size_t>(std::lround(800.0 / dx)) + 1;
    const auto model = VelocityModel::constant(n, n, dx, v);
    const double dt = courant * dx / v;
    const auto nt = static_cast<std::size_t>(std::lround(t_end / dt)) + 1;
    const SourceTerm src{s, ricker(8.0, dt, t_end, 0.15)};
    return forward(model, src, std::vector<Position>{r}, nt, dt, PmlConfig::reflecting()).gather.traces[0];
  };
  const auto coarse = run(20.0), mid = run(10.0), fine = run(5.0), ref = run(2.5);
  auto error = [&](const Trace& t) {
    const std::size_t step = static_cast<std::size_t>(std::lround(t.dt / ref.dt));
    double e = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x = ref.samples[i * step];
      e += std::pow(t.samples[i] - x, 2);
      norm += x * x;
    }
    return std::sqrt(e / norm);
  };
  const double e20 = error(coarse), e10 = error(mid), e5 = error(fine);
  INFO("errors " << e20 << " " << e10 << " " << e5);
  CHECK(e20 / e10 >= 8.0);
  CHECK(e10 / e5 >= 8.0);
}

TEST_CASE("discrete energy is conserved in a reflecting box") {
  const auto model = with_gaussian(VelocityModel::constant(64, 64, 5.0, 2000.0), 160, 160, 40, 500);
  const double dt = stability_dt(model);
  AcousticPropagator prop(model, dt, PmlConfig::reflecting());
  const auto wav = ricker(25.0, dt, 0.1, 0.05);
  const std::size_t node = prop.nearest_node(model, {100.0, 120.0});
  std::size_t n = 0;
  for (; n < wav.size(); ++n) {
    const PointInjection inj{node, wav.samples[n]};
    prop.step(std::span<const PointInjection>(&inj, 1));
  }
  const double e0 = prop.energy();
  double lo = e0, hi = e0;
  for (std::size_t k = 0; k < 1000; ++k) {
    prop.step({});
    const double e = prop.energy();
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  CHECK(e0 > 0.0);
  CHECK((hi - lo) / e0 < 1e-3);
}

TEST_CASE("pml reflections stay below 1e-3 of the incident energy") {
  const double dx = 5.0, v = 2500.0;
  const auto small = VelocityModel::constant(100, 100, dx, v);
  // 4x larger domain holding the small one in its centre
  const auto big = VelocityModel::constant(400, 400, dx, v, {-750.0, -750.0});
  const double dt = stability_dt(small);
  const std::size_t nt = static_cast<std::size_t>(0.5 / dt);
  const SourceTerm src{{250.0, 250.0}, ricker(20.0, dt, 0.2, 0.08)};
  const std::vector<Position> recs{{480.0, 250.0}, {250.0, 20.0}, {490.0, 490.0}, {400.0, 100.0}};
  const auto pml = PmlConfig::tuned(v, dx);
  const auto a = forward(small, src, recs, nt, dt, pml).gather;
  const auto b = forward(big, src, recs, nt, dt, pml).gather;
  double incident = 0.0, reflected = 0.0;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    for (std::size_t n = 0; n < nt; ++n) {
      incident += std::pow(b.traces[r].samples[n], 2);
      reflected += std::pow(a.traces[r].samples[n] - b.traces[r].samples[n], 2);
    }
  }
  INFO("reflected / incident = " << reflected / incident);
  CHECK(reflected / incident <= 1e-3);
}

TEST_CASE("image gradient matches finite differences of the misfit") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> uc(180.0, 460.0), us(-1.0, 1.0);
  const auto base = VelocityModel::constant(64, 64, 10.0, 2000.0);
  const auto truth = with_gaussian(base, 320, 320, 80, 250);
  const double dt = stability_dt(VelocityModel::constant(64, 64, 10.0, 2400.0));
  const std::size_t nt = 420;
  const auto pml = PmlConfig::tuned(2000, 10.0, 12);
  const SourceTerm src{{60.0, 200.0}, ricker(12.0, dt, 0.2, 0.1)};
  std::vector<Position> recs;
  for (int k = 0; k < 6; ++k) recs.push_back({580.0, 60.0 + 100.0 * k});
  const auto d = forward(truth, src, recs, nt, dt, pml).gather;

  for (int trial = 0; trial < 5; ++trial) {
    const auto model = with_gaussian(base, uc(rng), uc(rng), 70.0, 150.0 * us(rng));
    const auto fwd = forward(model, src, recs, nt, dt, pml, true);
    const auto grad = image_gradient(model, *fwd.acceleration, residual_of(d, fwd.gather), nt, dt, pml);

    // smooth perturbation in m that vanishes near the edges
    const double cx = uc(rng), cz = uc(rng);
    std::vector<double> dm(64 * 64);
    double pred = 0.0;
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t k = 0; k < 64; ++k) {
        const auto p = model.position(i, k);
        dm[i * 64 + k] = std::exp(-(std::pow(p.x - cx, 2) + std::pow(p.z - cz, 2)) / (90.0 * 90.0));
        if (i < 6 || k < 6 || i > 57 || k > 57) dm[i * 64 + k] = 0.0;
        pred += grad.data[i * 64 + k] * dm[i * 64 + k];
      }
    const auto m0 = model.squared_slowness();
    auto misfit_at = [&](double h) {
      std::vector<double> m(m0);
      for (std::size_t c = 0; c < m.size(); ++c) m[c] += h * dm[c];
      const auto mm = VelocityModel::from_squared_slowness(64, 64, 10.0, {}, m);
      return trace_misfit(forward(mm, src, recs, nt, dt, pml).gather, d);
    };
    const double h = 1e-3 * m0[0];
    const double fd = (misfit_at(h) - misfit_at(-h)) / (2 * h);
    INFO("trial " << trial << " fd " << fd << " adjoint " << pred);
    CHECK(std::abs(fd - pred) < 1e-3 * std::abs(fd));
  }
}

TEST_CASE("zero residual gives a zero gradient") {
  const auto model = VelocityModel::constant(32, 32, 10.0, 2000.0);
  const double dt = stability_dt(model);
  const SourceTerm src{{50.0, 150.0}, ricker(15.0, dt, 0.2, 0.1)};
  auto g = forward(model, src, std::vector<Position>{{250.0, 150.0}}, 100, dt, PmlConfig::tuned(2000, 10, 10)).gather;
  for (auto& t : g.traces) std::fill(t.samples.begin(), t.samples.end(), 0.0);
  const auto grad = image_gradient(model, src, g, 100, dt, PmlConfig::tuned(2000, 10, 10));
  for (double v : grad.data) CHECK(v == 0.0);
}

TEST_CASE("transmission gradient concentrates in the first Fresnel zone") {
  const double dx = 10.0, v0 = 2000.0, f = 15.0;
  const auto base = VelocityModel::constant(90, 50, dx, v0);
  const Position s{100.0, 250.0}, r{800.0, 250.0};
  const auto truth = with_gaussian(base, 450.0, 250.0, 40.0, 100.0);
  const double dt = stability_dt(truth);
  const std::size_t nt = static_cast<std::size_t>(0.7 / dt);
  const auto pml = PmlConfig::tuned(v0, dx);
  const SourceTerm src{s, ricker(f, dt, 0.2, 0.1)};
  const std::vector<Position> recs{r};
  const auto d = forward(truth, src, recs, nt, dt, pml).gather;
  const auto u = forward(base, src, recs, nt, dt, pml).gather;
  const auto grad = image_gradient(base, src, residual_of(d, u), nt, dt, pml);
  const double lambda = v0 / f;
  const double direct = std::hypot(r.x - s.x, r.z - s.z);
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < base.nx(); ++i)
    for (std::size_t k = 0; k < base.nz(); ++k) {
      const auto p = base.position(i, k);
      const double excess = std::hypot(p.x - s.x, p.z - s.z) + std::hypot(p.x - r.x, p.z - r.z) - direct;
      const double a = std::abs(grad(i, k));
      total += a;
      if (excess <= lambda / 2) inside += a;
    }
  INFO("fraction inside " << inside / total);
  CHECK(inside / total >= 0.8);
}

TEST_CASE("cfl violation is reported as an instability") {
  const auto model = VelocityModel::constant(40, 40, 5.0, 3000.0);
  const double dt = 1.6 * stability_dt(model);
  const SourceTerm src{{100.0, 100.0}, ricker(15.0, dt, 0.2, 0.1)};
  CHECK_THROWS_AS(forward(model, src, std::vector<Position>{{150.0, 100.0}}, 3000, dt, PmlConfig::tuned(3000, 5.0)),
                  InstabilityError);
}

TEST_CASE("positions outside the model are rejected") {
  const auto model = VelocityModel::constant(40, 40, 5.0, 3000.0);
  const double dt = stability_dt(model);
  const SourceTerm inside{{100.0, 100.0}, ricker(15.0, dt, 0.2, 0.1)};
  const SourceTerm outside{{-30.0, 100.0}, ricker(15.0, dt, 0.2, 0.1)};
  const auto pml = PmlConfig::tuned(3000, 5.0);
  CHECK_THROWS_AS(forward(model, outside, std::vector<Position>{{150.0, 100.0}}, 10, dt, pml), std::invalid_argument);
  CHECK_THROWS_AS(forward(model, inside, std::vector<Position>{{150.0, 300.0}}, 10, dt, pml), std::invalid_argument);
  const SourceTerm wrong_dt{{100.0, 100.0}, ricker(15.0, dt / 2, 0.2, 0.1)};
  CHECK_THROWS_AS(forward(model, wrong_dt, std::vector<Position>{{150.0, 100.0}}, 10, dt, pml), MismatchError);
}
