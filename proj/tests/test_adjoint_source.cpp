#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rgls/adjoint_source.hpp"
#include "rgls/errors.hpp"

using namespace rgls;

namespace {

constexpr double kDt = 1e-3;
constexpr double kFreq = 10.0;

Trace pulse(double t_arrival, double duration = 1.0) {
  const auto n = static_cast<std::size_t>(std::lround(duration / kDt)) + 1;
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = ricker_value(kFreq, kDt * static_cast<double>(i) - t_arrival);
  return Trace(std::move(s), kDt);
}

ShotGather gather_of(std::vector<Trace> traces) {
  ShotGather g;
  g.dt = traces.front().dt;
  g.nt = traces.front().size();
  for (std::size_t r = 0; r < traces.size(); ++r) g.receiver_positions.push_back({0.0, 10.0 * r});
  g.traces = std::move(traces);
  return g;
}

double norm(const ShotGather& g) {
  double s = 0.0;
  for (const auto& t : g.traces)
    for (double x : t.samples) s += x * x;
  return std::sqrt(s);
}

AdjointSourceSpec spec(double alpha) {
  auto s = AdjointSourceSpec::rgls_default(kFreq);
  s.alpha = alpha;
  s.stride = 1;
  return s;
}

// Envelope-free alignment measure: fine cross-correlation lag of a against b, in samples.
double lag(const Trace& a, const Trace& b) { return oracle::xcorr_lag_fine(a.samples, b.samples, 300); }

}  // namespace

TEST_CASE("least-squares residual is the elementwise difference") {
  std::mt19937 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Trace> a, b;
  for (int r = 0; r < 4; ++r) {
    std::vector<double> x(50), y(50);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    a.emplace_back(x, kDt);
    b.emplace_back(y, kDt);
  }
  const auto obs = gather_of(a), pred = gather_of(b);
  const auto res = ls_residual(obs, pred);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t i = 0; i < 50; ++i)
      CHECK(res.traces[r].samples[i] == obs.traces[r].samples[i] - pred.traces[r].samples[i]);

  CHECK(norm(ls_residual(obs, obs)) == 0.0);
  ShotGather zero = pred;
  for (auto& t : zero.traces) t = t.zeros_like();
  CHECK(ls_residual(obs, zero).traces[2].samples == obs.traces[2].samples);
}

TEST_CASE("misaligned gathers are rejected") {
  const auto a = gather_of({pulse(0.3), pulse(0.4)});
  const auto b = gather_of({pulse(0.3)});
  CHECK_THROWS_AS(ls_residual(a, b), MismatchError);
  CHECK_THROWS_AS(rgls_residual(a, b, spec(0.1)), MismatchError);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(spec(0.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec(1.5).validate(), std::invalid_argument);
  CHECK_NOTHROW(spec(1.0).validate());
  AdjointSourceSpec ls;
  ls.alpha = 0.0;  // ignored in ls mode
  CHECK_NOTHROW(ls.validate());
  CHECK(parse_residual_mode("rgls") == ResidualMode::rgls);
  CHECK_THROWS_AS(parse_residual_mode("l2"), std::invalid_argument);
}

TEST_CASE("identical gathers give a vanishing rgls residual") {
  const auto g = gather_of({pulse(0.3), pulse(0.5), pulse(0.62)});
  const auto res = rgls_residual(g, g, spec(0.1));
  CHECK(res.fallbacks == 0);
  CHECK(norm(res.residual) < 1e-6 * norm(g));
}

TEST_CASE("residual vanishes as alpha goes to zero") {
  const auto obs = gather_of({pulse(0.46)});
  const auto pred = gather_of({pulse(0.4)});
  double prev = norm(ls_residual(obs, pred));
  for (double alpha : {0.1, 0.01, 1e-3, 1e-5}) {
    const double n = norm(rgls_residual(obs, pred, spec(alpha)).residual);
    CHECK(n < prev);
    prev = n;
  }
  CHECK(prev < 1e-3 * norm(pred));
}

TEST_CASE("cycle-skipped shift: warped data move a fraction alpha toward the observation") {
  const double period = 1.0 / kFreq;
  const Trace u = pulse(0.4);
  const Trace d = pulse(0.4 + 0.6 * period);
  const auto res = rgls_residual(gather_of({d}), gather_of({u}), spec(0.1));
  REQUIRE(res.registered[0]);
  Trace dtilde = res.residual.traces[0];
  for (std::size_t i = 0; i < u.size(); ++i) dtilde.samples[i] += u.samples[i];

  const double full = lag(d, u);
  const double part = lag(dtilde, u);
  CHECK(full == Catch::Approx(60.0).margin(0.5));
  CHECK(part > 0.0);
  CHECK(std::abs(part) <= 0.1 * std::abs(full) + 1.0);
}

TEST_CASE("phase proximity holds over a range of single-arrival shifts") {
  const double period = 1.0 / kFreq;
  for (double shift : {-1.5, -0.6, -0.3, 0.3, 0.6, 1.2, 2.0}) {
    CAPTURE(shift);
    const Trace u = pulse(0.45);
    const Trace d = pulse(0.45 + shift * period);
    const auto res = rgls_residual(gather_of({d}), gather_of({u}), spec(0.1));
    Trace dtilde = res.residual.traces[0];
    for (std::size_t i = 0; i < u.size(); ++i) dtilde.samples[i] += u.samples[i];
    const double full = lag(d, u), part = lag(dtilde, u);
    CHECK(std::abs(part) <= 0.1 * std::abs(full) + 1.0);
    CHECK((part > 0.0) == (full > 0.0));
  }
}

TEST_CASE("alpha one on an exactly shifted pair reproduces the least-squares residual") {
  const Trace u = pulse(0.4);
  const Trace d = pulse(0.43);  // 30 samples, a constant shift is in the spline space
  auto s = spec(1.0);
  s.sched.penalty_weight = 1e-9;
  s.sched.newton_tol = 1e-14;
  s.sched.newton_max_iter = 60;
  s.lfa_kind = LfaKind::abs;  // pointwise, so the transformed traces are exact shifts too
  const auto res = rgls_residual(gather_of({d}), gather_of({u}), s);
  const auto ls = ls_residual(gather_of({d}), gather_of({u}));
  CHECK(oracle::max_abs_diff(res.residual.traces[0].samples, ls.traces[0].samples) < 1e-6);
}

TEST_CASE("dead predicted traces fall back to the least-squares residual") {
  const auto obs = gather_of({pulse(0.3), pulse(0.4)});
  auto pred = gather_of({pulse(0.3), pulse(0.4)});
  pred.traces[1] = pred.traces[1].zeros_like();
  const auto res = rgls_residual(obs, pred, spec(0.1));
  CHECK(res.fallbacks == 1);
  CHECK_FALSE(res.registered[1]);
  CHECK(res.residual.traces[1].samples == obs.traces[1].samples);
}
