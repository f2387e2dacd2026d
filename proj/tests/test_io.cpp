#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "rgls/io.hpp"

using namespace rgls;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rgls_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

double as_float(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

TEST_CASE("trace CSV round trip is exact") {
  const auto dir = scratch_dir("csv");
  const Trace u(random_values(57, 1), 0.004, 0.25);
  io::write_trace_csv(dir / "u.csv", u);
  const Trace back = io::read_trace_csv(dir / "u.csv");
  CHECK(back.samples == u.samples);
  CHECK(back.t0 == u.t0);
  CHECK(back.dt == Catch::Approx(u.dt).epsilon(1e-12));
}

TEST_CASE("binary trace keeps float32 samples and the sidecar") {
  const auto dir = scratch_dir("bin");
  const Trace u(random_values(33, 2), 0.002, -0.1);
  io::write_trace_bin(dir / "u.bin", u);
  CHECK(fs::file_size(dir / "u.bin") == 33 * sizeof(float));
  const auto meta = io::read_json(dir / "u.bin.json");
  CHECK(meta.at("n") == 33);
  const Trace back = io::read_trace_bin(dir / "u.bin");
  REQUIRE(back.size() == u.size());
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(back.samples[i] == as_float(u.samples[i]));
  CHECK(back.dt == u.dt);
  CHECK(back.t0 == u.t0);
}

TEST_CASE("velocity model file is z fastest with its sidecar") {
  const auto dir = scratch_dir("model");
  std::vector<double> v(20 * 17);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t k = 0; k < 17; ++k) v[i * 17 + k] = 3000.0 + 10.0 * i + k;
  const VelocityModel m(20, 17, 5.0, Position{100.0, 50.0}, v);
  io::write_model(dir / "m.bin", m);
  const auto meta = io::read_json(dir / "m.bin.json");
  CHECK(meta.at("nx") == 20);
  CHECK(meta.at("nz") == 17);
  CHECK(meta.at("origin")[0] == 100.0);

  std::ifstream f(dir / "m.bin", std::ios::binary);
  float second = 0.0f;
  f.seekg(sizeof(float));
  f.read(reinterpret_cast<char*>(&second), sizeof second);
  CHECK(second == 3001.0f);

  const VelocityModel back = io::read_model(dir / "m.bin");
  CHECK(back.same_grid(m));
  CHECK(back.values() == m.values());
}

TEST_CASE("shot gathers and surveys round trip") {
  const auto dir = scratch_dir("gather");
  ShotGather g;
  g.dt = 0.001;
  g.nt = 40;
  g.source = SourceTerm{{10.0, 20.0}, ricker(25.0, 0.001, 0.039, 0.04)};
  for (int r = 0; r < 3; ++r) {
    g.receiver_positions.push_back({100.0, 10.0 * r});
    g.traces.emplace_back(random_values(40, 10 + r), 0.001);
  }
  io::write_survey(dir, Survey{g, g});
  const Survey back = io::read_survey(dir);
  REQUIRE(back.size() == 2);
  const ShotGather& b = back[1];
  CHECK(b.nt == g.nt);
  CHECK(b.dt == g.dt);
  CHECK(b.source.position.z == 20.0);
  REQUIRE(b.receiver_positions.size() == 3);
  CHECK(b.receiver_positions[2].z == 20.0);
  CHECK(fs::file_size(dir / "shot_0001" / "traces.bin") == 3 * 40 * sizeof(float));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < 40; ++i) CHECK(b.traces[r].samples[i] == as_float(g.traces[r].samples[i]));
}

TEST_CASE("warp JSON round trip is exact") {
  const WarpModel w(SplineBasis::uniform(0.0, 1.0, 4), {0.01, 0.26, 0.49, 0.77, 1.0},
                    {1.0, 0.9, 1.1, 1.0, 0.95});
  const WarpModel back = io::warp_from_json(io::to_json(w));
  CHECK(back.basis.node_times() == w.basis.node_times());
  CHECK(back.rho == w.rho);
  CHECK(back.amp == w.amp);
}

TEST_CASE("geometry JSON round trip") {
  AcquisitionGeometry g;
  g.shots.push_back({{1.0, 2.0}, {{3.0, 4.0}, {5.0, 6.0}}});
  const auto back = io::geometry_from_json(io::to_json(g));
  REQUIRE(back.shots.size() == 1);
  CHECK(back.shots[0].receivers[1].x == 5.0);
}

TEST_CASE("missing files raise IoError naming the path") {
  const auto dir = scratch_dir("missing");
  try {
    io::read_model(dir / "nope.bin");
    FAIL("expected IoError");
  } catch (const io::IoError& e) {
    CHECK(std::string(e.what()).find("nope.bin") != std::string::npos);
  }
}
