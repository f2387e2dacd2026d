#include "rgls/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rgls/errors.hpp"

static_assert(std::endian::native == std::endian::little, "float32 files assume a little-endian host");

namespace rgls::io {
namespace {

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, mode);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw IoError("cannot read " + path.string());
  return f;
}

fs::path sidecar(const fs::path& path) { return fs::path(path.string() + ".json"); }

void write_f32(std::ostream& os, std::span<const double> v) {
  std::vector<float> buf(v.begin(), v.end());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<double> read_f32(std::istream& is, std::size_t n, const fs::path& path) {
  std::vector<float> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<std::size_t>(is.gcount()) != n * sizeof(float))
    throw IoError("short read in " + path.string());
  return std::vector<double>(buf.begin(), buf.end());
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json pos_json(Position p) { return json::array({p.x, p.z}); }
Position pos_from(const json& j) { return Position{j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string shot_name(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shot_%04zu", s);
  return buf;
}

}  // namespace

void write_trace_csv(const fs::path& path, const Trace& u) {
  auto f = open_out(path);
  f << "t,value\n";
  for (std::size_t i = 0; i < u.size(); ++i) f << fmt(u.time(i)) << ',' << fmt(u.samples[i]) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

Trace read_trace_csv(const fs::path& path) {
  auto f = open_in(path);
  std::string line;
  std::getline(f, line);
  std::vector<double> t, v;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    double a = 0.0, b = 0.0;
    char comma = 0;
    if (!(ss >> a >> comma >> b) || comma != ',') throw IoError("bad CSV row in " + path.string());
    t.push_back(a);
    v.push_back(b);
  }
  if (t.size() < 2) throw IoError("too few samples in " + path.string());
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  return Trace(std::move(v), dt, t.front());
}

void write_trace_bin(const fs::path& path, const Trace& u) {
  {
    auto f = open_out(path, std::ios::binary);
    write_f32(f, u.samples);
  }
  write_json(sidecar(path), json{{"n", u.size()}, {"dt", u.dt}, {"t0", u.t0}});
}

Trace read_trace_bin(const fs::path& path) {
  const json meta = read_json(sidecar(path));
  auto f = open_in(path, std::ios::binary);
  return Trace(read_f32(f, meta.at("n").get<std::size_t>(), path), meta.at("dt").get<double>(),
               meta.at("t0").get<double>());
}

void write_model(const fs::path& path, const VelocityModel& model) {
  {
    auto f = open_out(path, std::ios::binary);
    write_f32(f, model.values());
  }
  write_json(sidecar(path), json{{"nx", model.nx()},
                                 {"nz", model.nz()},
                                 {"dx", model.dx()},
                                 {"origin", pos_json(model.origin())}});
}

VelocityModel read_model(const fs::path& path) {
  const json meta = read_json(sidecar(path));
  const auto nx = meta.at("nx").get<std::size_t>();
  const auto nz = meta.at("nz").get<std::size_t>();
  auto f = open_in(path, std::ios::binary);
  return VelocityModel(nx, nz, meta.at("dx").get<double>(), pos_from(meta.at("origin")),
                       read_f32(f, nx * nz, path));
}

void write_gather(const fs::path& dir, const ShotGather& g) {
  fs::create_directories(dir);
  json rec = json::array();
  for (const auto& p : g.receiver_positions) rec.push_back(pos_json(p));
  write_json(dir / "manifest.json", json{{"source", pos_json(g.source.position)},
                                         {"receivers", rec},
                                         {"dt", g.dt},
                                         {"nt", g.nt},
                                         {"traces", "traces.bin"},
                                         {"wavelet", "wavelet.bin"}});
  write_trace_bin(dir / "wavelet.bin", g.source.wavelet);
  auto f = open_out(dir / "traces.bin", std::ios::binary);
  for (const auto& t : g.traces) {
    if (t.size() != g.nt) throw MismatchError("write_gather: trace length differs from nt");
    write_f32(f, t.samples);
  }
}

ShotGather read_gather(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  ShotGather g;
  g.dt = m.at("dt").get<double>();
  g.nt = m.at("nt").get<std::size_t>();
  g.source.position = pos_from(m.at("source"));
  g.source.wavelet = read_trace_bin(dir / m.at("wavelet").get<std::string>());
  for (const auto& p : m.at("receivers")) g.receiver_positions.push_back(pos_from(p));
  const fs::path tp = dir / m.at("traces").get<std::string>();
  auto f = open_in(tp, std::ios::binary);
  for (std::size_t r = 0; r < g.receiver_positions.size(); ++r)
    g.traces.emplace_back(read_f32(f, g.nt, tp), g.dt, 0.0);
  return g;
}

void write_survey(const fs::path& dir, const Survey& survey) {
  fs::create_directories(dir);
  for (std::size_t s = 0; s < survey.size(); ++s) write_gather(dir / shot_name(s), survey[s]);
  write_json(dir / "survey.json", json{{"shots", survey.size()}});
}

Survey read_survey(const fs::path& dir) {
  const auto n = read_json(dir / "survey.json").at("shots").get<std::size_t>();
  Survey out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) out.push_back(read_gather(dir / shot_name(s)));
  return out;
}

json to_json(const WarpModel& w) {
  return json{{"node_times", w.basis.node_times()}, {"rho", w.rho}, {"amp", w.amp}};
}

WarpModel warp_from_json(const json& j) {
  return WarpModel(SplineBasis(j.at("node_times").get<std::vector<double>>()),
                   j.at("rho").get<std::vector<double>>(), j.at("amp").get<std::vector<double>>());
}

json to_json(const AcquisitionGeometry& g) {
  json shots = json::array();
  for (const auto& s : g.shots) {
    json rec = json::array();
    for (const auto& p : s.receivers) rec.push_back(pos_json(p));
    shots.push_back(json{{"source", pos_json(s.source)}, {"receivers", rec}});
  }
  return json{{"shots", shots}};
}

AcquisitionGeometry geometry_from_json(const json& j) {
  AcquisitionGeometry g;
  for (const auto& s : j.at("shots")) {
    ShotLayout l{pos_from(s.at("source")), {}};
    for (const auto& p : s.at("receivers")) l.receivers.push_back(pos_from(p));
    g.shots.push_back(std::move(l));
  }
  return g;
}

void write_json(const fs::path& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  auto f = open_in(path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  auto f = open_out(path);
  for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
  f << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << fmt(row[i]);
    f << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace rgls::io
