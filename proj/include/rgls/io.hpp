#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rgls/signal.hpp"
#include "rgls/spline_warp.hpp"
#include "rgls/survey.hpp"
#include "rgls/wave_solver.hpp"

namespace rgls::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Failure to read or write a file; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two columns "t,value" with a header line.
void write_trace_csv(const fs::path& path, const Trace& u);
Trace read_trace_csv(const fs::path& path);

/// Little-endian float32 samples plus a "<path>.json" sidecar {n, dt, t0}.
void write_trace_bin(const fs::path& path, const Trace& u);
Trace read_trace_bin(const fs::path& path);

/// Little-endian float32, x-major with z fastest, sidecar {nx, nz, dx, origin: [x, z]}.
void write_model(const fs::path& path, const VelocityModel& model);
VelocityModel read_model(const fs::path& path);

/// dir/manifest.json (source, receivers, dt, nt) plus dir/traces.bin holding one
/// float32 block of nt samples per receiver, and dir/wavelet.bin.
void write_gather(const fs::path& dir, const ShotGather& gather);
ShotGather read_gather(const fs::path& dir);

/// One subdirectory shot_NNNN per gather plus survey.json with the shot count.
void write_survey(const fs::path& dir, const Survey& survey);
Survey read_survey(const fs::path& dir);

json to_json(const WarpModel& w);
WarpModel warp_from_json(const json& j);
json to_json(const AcquisitionGeometry& g);
AcquisitionGeometry geometry_from_json(const json& j);

void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

/// Writes rows of doubles under a header; values printed with full precision.
void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace rgls::io
