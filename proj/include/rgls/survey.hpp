#pragma once

#include <cstddef>
#include <vector>

#include "rgls/signal.hpp"

namespace rgls {

/// Physical position in meters; x horizontal, z depth.
struct Position {
  double x = 0.0;
  double z = 0.0;
};

/// Point source f_s(x, t): a wavelet injected at one position.
struct SourceTerm {
  Position position;
  Trace wavelet;
};

/// One shot: source plus receiver traces aligned with receiver_positions.
struct ShotGather {
  SourceTerm source;
  std::vector<Position> receiver_positions;
  std::vector<Trace> traces;
  double dt = 0.0;
  std::size_t nt = 0;

  std::size_t size() const { return traces.size(); }
};

using Survey = std::vector<ShotGather>;

/// Source/receiver layout of one shot.
struct ShotLayout {
  Position source;
  std::vector<Position> receivers;
};

struct AcquisitionGeometry {
  std::vector<ShotLayout> shots;
};

/// Throws MismatchError unless both gathers share receivers, dt and nt.
void check_aligned(const ShotGather& a, const ShotGather& b);
void check_aligned(const Survey& a, const Survey& b);

}  // namespace rgls
