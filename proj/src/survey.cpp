#include "rgls/survey.hpp"

#include "rgls/errors.hpp"

namespace rgls {

void check_aligned(const ShotGather& a, const ShotGather& b) {
  if (a.traces.size() != b.traces.size() || a.receiver_positions.size() != b.receiver_positions.size())
    throw MismatchError("gathers have different receiver counts");
  if (a.nt != b.nt || a.dt != b.dt) throw MismatchError("gathers have different sampling");
  for (std::size_t r = 0; r < a.traces.size(); ++r) {
    const Trace& ta = a.traces[r];
    const Trace& tb = b.traces[r];
    if (ta.size() != tb.size() || ta.dt != tb.dt) throw MismatchError("traces have different sampling");
  }
}

void check_aligned(const Survey& a, const Survey& b) {
  if (a.size() != b.size()) throw MismatchError("surveys have different shot counts");
  for (std::size_t s = 0; s < a.size(); ++s) check_aligned(a[s], b[s]);
}

}  // namespace rgls
