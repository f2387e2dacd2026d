#include "rgls/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace rgls::fft {
namespace {

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};

// Plans are created once per (length, direction) against an aligned scratch
// buffer; every execution goes through buffers with the same alignment, so the
// numerical result does not depend on the caller's allocation.
struct Plan {
  fftw_plan plan = nullptr;
  ~Plan() {
    if (plan != nullptr) fftw_destroy_plan(plan);
  }
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan plan_for(std::size_t n, Direction dir) {
  static std::map<std::pair<std::size_t, int>, std::unique_ptr<Plan>> cache;
  const int sign = dir == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto& slot = cache[{n, sign}];
  if (!slot) {
    std::unique_ptr<fftw_complex, FftwFree> scratch(fftw_alloc_complex(n));
    auto p = std::make_unique<Plan>();
    p->plan = fftw_plan_dft_1d(static_cast<int>(n), scratch.get(), scratch.get(), sign,
                               FFTW_ESTIMATE);
    if (p->plan == nullptr) throw std::runtime_error("fftw: plan creation failed");
    slot = std::move(p);
  }
  return slot->plan;
}

}  // namespace

void transform(std::vector<Complex>& data, Direction dir) {
  const std::size_t n = data.size();
  if (n == 0) return;
  fftw_plan plan = plan_for(n, dir);
  std::unique_ptr<fftw_complex, FftwFree> buf(fftw_alloc_complex(n));
  std::copy(data.begin(), data.end(), reinterpret_cast<Complex*>(buf.get()));
  fftw_execute_dft(plan, buf.get(), buf.get());
  std::copy_n(reinterpret_cast<const Complex*>(buf.get()), n, data.begin());
}

std::size_t padded_length(std::size_t n) {
  std::size_t p = 1;
  while (p < 2 * n) p <<= 1;
  return p;
}

double bin_frequency(std::size_t k, std::size_t n, double dt) {
  const double df = 1.0 / (static_cast<double>(n) * dt);
  if (2 * k <= n) return static_cast<double>(k) * df;
  return -static_cast<double>(n - k) * df;
}

}  // namespace rgls::fft
