#include "rgls/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rgls/fft.hpp"

namespace rgls {
namespace {

using Complex = std::complex<double>;

std::size_t transform_length(std::size_t n, Extension ext) {
  return ext == Extension::periodic ? n : fft::padded_length(n);
}

std::vector<Complex> to_frequency(const Trace& u, std::size_t nfft) {
  std::vector<Complex> buf(nfft, Complex{0.0, 0.0});
  std::copy(u.samples.begin(), u.samples.end(), buf.begin());
  fft::transform(buf, fft::Direction::forward);
  return buf;
}

std::vector<double> to_time(std::vector<Complex> buf, std::size_t n) {
  const double scale = 1.0 / static_cast<double>(buf.size());
  fft::transform(buf, fft::Direction::backward);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() * scale;
  return out;
}

bool is_nyquist_bin(std::size_t k, std::size_t nfft) { return nfft % 2 == 0 && 2 * k == nfft; }

void check_band(const Trace& u, const FrequencyBand& band) {
  const double nyquist = 0.5 / u.dt;
  if (band.omega_max < 0.0 || band.taper_width < 0.0)
    throw std::invalid_argument("lowpass: negative band parameters");
  if (band.omega_max > nyquist * (1.0 + 1e-12))
    throw std::invalid_argument("lowpass: omega_max exceeds Nyquist");
}

}  // namespace

Trace::Trace(std::vector<double> s, double dt_, double t0_)
    : samples(std::move(s)), dt(dt_), t0(t0_) {
  if (samples.size() < 2) throw std::invalid_argument("Trace: need at least two samples");
  if (!(dt > 0.0)) throw std::invalid_argument("Trace: dt must be positive");
}

Trace Trace::zeros_like() const { return Trace(std::vector<double>(samples.size(), 0.0), dt, t0); }

FrequencyBand FrequencyBand::with_default_taper(double omega_max) {
  return FrequencyBand{omega_max, 0.2 * omega_max};
}

double FrequencyBand::gain(double f) const {
  const double a = std::abs(f);
  if (a <= omega_max) return 1.0;
  if (taper_width <= 0.0 || a >= omega_max + taper_width) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (a - omega_max) / taper_width));
}

std::string_view to_string(LfaKind kind) {
  switch (kind) {
    case LfaKind::hilbert_sum: return "hilbert_sum";
    case LfaKind::square: return "square";
    case LfaKind::abs: return "abs";
  }
  return "unknown";
}

LfaKind parse_lfa_kind(std::string_view name) {
  if (name == "hilbert_sum") return LfaKind::hilbert_sum;
  if (name == "square") return LfaKind::square;
  if (name == "abs") return LfaKind::abs;
  throw std::invalid_argument("unknown LFA kind: " + std::string(name));
}

double ricker_value(double f_center, double tau) {
  const double a = std::numbers::pi * std::numbers::pi * f_center * f_center * tau * tau;
  return (1.0 - 2.0 * a) * std::exp(-a);
}

Trace ricker(double f_center, double dt, double duration, double delay) {
  if (!(f_center > 0.0)) throw std::invalid_argument("ricker: f_center must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("ricker: dt must be positive");
  if (!(dt < 1.0 / (10.0 * f_center)))
    throw std::invalid_argument("ricker: dt too coarse for the center frequency");
  const auto n = static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
  std::vector<double> s(std::max<std::size_t>(n, 2));
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = ricker_value(f_center, static_cast<double>(i) * dt - delay);
  return Trace(std::move(s), dt, 0.0);
}

Spectrum spectrum(const Trace& u) {
  auto buf = to_frequency(u, u.size());
  for (auto& c : buf) c *= u.dt;
  return Spectrum{std::move(buf), 1.0 / (static_cast<double>(u.size()) * u.dt), u.size()};
}

Trace inverse_spectrum(const Spectrum& s, double t0) {
  const std::size_t n = s.coefficients.size();
  const double dt = 1.0 / (static_cast<double>(n) * s.df);
  auto buf = s.coefficients;
  for (auto& c : buf) c /= dt;
  return Trace(to_time(std::move(buf), s.n_time), dt, t0);
}

Trace hilbert(const Trace& u, Extension ext) {
  const std::size_t nfft = transform_length(u.size(), ext);
  auto buf = to_frequency(u, nfft);
  for (std::size_t k = 0; k < nfft; ++k) {
    const double f = fft::bin_frequency(k, nfft, u.dt);
    if (k == 0 || is_nyquist_bin(k, nfft)) {
      buf[k] = 0.0;
    } else {
      buf[k] *= f > 0.0 ? Complex{0.0, -1.0} : Complex{0.0, 1.0};
    }
  }
  return Trace(to_time(std::move(buf), u.size()), u.dt, u.t0);
}

Trace envelope(const Trace& u, Extension ext) {
  Trace h = hilbert(u, ext);
  for (std::size_t i = 0; i < u.size(); ++i) h.samples[i] = std::hypot(u.samples[i], h.samples[i]);
  return h;
}

Trace lfa(const Trace& u, LfaKind kind, Extension ext) {
  Trace out = u;
  switch (kind) {
    case LfaKind::hilbert_sum: {
      const Trace env = envelope(u, ext);
      for (std::size_t i = 0; i < u.size(); ++i) out.samples[i] += env.samples[i];
      break;
    }
    case LfaKind::square:
      for (auto& x : out.samples) x *= x;
      break;
    case LfaKind::abs:
      for (auto& x : out.samples) x = std::abs(x);
      break;
  }
  return out;
}

Trace lowpass(const Trace& u, const FrequencyBand& band, Extension ext) {
  check_band(u, band);
  const std::size_t nfft = transform_length(u.size(), ext);
  auto buf = to_frequency(u, nfft);
  for (std::size_t k = 0; k < nfft; ++k) buf[k] *= band.gain(fft::bin_frequency(k, nfft, u.dt));
  return Trace(to_time(std::move(buf), u.size()), u.dt, u.t0);
}

namespace {

struct DerivativeSpectra {
  std::vector<Complex> v, d1, d2;
};

DerivativeSpectra derivative_spectra(const Trace& u, const FrequencyBand& band, std::size_t nfft) {
  const auto spec = to_frequency(u, nfft);
  DerivativeSpectra out{std::vector<Complex>(nfft), std::vector<Complex>(nfft), std::vector<Complex>(nfft)};
  for (std::size_t k = 0; k < nfft; ++k) {
    const double f = fft::bin_frequency(k, nfft, u.dt);
    const Complex x = spec[k] * band.gain(f);
    const double w = 2.0 * std::numbers::pi * f;
    out.v[k] = x;
    out.d1[k] = is_nyquist_bin(k, nfft) ? Complex{} : x * Complex{0.0, w};
    out.d2[k] = -w * w * x;
  }
  return out;
}

}  // namespace

BandlimitedSignal lowpass_with_derivatives(const Trace& u, const FrequencyBand& band,
                                           Extension ext) {
  check_band(u, band);
  const std::size_t nfft = transform_length(u.size(), ext);
  auto s = derivative_spectra(u, band, nfft);
  return BandlimitedSignal{to_time(std::move(s.v), u.size()), to_time(std::move(s.d1), u.size()),
                           to_time(std::move(s.d2), u.size()), 0};
}

BandlimitedSignal lowpass_with_derivatives_extended(const Trace& u, const FrequencyBand& band) {
  check_band(u, band);
  const std::size_t nfft = fft::padded_length(u.size());
  auto s = derivative_spectra(u, band, nfft);
  const std::size_t lead = (nfft - u.size()) / 2;
  auto rotate = [&](std::vector<Complex> spec) {
    auto x = to_time(std::move(spec), nfft);
    std::rotate(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nfft - lead), x.end());
    return x;
  };
  return BandlimitedSignal{rotate(std::move(s.v)), rotate(std::move(s.d1)), rotate(std::move(s.d2)), lead};
}

double trapezoid(std::span<const double> f, double dt) {
  if (f.size() < 2) throw std::invalid_argument("trapezoid: need at least two samples");
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return s * dt;
}

std::vector<double> trapezoid_weights(std::size_t n, double dt) {
  std::vector<double> w(n, dt);
  if (n > 0) {
    w.front() *= 0.5;
    w.back() *= 0.5;
  }
  return w;
}

}  // namespace rgls
