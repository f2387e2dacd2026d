#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rgls {

/// Uniformly sampled time series at one receiver: samples[i] is the value at t0 + i * dt.
struct Trace {
  std::vector<double> samples;
  double dt = 0.0;
  double t0 = 0.0;

  Trace() = default;
  /// Throws std::invalid_argument unless samples.size() >= 2 and dt > 0.
  Trace(std::vector<double> samples, double dt, double t0 = 0.0);

  std::size_t size() const { return samples.size(); }
  double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  double t_end() const { return time(samples.size() - 1); }
  double duration() const { return t_end() - t0; }

  /// A trace with the same sampling and all samples zero.
  Trace zeros_like() const;
};

/// Two-sided spectrum scaled to approximate the continuous transform:
/// coefficients[k] = dt * sum_j x_j exp(-2 pi i jk/N), bin spacing df = 1/(N dt).
struct Spectrum {
  std::vector<std::complex<double>> coefficients;
  double df = 0.0;
  std::size_t n_time = 0;
};

/// Low-pass passband [0, omega_max] (Hz) followed by a raised-cosine rolloff of width taper_width.
struct FrequencyBand {
  double omega_max = 0.0;
  double taper_width = 0.0;

  /// taper_width = 0.2 * omega_max.
  static FrequencyBand with_default_taper(double omega_max);
  /// Gain of the filter at frequency f (Hz, either sign).
  double gain(double f) const;
};

/// How a finite trace is extended before a DFT.
///  zero_padded: zero padding to the next power of two >= 2n (compactly supported recordings).
///  periodic:    no padding; the record is treated as one period.
enum class Extension { zero_padded, periodic };

enum class LfaKind { hilbert_sum, square, abs };

std::string_view to_string(LfaKind kind);
/// Accepts "hilbert_sum", "square", "abs"; throws std::invalid_argument otherwise.
LfaKind parse_lfa_kind(std::string_view name);

/// Normalized Ricker wavelet (peak 1 at t = delay), sampled from t = 0 over `duration` seconds.
/// Throws std::invalid_argument for f_center <= 0, dt <= 0, or dt >= 1/(10 f_center).
Trace ricker(double f_center, double dt, double duration, double delay);
double ricker_value(double f_center, double tau);

Spectrum spectrum(const Trace& u);
/// Inverse of spectrum(); returns the real part.
Trace inverse_spectrum(const Spectrum& s, double t0 = 0.0);

/// Hilbert transform via -i sgn(f) in the frequency domain; DC and Nyquist bins are zeroed.
Trace hilbert(const Trace& u, Extension ext = Extension::zero_padded);
/// |u + i H u|
Trace envelope(const Trace& u, Extension ext = Extension::zero_padded);

/// Low-frequency augmentation:
///   hilbert_sum: u + |u + i H u|;  square: u^2;  abs: |u|.
Trace lfa(const Trace& u, LfaKind kind, Extension ext = Extension::zero_padded);

/// Zero-phase frequency-domain low-pass. Throws std::invalid_argument if omega_max exceeds Nyquist.
Trace lowpass(const Trace& u, const FrequencyBand& band, Extension ext = Extension::zero_padded);

/// Band-limited signal together with its spectral first and second time derivatives.
/// Sample i corresponds to time t0 + (i - lead) * dt.
struct BandlimitedSignal {
  std::vector<double> value;
  std::vector<double> first;
  std::vector<double> second;
  std::size_t lead = 0;
};
BandlimitedSignal lowpass_with_derivatives(const Trace& u, const FrequencyBand& band,
                                           Extension ext = Extension::zero_padded);
/// Zero-padded variant that keeps the whole transform period: the filtered signal
/// continues into the padding, half of it before t0 and half after the record.
BandlimitedSignal lowpass_with_derivatives_extended(const Trace& u, const FrequencyBand& band);

double trapezoid(std::span<const double> f, double dt);
/// Quadrature weights matching trapezoid(): dt everywhere, dt/2 at both ends.
std::vector<double> trapezoid_weights(std::size_t n, double dt);

}  // namespace rgls
