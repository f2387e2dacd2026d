#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace rgls::fft {

using Complex = std::complex<double>;

enum class Direction { forward, backward };

/// Unnormalized in-place complex DFT of any length (FFTW backend).
/// forward uses exp(-2 pi i jk/N); backward uses exp(+2 pi i jk/N) without the 1/N factor.
void transform(std::vector<Complex>& data, Direction dir);

/// Smallest power of two that is >= 2 * n.
std::size_t padded_length(std::size_t n);

/// Signed frequency (Hz) of bin k in an N-point DFT with sample interval dt.
/// The Nyquist bin (N even, k = N/2) is reported as +fs/2.
double bin_frequency(std::size_t k, std::size_t n, double dt);

}  // namespace rgls::fft
