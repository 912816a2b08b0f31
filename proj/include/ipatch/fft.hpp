#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace ipatch::fft {

/// Half spectrum of a real signal: floor(n/2)+1 bins, conjugate symmetry
/// implicit. original_length is kept so the inverse transform can tell even
/// and odd signal lengths apart.
struct ComplexSpectrum {
    std::vector<std::complex<double>> bins;
    std::size_t original_length = 0;
};

/// Forward real FFT. Bin m equals sum_t x[t] * exp(-2*pi*i*m*t/n).
/// Radix-2 for power-of-two lengths, direct DFT otherwise; both satisfy the
/// same oracle, speed only matters at power-of-two sizes here.
ComplexSpectrum rfft(const std::vector<double>& x);

/// Inverse of rfft. Throws if the bin count is inconsistent with
/// original_length.
std::vector<double> irfft(const ComplexSpectrum& s);

/// Circular cross-correlation, time domain, O(n^2):
///   out[tau] = sum_t q[(t+tau) mod n] * k[t].
/// Reference implementation the spectral path is tested against.
std::vector<double> circular_xcorr_oracle(const std::vector<double>& q,
                                          const std::vector<double>& k);

/// Circular cross-correlation through the frequency domain:
///   irfft(rfft(q) .* conj(rfft(k))).
/// Agrees with circular_xcorr_oracle on all inputs (Wiener-Khinchin).
std::vector<double> circular_xcorr(const std::vector<double>& q,
                                   const std::vector<double>& k);

/// Circular convolution through the frequency domain:
///   out[s] = sum_t a[t] * b[(s-t) mod n].
std::vector<double> circular_conv(const std::vector<double>& a,
                                  const std::vector<double>& b);

/// out[i] = v[(i+tau) mod n]; tau may be negative or exceed n.
std::vector<double> roll(const std::vector<double>& v, long long tau);

}  // namespace ipatch::fft
