#include "ipatch/fft.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ipatch::fft {

namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative in-place Cooley-Tukey, decimation in time. n must be a power of 2.
void fft_pow2(std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const cd wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const cd u = a[i + j];
                const cd v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

std::vector<cd> dft_naive(const std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    std::vector<cd> out(n);
    const double sign = inverse ? 2.0 : -2.0;
    for (std::size_t m = 0; m < n; ++m) {
        cd acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = sign * M_PI * static_cast<double>(m) * static_cast<double>(t) /
                               static_cast<double>(n);
            acc += a[t] * cd(std::cos(ang), std::sin(ang));
        }
        out[m] = acc;
    }
    return out;
}

// Unnormalized full complex transform.
std::vector<cd> fft_full(std::vector<cd> a, bool inverse) {
    if (is_pow2(a.size())) {
        fft_pow2(a, inverse);
        return a;
    }
    return dft_naive(a, inverse);
}

std::size_t half_bins(std::size_t n) { return n / 2 + 1; }

}  // namespace

ComplexSpectrum rfft(const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("rfft: empty input");
    const std::size_t n = x.size();
    std::vector<cd> a(x.begin(), x.end());
    a = fft_full(std::move(a), false);
    ComplexSpectrum s;
    s.original_length = n;
    s.bins.assign(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(half_bins(n)));
    return s;
}

std::vector<double> irfft(const ComplexSpectrum& s) {
    const std::size_t n = s.original_length;
    if (n == 0) throw std::invalid_argument("irfft: original_length not set");
    if (s.bins.size() != half_bins(n)) {
        throw std::invalid_argument("irfft: spectrum has " + std::to_string(s.bins.size()) +
                                    " bins, expected " + std::to_string(half_bins(n)) +
                                    " for length " + std::to_string(n));
    }
    // Expand to the full spectrum by conjugate symmetry, then inverse.
    std::vector<cd> a(n);
    for (std::size_t m = 0; m < s.bins.size(); ++m) a[m] = s.bins[m];
    for (std::size_t m = s.bins.size(); m < n; ++m) a[m] = std::conj(a[n - m]);
    a = fft_full(std::move(a), true);
    std::vector<double> out(n);
    for (std::size_t t = 0; t < n; ++t) out[t] = a[t].real() / static_cast<double>(n);
    return out;
}

std::vector<double> circular_xcorr_oracle(const std::vector<double>& q,
                                          const std::vector<double>& k) {
    if (q.size() != k.size()) {
        throw std::invalid_argument("circular_xcorr_oracle: length mismatch " +
                                    std::to_string(q.size()) + " vs " + std::to_string(k.size()));
    }
    const std::size_t n = q.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t tau = 0; tau < n; ++tau) {
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) acc += q[(t + tau) % n] * k[t];
        out[tau] = acc;
    }
    return out;
}

std::vector<double> circular_xcorr(const std::vector<double>& q,
                                   const std::vector<double>& k) {
    if (q.size() != k.size()) {
        throw std::invalid_argument("circular_xcorr: length mismatch");
    }
    ComplexSpectrum sq = rfft(q);
    const ComplexSpectrum sk = rfft(k);
    for (std::size_t m = 0; m < sq.bins.size(); ++m) sq.bins[m] *= std::conj(sk.bins[m]);
    return irfft(sq);
}

std::vector<double> circular_conv(const std::vector<double>& a,
                                  const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("circular_conv: length mismatch");
    }
    ComplexSpectrum sa = rfft(a);
    const ComplexSpectrum sb = rfft(b);
    for (std::size_t m = 0; m < sa.bins.size(); ++m) sa.bins[m] *= sb.bins[m];
    return irfft(sa);
}

std::vector<double> roll(const std::vector<double>& v, long long tau) {
    if (v.empty()) throw std::invalid_argument("roll: empty input");
    const long long n = static_cast<long long>(v.size());
    const long long shift = ((tau % n) + n) % n;
    std::vector<double> out(v.size());
    for (long long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>((i + shift) % n)];
    return out;
}

}  // namespace ipatch::fft
