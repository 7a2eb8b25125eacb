#pragma once

#include <complex>
#include <vector>

namespace recon {

// Unnormalized forward 2D DFT of a real h x w frame (row-major).
// Output is the full complex spectrum, row-major, frequency index
// ky in [0, h), kx in [0, w) with the usual wrap-around convention.
std::vector<std::complex<double>> fft2(const std::vector<double>& frame, int h, int w);

// Inverse 2D DFT with 1/(h*w) normalization; returns the real part.
std::vector<double> ifft2_real(const std::vector<std::complex<double>>& spec, int h, int w);

// Signed frequency of index k on an axis of length n: k <= n/2 ? k : k - n.
inline int signed_freq(int k, int n) { return k <= n / 2 ? k : k - n; }

}  // namespace recon
