#pragma once

#include <complex>
#include <span>
#include <vector>

namespace stx::fft {

using cplx = std::complex<double>;

// Unnormalized forward DFT, in place. Any length; plans are cached per size.
void forward(std::span<cplx> data);

// Inverse DFT including the 1/n factor, in place.
void inverse(std::span<cplx> data);

}  // namespace stx::fft
