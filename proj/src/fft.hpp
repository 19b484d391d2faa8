#pragma once

#include <cstddef>

#include "stmp/tensor.hpp"

namespace stmp::detail {

/// Unnormalized length-n DFT. forward uses exp(-j 2 pi i k / n), backward
/// exp(+j ...). Plans are cached per length and shared across threads.
void fft_forward(const cplx* in, cplx* out, std::size_t n);
void fft_backward(const cplx* in, cplx* out, std::size_t n);

}  // namespace stmp::detail
