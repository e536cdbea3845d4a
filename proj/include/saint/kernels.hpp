#pragma once

#include "saint/rng.hpp"
#include "saint/tensor.hpp"

namespace saint {

// Dense kernels. All of them are pure functions of their inputs and
// accumulate reductions in a fixed index order, so repeated calls are
// bit-identical across runs and platforms.

// [M,K] x [K,P] -> [M,P]. Accumulation runs over k in ascending order for
// every output element, matching a naive triple loop bit-for-bit.
Tensor matmul(const Tensor& a, const Tensor& b);

// Softmax over the last axis of a tensor of any rank, max-subtracted.
Tensor softmax_lastdim(const Tensor& x);

// Per-vector layer norm over the last axis (biased variance), then affine.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// tanh-approximation GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
Tensor gelu(const Tensor& x);

// Fill tensors from the generator in row-major order, advancing its stream.
Tensor rng_normal(Rng& rng, std::vector<int64_t> dims);
Tensor rng_uniform(Rng& rng, std::vector<int64_t> dims);

}  // namespace saint
