#include "saint/kernels.hpp"

#include <cmath>

namespace saint {

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw std::invalid_argument("matmul: expected rank-2 tensors, got " + a.shape_str() +
                                    " and " + b.shape_str());
    if (a.size(1) != b.size(0))
        throw std::invalid_argument("matmul: inner dims disagree: " + a.shape_str() + " vs " +
                                    b.shape_str());
    const int64_t m = a.size(0), k = a.size(1), p = b.size(1);
    Tensor out({m, p});
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    // i-k-j loop order: cache friendly, and each out[i][j] still accumulates
    // its k terms in ascending order, identical to the naive i-j-k loop.
    for (int64_t i = 0; i < m; ++i) {
        float* orow = po + i * p;
        for (int64_t kk = 0; kk < k; ++kk) {
            const float av = pa[i * k + kk];
            const float* brow = pb + kk * p;
            for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor softmax_lastdim(const Tensor& x) {
    if (x.ndim() < 1) throw std::invalid_argument("softmax_lastdim: rank-0 input");
    const int64_t n = x.size(x.ndim() - 1);
    const int64_t rows = x.numel() / n;
    Tensor out(x.dims());
    const float* px = x.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* in = px + r * n;
        float* o = po + r * n;
        float mx = in[0];
        for (int64_t j = 1; j < n; ++j) mx = in[j] > mx ? in[j] : mx;
        float sum = 0.0f;
        for (int64_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        const float inv = 1.0f / sum;
        for (int64_t j = 0; j < n; ++j) o[j] *= inv;
    }
    return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    if (x.ndim() < 1) throw std::invalid_argument("layernorm: rank-0 input");
    const int64_t c = x.size(x.ndim() - 1);
    if (gain.numel() != c || bias.numel() != c)
        throw std::invalid_argument("layernorm: gain/bias length must equal last dim " +
                                    std::to_string(c));
    const int64_t rows = x.numel() / c;
    Tensor out(x.dims());
    const float* px = x.data();
    const float* pg = gain.data();
    const float* pb = bias.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* in = px + r * c;
        float* o = po + r * c;
        float mean = 0.0f;
        for (int64_t j = 0; j < c; ++j) mean += in[j];
        mean /= static_cast<float>(c);
        float var = 0.0f;
        for (int64_t j = 0; j < c; ++j) {
            const float d = in[j] - mean;
            var += d * d;
        }
        var /= static_cast<float>(c);
        const float inv_std = 1.0f / std::sqrt(var + eps);
        for (int64_t j = 0; j < c; ++j) o[j] = (in[j] - mean) * inv_std * pg[j] + pb[j];
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out(x.dims());
    constexpr float kSqrt2OverPi = 0.7978845608028654f;
    constexpr float kCubicCoeff = 0.044715f;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float v = x[i];
        out[i] = 0.5f * v * (1.0f + std::tanh(kSqrt2OverPi * (v + kCubicCoeff * v * v * v)));
    }
    return out;
}

Tensor rng_normal(Rng& rng, std::vector<int64_t> dims) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
}

Tensor rng_uniform(Rng& rng, std::vector<int64_t> dims) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
    return t;
}

}  // namespace saint
