#include "saint/tensor.hpp"

#include <cmath>
#include <cstring>

namespace saint {

bool bits_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    if (a.numel() == 0) return true;
    return std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<size_t>(a.numel())) == 0;
}

bool all_finite(const Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(t[i])) return false;
    }
    return true;
}

}  // namespace saint
