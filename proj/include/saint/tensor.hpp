#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace saint {

// Dense row-major f32 tensor. Shapes are explicit and every kernel in this
// project validates them up front; data length always equals product(dims).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> dims)
        : dims_(std::move(dims)), data_(checked_numel(dims_), 0.0f) {}

    Tensor(std::vector<int64_t> dims, std::vector<float> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != checked_numel(dims_)) {
            throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape (numel " +
                                        std::to_string(checked_numel(dims_)) + ")");
        }
    }

    static Tensor full(std::vector<int64_t> dims, float value) {
        Tensor t(std::move(dims));
        for (auto& v : t.data_) v = value;
        return t;
    }

    int64_t ndim() const { return static_cast<int64_t>(dims_.size()); }
    const std::vector<int64_t>& dims() const { return dims_; }

    int64_t size(int64_t i) const {
        if (i < 0 || i >= ndim()) throw std::out_of_range("Tensor::size: axis out of range");
        return dims_[static_cast<size_t>(i)];
    }

    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t flat) { return data_[static_cast<size_t>(flat)]; }
    float operator[](int64_t flat) const { return data_[static_cast<size_t>(flat)]; }

    // Multi-index access; bounds-checked, intended for tests and setup code,
    // not inner loops.
    float& at(std::initializer_list<int64_t> idx) { return data_[flat_index(idx)]; }
    float at(std::initializer_list<int64_t> idx) const { return data_[flat_index(idx)]; }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

private:
    static int64_t checked_numel(const std::vector<int64_t>& dims) {
        int64_t n = 1;
        for (int64_t d : dims) {
            if (d <= 0) throw std::invalid_argument("Tensor: dims must be positive");
            n *= d;
        }
        return n;
    }

    size_t flat_index(std::initializer_list<int64_t> idx) const {
        if (static_cast<int64_t>(idx.size()) != ndim())
            throw std::out_of_range("Tensor::at: rank mismatch");
        int64_t flat = 0;
        size_t axis = 0;
        for (int64_t i : idx) {
            int64_t d = dims_[axis];
            if (i < 0 || i >= d) throw std::out_of_range("Tensor::at: index out of range");
            flat = flat * d + i;
            ++axis;
        }
        return static_cast<size_t>(flat);
    }

    std::vector<int64_t> dims_;
    std::vector<float> data_;
};

// Bitwise equality, used by determinism and identity-law tests.
bool bits_equal(const Tensor& a, const Tensor& b);

// True if every element is finite.
bool all_finite(const Tensor& t);

}  // namespace saint
