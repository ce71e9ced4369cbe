#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lff/error.hpp"

namespace lff {

/// Dimensions of a rank-4 tensor in (batch, channel, row, column) order.
struct Shape4 {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t size() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

/// Dense row-major rank-4 array. Element (n, c, y, x) lives at
/// ((n * C + c) * H + y) * W + x.
template <typename T>
class Tensor4 {
public:
    using value_type = T;

    Tensor4() = default;
    explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
    Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.size()) {
            throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + to_string(shape_));
        }
    }

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* raw() { return data_.data(); }
    const T* raw() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) { return data_[index(n, c, y, x)]; }
    const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[index(n, c, y, x)];
    }

    /// Contiguous H×W plane of sample n, channel c.
    std::span<T> plane(std::size_t n, std::size_t c) {
        return std::span<T>(data_).subspan(index(n, c, 0, 0), shape_.plane());
    }
    std::span<const T> plane(std::size_t n, std::size_t c) const {
        return std::span<const T>(data_).subspan(index(n, c, 0, 0), shape_.plane());
    }
    /// Contiguous C×H×W block of sample n.
    std::span<T> sample(std::size_t n) {
        return std::span<T>(data_).subspan(n * shape_.c * shape_.plane(), shape_.c * shape_.plane());
    }
    std::span<const T> sample(std::size_t n) const {
        return std::span<const T>(data_).subspan(n * shape_.c * shape_.plane(), shape_.c * shape_.plane());
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    Shape4 shape_;
    std::vector<T> data_;
};

/// Trainable tensor with its gradient accumulator. Grad shape always equals value shape.
template <typename T>
struct Parameter {
    std::string name;
    Tensor4<T> value;
    Tensor4<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor4<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
    void zero_grad() { grad.fill(T(0)); }
};

/// Throws NumericError naming `what` if any element is NaN or Inf.
template <typename T>
void check_finite(std::span<const T> values, const char* what);

/// Channels [begin, begin + count) of every sample.
template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& t, std::size_t begin, std::size_t count);

template <typename U, typename T>
Tensor4<U> tensor_cast(const Tensor4<T>& t) {
    std::vector<U> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<U>(t[i]);
    return Tensor4<U>(t.shape(), std::move(out));
}

}  // namespace lff
