#include "lff/tensor.hpp"

#include <cmath>
#include <cstring>

namespace lff {

std::string to_string(const Shape4& s) {
    return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + std::to_string(s.h) + ", " +
           std::to_string(s.w) + ")";
}

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError(std::string("non-finite value in ") + what + " at element " + std::to_string(i));
        }
    }
}

template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& t, std::size_t begin, std::size_t count) {
    const Shape4& s = t.shape();
    if (begin + count > s.c) {
        throw ValidationError("channel slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                              ") out of range for " + to_string(s));
    }
    Tensor4<T> out(Shape4{s.n, count, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n) {
        std::memcpy(out.plane(n, 0).data(), t.plane(n, begin).data(), count * s.plane() * sizeof(T));
    }
    return out;
}

template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);
template Tensor4<float> slice_channels(const Tensor4<float>&, std::size_t, std::size_t);
template Tensor4<double> slice_channels(const Tensor4<double>&, std::size_t, std::size_t);

}  // namespace lff
