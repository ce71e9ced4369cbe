#pragma once

#include <cstdint>
#include <vector>

#include "lff/random.hpp"
#include "lff/tensor.hpp"

namespace lff {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments per parameter plus the step counter.
template <typename T>
struct AdamState {
    AdamOptions options;
    std::vector<Tensor4<T>> m;
    std::vector<Tensor4<T>> v;
    std::int64_t t = 0;

    AdamState() = default;
    AdamState(const std::vector<Parameter<T>>& params, AdamOptions opts);
};

/// One bias-corrected Adam update of every parameter, then zeroes the gradients.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state);

/// Kaiming-uniform weights on (-b, b) with b = sqrt(6 / fan_in), fan_in = c_in * k * k
/// for a (c_out, c_in, k, k) kernel. Draws are in row-major element order.
template <typename T>
Tensor4<T> kaiming_init(const Shape4& kernel_shape, Rng& rng);

/// Same as above with an explicit fan_in (used for transposed kernels, whose
/// stored layout is (c_in, c_out, k, k)).
template <typename T>
Tensor4<T> kaiming_init(const Shape4& kernel_shape, std::size_t fan_in, Rng& rng);

double kaiming_bound(std::size_t fan_in);

}  // namespace lff
