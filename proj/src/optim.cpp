#include "lff/optim.hpp"

#include <cmath>

namespace lff {

template <typename T>
AdamState<T>::AdamState(const std::vector<Parameter<T>>& params, AdamOptions opts) : options(opts) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
        m.emplace_back(p.value.shape());
        v.emplace_back(p.value.shape());
    }
}

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ValidationError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                              " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Shape4& s = params[i].value.shape();
        if (state.m[i].shape() != s || state.v[i].shape() != s || params[i].grad.shape() != s) {
            throw ValidationError("adam_step: shape mismatch for parameter '" + params[i].name + "'");
        }
    }
    state.t += 1;
    const AdamOptions& o = state.options;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter<T>& p = params[i];
        T* m = state.m[i].raw();
        T* v = state.v[i].raw();
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            const double mj = o.beta1 * m[j] + (1.0 - o.beta1) * g;
            const double vj = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double m_hat = mj / bc1;
            const double v_hat = vj / bc2;
            p.value[j] = static_cast<T>(p.value[j] - o.lr * m_hat / (std::sqrt(v_hat) + o.eps));
        }
        p.zero_grad();
    }
}

double kaiming_bound(std::size_t fan_in) {
    if (fan_in == 0) throw ValidationError("kaiming_init: fan_in must be positive");
    return std::sqrt(6.0 / static_cast<double>(fan_in));
}

template <typename T>
Tensor4<T> kaiming_init(const Shape4& kernel_shape, std::size_t fan_in, Rng& rng) {
    const double b = kaiming_bound(fan_in);
    const T bound = static_cast<T>(b);
    Tensor4<T> out(kernel_shape);
    for (T& x : out.data()) {
        T v = static_cast<T>(rng.uniform(-b, b));
        // Rounding to T must not land on the closed boundary.
        if (v >= bound) v = std::nextafter(bound, T(0));
        if (v <= -bound) v = std::nextafter(-bound, T(0));
        x = v;
    }
    return out;
}

template <typename T>
Tensor4<T> kaiming_init(const Shape4& kernel_shape, Rng& rng) {
    return kaiming_init<T>(kernel_shape, kernel_shape.c * kernel_shape.h * kernel_shape.w, rng);
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<Parameter<float>>&, AdamState<float>&);
template void adam_step(std::vector<Parameter<double>>&, AdamState<double>&);
template Tensor4<float> kaiming_init(const Shape4&, Rng&);
template Tensor4<double> kaiming_init(const Shape4&, Rng&);
template Tensor4<float> kaiming_init(const Shape4&, std::size_t, Rng&);
template Tensor4<double> kaiming_init(const Shape4&, std::size_t, Rng&);

}  // namespace lff
