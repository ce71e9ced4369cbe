#include "lff/display.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lff/parallel.hpp"

namespace lff {

std::string to_string(Modulation m) { return m == Modulation::additive ? "additive" : "multiplicative"; }

Modulation parse_modulation(const std::string& s) {
    if (s == "additive") return Modulation::additive;
    if (s == "multiplicative") return Modulation::multiplicative;
    throw ValidationError("unknown modulation mode '" + s + "' (expected additive or multiplicative)");
}

void DisplayGeometry::validate() const {
    if (layer_depths.empty()) throw ValidationError("geometry: at least one layer is required");
    for (std::size_t i = 1; i < layer_depths.size(); ++i) {
        if (!(layer_depths[i] > layer_depths[i - 1])) {
            throw ValidationError("geometry: layer depths must be strictly increasing");
        }
    }
    for (double z : layer_depths) {
        if (!std::isfinite(z)) throw ValidationError("geometry: layer depth must be finite");
    }
    if (views_u < 1 || views_v < 1) throw ValidationError("geometry: view counts must be at least 1");
    if (!(pixel_pitch > 0.0) || !std::isfinite(pixel_pitch)) {
        throw ValidationError("geometry: pixel pitch must be positive");
    }
    for (double span : {span_u_deg, span_v_deg}) {
        if (!(span >= 0.0 && span < 180.0)) throw ValidationError("geometry: viewing angle must lie in [0, 180)");
    }
}

namespace {

double tangent(double span_deg, int count, int index) {
    if (count == 1) return 0.0;
    const double half = std::tan(span_deg * std::numbers::pi / 360.0);
    return half * (2.0 * index / (count - 1) - 1.0);
}

}  // namespace

double DisplayGeometry::tangent_u(int a) const { return tangent(span_u_deg, views_u, a); }
double DisplayGeometry::tangent_v(int b) const { return tangent(span_v_deg, views_v, b); }

double ShiftTable::max_abs() const {
    double m = 0.0;
    for (const Shift& s : shifts_) m = std::max({m, std::abs(s.dx), std::abs(s.dy)});
    return m;
}

ShiftTable view_shifts(const DisplayGeometry& geometry) {
    geometry.validate();
    ShiftTable table(geometry.layer_count(), geometry.view_count());
    for (std::size_t l = 0; l < geometry.layer_count(); ++l) {
        const double z = geometry.layer_depths[l];
        for (int b = 0; b < geometry.views_v; ++b) {
            for (int a = 0; a < geometry.views_u; ++a) {
                Shift& s = table.at(l, geometry.view_index(a, b));
                s.dx = z * geometry.tangent_u(a) / geometry.pixel_pitch;
                s.dy = z * geometry.tangent_v(b) / geometry.pixel_pitch;
            }
        }
    }
    return table;
}

int crop_border(const DisplayGeometry& geometry) {
    return static_cast<int>(std::ceil(view_shifts(geometry).max_abs() - 1e-9));
}

LightField::LightField(int views_u, int views_v, int height, int width, double fill)
    : views_u_(views_u), views_v_(views_v), height_(height), width_(width) {
    if (views_u < 1 || views_v < 1 || height < 1 || width < 1) {
        throw ValidationError("light field dimensions must be positive");
    }
    data_.assign(view_count() * pixels(), fill);
}

void LightField::clamp01() {
    for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

template <typename T>
Tensor4<T> LightField::to_tensor() const {
    Tensor4<T> t(Shape4{1, view_count(), static_cast<std::size_t>(height_), static_cast<std::size_t>(width_)});
    for (std::size_t i = 0; i < data_.size(); ++i) t[i] = static_cast<T>(data_[i]);
    return t;
}

template <typename T>
LightField LightField::from_tensor(const Tensor4<T>& t, std::size_t n, int views_u, int views_v) {
    const Shape4& s = t.shape();
    if (s.c != static_cast<std::size_t>(views_u) * views_v || n >= s.n) {
        throw ValidationError("light field tensor " + to_string(s) + " does not match a " + std::to_string(views_u) +
                              "x" + std::to_string(views_v) + " view grid");
    }
    LightField lf(views_u, views_v, static_cast<int>(s.h), static_cast<int>(s.w));
    auto src = t.sample(n);
    for (std::size_t i = 0; i < src.size(); ++i) lf.data_[i] = static_cast<double>(src[i]);
    return lf;
}

LayerStack::LayerStack(std::size_t layers, int height, int width, Modulation mode, double fill)
    : layers_(layers), height_(height), width_(width), mode_(mode) {
    if (layers < 1 || height < 1 || width < 1) throw ValidationError("layer stack dimensions must be positive");
    data_.assign(layers * pixels(), fill);
}

template <typename T>
Tensor4<T> LayerStack::to_tensor() const {
    Tensor4<T> t(Shape4{1, layers_, static_cast<std::size_t>(height_), static_cast<std::size_t>(width_)});
    for (std::size_t i = 0; i < data_.size(); ++i) t[i] = static_cast<T>(data_[i]);
    return t;
}

template <typename T>
LayerStack LayerStack::from_tensor(const Tensor4<T>& t, std::size_t n, Modulation mode) {
    const Shape4& s = t.shape();
    if (n >= s.n) throw ValidationError("layer tensor sample index out of range");
    LayerStack stack(s.c, static_cast<int>(s.h), static_cast<int>(s.w), mode);
    auto src = t.sample(n);
    for (std::size_t i = 0; i < src.size(); ++i) stack.data_[i] = static_cast<double>(src[i]);
    return stack;
}

namespace {

// Bilinear taps of one axis: output coordinate i reads source i + base and
// i + base + 1 with weights w0 and w1.
struct Taps {
    long base;
    double w0;
    double w1;
};

Taps taps_for(double shift) {
    const double f = std::floor(shift);
    return Taps{static_cast<long>(f), 1.0 - (shift - f), shift - f};
}

template <typename T, typename Visit>
void for_each_tap(int height, int width, Shift shift, Visit&& visit) {
    const Taps tx = taps_for(shift.dx);
    const Taps ty = taps_for(shift.dy);
    const T wy[2] = {static_cast<T>(ty.w0), static_cast<T>(ty.w1)};
    const T wx[2] = {static_cast<T>(tx.w0), static_cast<T>(tx.w1)};
    for (int y = 0; y < height; ++y) {
        for (int j = 0; j < 2; ++j) {
            const long sy = y + ty.base + j;
            if (sy < 0 || sy >= height) continue;
            // Output columns whose tap i lands inside the source row.
            for (int i = 0; i < 2; ++i) {
                const long off = tx.base + i;
                const long x_lo = std::max<long>(0, -off);
                const long x_hi = std::min<long>(width, width - off);
                const T weight = wy[j] * wx[i];
                for (long x = x_lo; x < x_hi; ++x) {
                    visit(static_cast<std::size_t>(y) * width + x, static_cast<std::size_t>(sy) * width + x + off,
                          weight);
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void shift_sample_add(std::span<const T> image, int height, int width, Shift shift, std::span<T> out) {
    for_each_tap<T>(height, width, shift,
                    [&](std::size_t dst, std::size_t src, T weight) { out[dst] += weight * image[src]; });
}

template <typename T>
void shift_sample(std::span<const T> image, int height, int width, Shift shift, std::span<T> out) {
    std::fill(out.begin(), out.end(), T(0));
    shift_sample_add(image, height, width, shift, out);
}

template <typename T>
void shift_sample_adjoint_add(std::span<const T> image, int height, int width, Shift shift, std::span<T> out) {
    for_each_tap<T>(height, width, shift,
                    [&](std::size_t dst, std::size_t src, T weight) { out[src] += weight * image[dst]; });
}

namespace {

void check_shift_table(const Shape4& s, const ShiftTable& shifts) {
    if (s.c != shifts.layers()) {
        throw ValidationError("reconstruct: layer tensor has " + std::to_string(s.c) + " channels, geometry has " +
                              std::to_string(shifts.layers()) + " layers");
    }
}

}  // namespace

template <typename T>
Tensor4<T> reconstruct(const Tensor4<T>& layers, const ShiftTable& shifts, Modulation mode) {
    const Shape4& s = layers.shape();
    check_shift_table(s, shifts);
    const std::size_t views = shifts.views();
    const int h = static_cast<int>(s.h);
    const int w = static_cast<int>(s.w);
    Tensor4<T> out(Shape4{s.n, views, s.h, s.w});
    parallel_for(s.n * views, [&](std::size_t job) {
        const std::size_t n = job / views;
        const std::size_t v = job % views;
        std::span<T> dst = out.plane(n, v);
        if (mode == Modulation::additive) {
            for (std::size_t l = 0; l < s.c; ++l) shift_sample_add(layers.plane(n, l), h, w, shifts.at(l, v), dst);
            return;
        }
        std::vector<T> tmp(s.plane());
        std::fill(dst.begin(), dst.end(), T(1));
        for (std::size_t l = 0; l < s.c; ++l) {
            shift_sample<T>(layers.plane(n, l), h, w, shifts.at(l, v), tmp);
            for (std::size_t i = 0; i < tmp.size(); ++i) dst[i] *= tmp[i];
        }
    });
    return out;
}

template <typename T>
void reconstruct_backward(const Tensor4<T>& layers, const ShiftTable& shifts, Modulation mode,
                          const Tensor4<T>& grad_views, Tensor4<T>& grad_layers) {
    const Shape4& s = layers.shape();
    check_shift_table(s, shifts);
    const std::size_t views = shifts.views();
    const int h = static_cast<int>(s.h);
    const int w = static_cast<int>(s.w);
    const std::size_t L = s.c;
    parallel_for(s.n * L, [&](std::size_t job) {
        const std::size_t n = job / L;
        const std::size_t l = job % L;
        std::span<T> dst = grad_layers.plane(n, l);
        if (mode == Modulation::additive) {
            for (std::size_t v = 0; v < views; ++v) {
                shift_sample_adjoint_add(grad_views.plane(n, v), h, w, shifts.at(l, v), dst);
            }
            return;
        }
        std::vector<T> weighted(s.plane());
        std::vector<T> tmp(s.plane());
        for (std::size_t v = 0; v < views; ++v) {
            auto gv = grad_views.plane(n, v);
            std::copy(gv.begin(), gv.end(), weighted.begin());
            for (std::size_t k = 0; k < L; ++k) {
                if (k == l) continue;
                shift_sample<T>(layers.plane(n, k), h, w, shifts.at(k, v), tmp);
                for (std::size_t i = 0; i < tmp.size(); ++i) weighted[i] *= tmp[i];
            }
            shift_sample_adjoint_add<T>(weighted, h, w, shifts.at(l, v), dst);
        }
    });
}

template <typename T>
NodeId reconstruct(Graph<T>& g, NodeId layers, const ShiftTable& shifts, Modulation mode) {
    const Tensor4<T>& x = g.value(layers);
    Tensor4<T> y = reconstruct(x, shifts, mode);
    return g.record("reconstruct", std::move(y), {layers},
                    [&x, shifts, mode](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        reconstruct_backward(x, shifts, mode, gy, *gi[0]);
                    });
}

LightField reconstruct(const LayerStack& stack, const DisplayGeometry& geometry) {
    geometry.validate();
    if (stack.layers() != geometry.layer_count()) {
        throw ValidationError("reconstruct: stack has " + std::to_string(stack.layers()) + " layers, geometry has " +
                              std::to_string(geometry.layer_count()));
    }
    const Tensor4<double> views = reconstruct(stack.to_tensor<double>(), view_shifts(geometry), geometry.mode);
    return LightField::from_tensor(views, 0, geometry.views_u, geometry.views_v);
}

std::vector<double> adjoint_project(const LightField& residual, const DisplayGeometry& geometry,
                                    std::size_t layer_index) {
    geometry.validate();
    if (layer_index >= geometry.layer_count()) {
        throw ValidationError("adjoint_project: layer index " + std::to_string(layer_index) + " out of range");
    }
    if (residual.views_u() != geometry.views_u || residual.views_v() != geometry.views_v) {
        throw ValidationError("adjoint_project: residual view grid does not match geometry");
    }
    const ShiftTable shifts = view_shifts(geometry);
    std::vector<double> acc(residual.pixels(), 0.0);
    for (std::size_t v = 0; v < residual.view_count(); ++v) {
        shift_sample_adjoint_add<double>(residual.view(v), residual.height(), residual.width(),
                                         shifts.at(layer_index, v), acc);
    }
    return acc;
}

#define LFF_INSTANTIATE(T)                                                                                         \
    template Tensor4<T> LightField::to_tensor<T>() const;                                                          \
    template LightField LightField::from_tensor<T>(const Tensor4<T>&, std::size_t, int, int);                      \
    template Tensor4<T> LayerStack::to_tensor<T>() const;                                                          \
    template LayerStack LayerStack::from_tensor<T>(const Tensor4<T>&, std::size_t, Modulation);                    \
    template void shift_sample(std::span<const T>, int, int, Shift, std::span<T>);                                 \
    template void shift_sample_add(std::span<const T>, int, int, Shift, std::span<T>);                             \
    template void shift_sample_adjoint_add(std::span<const T>, int, int, Shift, std::span<T>);                     \
    template Tensor4<T> reconstruct(const Tensor4<T>&, const ShiftTable&, Modulation);                             \
    template void reconstruct_backward(const Tensor4<T>&, const ShiftTable&, Modulation, const Tensor4<T>&,        \
                                       Tensor4<T>&);                                                               \
    template NodeId reconstruct(Graph<T>&, NodeId, const ShiftTable&, Modulation);

LFF_INSTANTIATE(float)
LFF_INSTANTIATE(double)
#undef LFF_INSTANTIATE

}  // namespace lff
