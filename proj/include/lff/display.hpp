#pragma once

// Display geometry and the differentiable forward model of a multi-layer
// light field display: each (layer, view) pair contributes the layer image
// sheared by a constant sub-pixel shift, summed (additive panels) or
// multiplied (attenuating panels) along each ray.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lff/autodiff.hpp"
#include "lff/tensor.hpp"

namespace lff {

enum class Modulation { additive, multiplicative };

std::string to_string(Modulation m);
Modulation parse_modulation(const std::string& s);

struct DisplayGeometry {
    std::vector<double> layer_depths{-5.0, 0.0, 5.0};  ///< mm, relative to the central plane, strictly increasing
    double pixel_pitch = 0.1;                          ///< mm
    double span_u_deg = 10.0;                          ///< full horizontal viewing angle
    double span_v_deg = 10.0;                          ///< full vertical viewing angle
    int views_u = 5;
    int views_v = 5;
    Modulation mode = Modulation::additive;

    std::size_t layer_count() const { return layer_depths.size(); }
    std::size_t view_count() const { return static_cast<std::size_t>(views_u) * static_cast<std::size_t>(views_v); }

    /// Throws ValidationError when an invariant is violated.
    void validate() const;

    /// Direction tangent of horizontal view a (symmetric grid, 0 for a single view).
    double tangent_u(int a) const;
    double tangent_v(int b) const;

    /// Channel index of view (a, b) when a light field is flattened into channels.
    std::size_t view_index(int a, int b) const { return static_cast<std::size_t>(b) * views_u + a; }
};

struct Shift {
    double dx = 0.0;  ///< columns
    double dy = 0.0;  ///< rows
};

/// Per-(layer, view) pixel shifts, indexed [layer][view] with views in
/// view_index order.
class ShiftTable {
public:
    ShiftTable() = default;
    ShiftTable(std::size_t layers, std::size_t views) : layers_(layers), views_(views), shifts_(layers * views) {}

    std::size_t layers() const { return layers_; }
    std::size_t views() const { return views_; }
    Shift& at(std::size_t layer, std::size_t view) { return shifts_[layer * views_ + view]; }
    const Shift& at(std::size_t layer, std::size_t view) const { return shifts_[layer * views_ + view]; }
    /// Largest |dx| or |dy| over the table.
    double max_abs() const;

private:
    std::size_t layers_ = 0;
    std::size_t views_ = 0;
    std::vector<Shift> shifts_;
};

/// dx(l, a) = z_l * t_a / p, dy(l, b) = z_l * t_b / p.
ShiftTable view_shifts(const DisplayGeometry& geometry);

/// Border width, in pixels, that is excluded from quality metrics: ceil of the
/// largest shift magnitude.
int crop_border(const DisplayGeometry& geometry);

/// U×V grid of H×W single-channel views, stored view-major in view_index order.
class LightField {
public:
    LightField() = default;
    LightField(int views_u, int views_v, int height, int width, double fill = 0.0);

    int views_u() const { return views_u_; }
    int views_v() const { return views_v_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t view_count() const { return static_cast<std::size_t>(views_u_) * views_v_; }
    std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

    std::span<double> view(std::size_t index) { return std::span<double>(data_).subspan(index * pixels(), pixels()); }
    std::span<const double> view(std::size_t index) const {
        return std::span<const double>(data_).subspan(index * pixels(), pixels());
    }
    std::span<double> view(int a, int b) { return view(static_cast<std::size_t>(b) * views_u_ + a); }
    std::span<const double> view(int a, int b) const { return view(static_cast<std::size_t>(b) * views_u_ + a); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    /// Clamps every value into [0, 1].
    void clamp01();

    /// (1, U*V, H, W) tensor with views as channels.
    template <typename T>
    Tensor4<T> to_tensor() const;
    /// Inverse of to_tensor for sample n of a (N, U*V, H, W) tensor.
    template <typename T>
    static LightField from_tensor(const Tensor4<T>& t, std::size_t n, int views_u, int views_v);

    friend bool operator==(const LightField&, const LightField&) = default;

private:
    int views_u_ = 0;
    int views_v_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

/// L display layer images of H×W.
class LayerStack {
public:
    LayerStack() = default;
    LayerStack(std::size_t layers, int height, int width, Modulation mode, double fill = 0.0);

    std::size_t layers() const { return layers_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
    Modulation mode() const { return mode_; }

    std::span<double> layer(std::size_t l) { return std::span<double>(data_).subspan(l * pixels(), pixels()); }
    std::span<const double> layer(std::size_t l) const {
        return std::span<const double>(data_).subspan(l * pixels(), pixels());
    }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    template <typename T>
    Tensor4<T> to_tensor() const;
    template <typename T>
    static LayerStack from_tensor(const Tensor4<T>& t, std::size_t n, Modulation mode);

    friend bool operator==(const LayerStack&, const LayerStack&) = default;

private:
    std::size_t layers_ = 0;
    int height_ = 0;
    int width_ = 0;
    Modulation mode_ = Modulation::additive;
    std::vector<double> data_;
};

/// out(y, x) = bilinear sample of image at (x + dx, y + dy), zero outside the image.
template <typename T>
void shift_sample(std::span<const T> image, int height, int width, Shift shift, std::span<T> out);

/// out += shift_sample(image). Accumulating form used by the compositor.
template <typename T>
void shift_sample_add(std::span<const T> image, int height, int width, Shift shift, std::span<T> out);

/// out += transpose(shift_sample)(image): scatters each value back onto the
/// taps it was sampled from.
template <typename T>
void shift_sample_adjoint_add(std::span<const T> image, int height, int width, Shift shift, std::span<T> out);

/// Tensor form of the forward model: layers (N, L, H, W) -> views (N, U*V, H, W).
template <typename T>
Tensor4<T> reconstruct(const Tensor4<T>& layers, const ShiftTable& shifts, Modulation mode);

/// Gradient of reconstruct w.r.t. the layers, accumulated into grad_layers.
template <typename T>
void reconstruct_backward(const Tensor4<T>& layers, const ShiftTable& shifts, Modulation mode,
                          const Tensor4<T>& grad_views, Tensor4<T>& grad_layers);

/// Recorded, differentiable reconstruct.
template <typename T>
NodeId reconstruct(Graph<T>& g, NodeId layers, const ShiftTable& shifts, Modulation mode);

/// Simulated light field shown by a layer stack.
LightField reconstruct(const LayerStack& stack, const DisplayGeometry& geometry);

/// Sum over views of the transposed shift of the residual for one layer:
/// the backprojection used by the iterative solvers.
std::vector<double> adjoint_project(const LightField& residual, const DisplayGeometry& geometry,
                                    std::size_t layer_index);

}  // namespace lff
