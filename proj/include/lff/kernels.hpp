#pragma once

// Forward and backward compute kernels for the network operations. These are
// graph-free; autodiff.hpp wraps them into recorded operations. Backward
// kernels accumulate (+=) into the gradient buffers they are given, and a null
// buffer means that gradient is not wanted.

#include <cstdint>
#include <vector>

#include "lff/tensor.hpp"

namespace lff::kernels {

/// Same-size 2D convolution (cross-correlation). weight is (c_out, c_in, k, k),
/// bias is (c_out, 1, 1, 1) or empty for no bias.
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& bias, int padding);

template <typename T>
void conv2d_backward(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& grad_out, int padding,
                     Tensor4<T>* grad_input, Tensor4<T>* grad_weight, Tensor4<T>* grad_bias);

/// Stride-2 transposed convolution with a (c_in, c_out, 2, 2) kernel; output is (n, c_out, 2h, 2w).
template <typename T>
Tensor4<T> conv_transpose2d(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& bias);

template <typename T>
void conv_transpose2d_backward(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& grad_out,
                               Tensor4<T>* grad_input, Tensor4<T>* grad_weight, Tensor4<T>* grad_bias);

/// 2×2 max pooling. argmax receives, per output element, the flat input index
/// of the window maximum (first occurrence in row-major order on ties).
template <typename T>
Tensor4<T> maxpool2x2(const Tensor4<T>& input, std::vector<std::uint32_t>* argmax);

template <typename T>
Tensor4<T> relu(const Tensor4<T>& input);

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);

}  // namespace lff::kernels
