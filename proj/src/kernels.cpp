#include "lff/kernels.hpp"

#include <algorithm>
#include <cstring>

#include "gemm.hpp"
#include "lff/parallel.hpp"

namespace lff::kernels {
namespace {

using detail::gemm;

// Unfolds one C×H×W sample into a (C·k·k) × (H·W) matrix, rows ordered
// (channel, ky, kx) to match the (c_out, c_in, k, k) weight layout.
// Column range [x0, x1) of an output row whose source column x + ox stays inside [0, w).
inline void valid_span(std::size_t w, int ox, std::size_t& x0, std::size_t& x1) {
    const long lo = std::max<long>(0, -ox);
    const long hi = std::min<long>(static_cast<long>(w), static_cast<long>(w) - ox);
    x0 = static_cast<std::size_t>(std::min<long>(lo, static_cast<long>(w)));
    x1 = static_cast<std::size_t>(std::max<long>(hi, static_cast<long>(x0)));
}

// Writes the unfolded sample into rows of a matrix with row stride ld.
template <typename T>
void im2col(const T* src, std::size_t channels, std::size_t h, std::size_t w, int k, int pad, T* col,
            std::size_t ld) {
    for (std::size_t c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + ((c * k + ky) * k + kx) * ld;
                const int oy = ky - pad;
                const int ox = kx - pad;
                std::size_t x0 = 0;
                std::size_t x1 = 0;
                valid_span(w, ox, x0, x1);
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + oy;
                    T* dst = row + y * w;
                    if (sy < 0 || sy >= static_cast<long>(h)) {
                        std::fill(dst, dst + w, T(0));
                        continue;
                    }
                    const T* line = src + (c * h + sy) * w;
                    std::fill(dst, dst + x0, T(0));
                    std::copy(line + static_cast<long>(x0) + ox, line + static_cast<long>(x1) + ox, dst + x0);
                    std::fill(dst + x1, dst + w, T(0));
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, int k, int pad, T* dst,
                std::size_t ld) {
    for (std::size_t c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + ((c * k + ky) * k + kx) * ld;
                const int oy = ky - pad;
                const int ox = kx - pad;
                std::size_t x0 = 0;
                std::size_t x1 = 0;
                valid_span(w, ox, x0, x1);
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + oy;
                    if (sy < 0 || sy >= static_cast<long>(h)) continue;
                    T* line = dst + (c * h + sy) * w + ox;
                    const T* src = row + y * w;
                    for (std::size_t x = x0; x < x1; ++x) line[x] += src[x];
                }
            }
        }
    }
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError(message);
}

template <typename T>
void check_conv_args(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& bias, int padding) {
    const Shape4& ws = weight.shape();
    require(ws.h == ws.w && ws.h % 2 == 1, "conv2d: kernel must be square with odd size, got " + to_string(ws));
    require(ws.c == input.shape().c, "conv2d: kernel expects " + std::to_string(ws.c) + " input channels, input has " +
                                         std::to_string(input.shape().c));
    require(padding == static_cast<int>(ws.h - 1) / 2, "conv2d: padding must be (k - 1) / 2 for size preservation");
    require(bias.empty() || bias.size() == ws.n, "conv2d: bias length must equal output channels");
}

}  // namespace

namespace {

// Samples are processed in fixed groups whose unfolded matrix stays below this
// many elements. Grouping depends only on tensor sizes, never on thread count.
constexpr std::size_t kGroupElements = std::size_t{1} << 22;

struct Groups {
    std::size_t size;   // samples per group
    std::size_t count;

    std::size_t begin(std::size_t g) const { return g * size; }
    std::size_t len(std::size_t g, std::size_t n) const { return std::min(size, n - g * size); }
};

Groups make_groups(std::size_t samples, std::size_t elements_per_sample) {
    const std::size_t per = std::max<std::size_t>(1, kGroupElements / std::max<std::size_t>(1, elements_per_sample));
    const std::size_t size = std::min(per, std::max<std::size_t>(samples, 1));
    return Groups{size, (samples + size - 1) / size};
}

// Copies channel planes of samples [n0, n0 + len) into a (channels) x (len * hw)
// matrix, sample-major within each row.
template <typename T>
void gather_planes(const Tensor4<T>& t, std::size_t n0, std::size_t len, T* dst) {
    const Shape4& s = t.shape();
    const std::size_t hw = s.plane();
    const std::size_t ld = len * hw;
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const auto src = t.plane(n0 + i, c);
            std::copy(src.begin(), src.end(), dst + c * ld + i * hw);
        }
    }
}

}  // namespace

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& bias, int padding) {
    check_conv_args(input, weight, bias, padding);
    const Shape4& s = input.shape();
    const std::size_t c_out = weight.shape().n;
    const int k = static_cast<int>(weight.shape().h);
    const std::size_t rows = s.c * k * k;
    const std::size_t hw = s.plane();
    Tensor4<T> out(Shape4{s.n, c_out, s.h, s.w});
    const Groups groups = make_groups(s.n, std::max(rows, c_out) * hw);

    parallel_for(groups.count, [&](std::size_t g) {
        const std::size_t n0 = groups.begin(g);
        const std::size_t len = groups.len(g, s.n);
        const std::size_t ld = len * hw;
        std::vector<T> col(rows * ld);
        if (k == 1) {
            gather_planes(input, n0, len, col.data());
        } else {
            for (std::size_t i = 0; i < len; ++i) {
                im2col(input.sample(n0 + i).data(), s.c, s.h, s.w, k, padding, col.data() + i * hw, ld);
            }
        }
        std::vector<T> y(c_out * ld);
        gemm<T>(false, false, c_out, ld, rows, T(1), weight.raw(), rows, col.data(), ld, T(0), y.data(), ld);
        for (std::size_t i = 0; i < len; ++i) {
            for (std::size_t o = 0; o < c_out; ++o) {
                const T b = bias.empty() ? T(0) : bias[o];
                const T* src = y.data() + o * ld + i * hw;
                T* dst = out.plane(n0 + i, o).data();
                for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] + b;
            }
        }
    });
    return out;
}

template <typename T>
void conv2d_backward(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& grad_out, int padding,
                     Tensor4<T>* grad_input, Tensor4<T>* grad_weight, Tensor4<T>* grad_bias) {
    const Shape4& s = input.shape();
    const std::size_t c_out = weight.shape().n;
    const int k = static_cast<int>(weight.shape().h);
    const std::size_t rows = s.c * k * k;
    const std::size_t hw = s.plane();
    const Groups groups = make_groups(s.n, std::max(rows, c_out) * hw);

    if (grad_bias != nullptr) {
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t o = 0; o < c_out; ++o) {
                T acc = T(0);
                for (T g : grad_out.plane(n, o)) acc += g;
                (*grad_bias)[o] += acc;
            }
        }
    }
    auto unfold = [&](std::size_t n0, std::size_t len, std::vector<T>& col) {
        const std::size_t ld = len * hw;
        col.resize(rows * ld);
        if (k == 1) {
            gather_planes(input, n0, len, col.data());
            return;
        }
        for (std::size_t i = 0; i < len; ++i) {
            im2col(input.sample(n0 + i).data(), s.c, s.h, s.w, k, padding, col.data() + i * hw, ld);
        }
    };
    if (grad_weight != nullptr) {
        // Group order is fixed so the accumulation is reproducible.
        std::vector<T> col;
        std::vector<T> gy;
        for (std::size_t g = 0; g < groups.count; ++g) {
            const std::size_t n0 = groups.begin(g);
            const std::size_t len = groups.len(g, s.n);
            const std::size_t ld = len * hw;
            unfold(n0, len, col);
            gy.resize(c_out * ld);
            gather_planes(grad_out, n0, len, gy.data());
            gemm<T>(false, true, c_out, rows, ld, T(1), gy.data(), ld, col.data(), ld, T(1), grad_weight->raw(), rows);
        }
    }
    if (grad_input != nullptr) {
        parallel_for(groups.count, [&](std::size_t g) {
            const std::size_t n0 = groups.begin(g);
            const std::size_t len = groups.len(g, s.n);
            const std::size_t ld = len * hw;
            std::vector<T> gy(c_out * ld);
            gather_planes(grad_out, n0, len, gy.data());
            std::vector<T> gcol(rows * ld);
            gemm<T>(true, false, rows, ld, c_out, T(1), weight.raw(), rows, gy.data(), ld, T(0), gcol.data(), ld);
            for (std::size_t i = 0; i < len; ++i) {
                T* gx = grad_input->sample(n0 + i).data();
                if (k == 1) {
                    for (std::size_t c = 0; c < s.c; ++c) {
                        const T* src = gcol.data() + c * ld + i * hw;
                        for (std::size_t p = 0; p < hw; ++p) gx[c * hw + p] += src[p];
                    }
                    continue;
                }
                col2im_add(gcol.data() + i * hw, s.c, s.h, s.w, k, padding, gx, ld);
            }
        });
    }
}

template <typename T>
Tensor4<T> conv_transpose2d(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& bias) {
    const Shape4& s = input.shape();
    const Shape4& ws = weight.shape();
    require(ws.h == 2 && ws.w == 2, "conv_transpose2d: kernel must be 2x2, got " + to_string(ws));
    require(ws.n == s.c, "conv_transpose2d: kernel expects " + std::to_string(ws.n) + " input channels, input has " +
                             std::to_string(s.c));
    require(s.h >= 1 && s.w >= 1, "conv_transpose2d: empty input");
    const std::size_t c_out = ws.c;
    require(bias.empty() || bias.size() == c_out, "conv_transpose2d: bias length must equal output channels");
    const std::size_t hw = s.plane();
    const std::size_t taps = c_out * 4;
    Tensor4<T> out(Shape4{s.n, c_out, 2 * s.h, 2 * s.w});
    const Groups groups = make_groups(s.n, std::max(taps, s.c) * hw);

    parallel_for(groups.count, [&](std::size_t g) {
        const std::size_t n0 = groups.begin(g);
        const std::size_t len = groups.len(g, s.n);
        const std::size_t ld = len * hw;
        std::vector<T> x(s.c * ld);
        gather_planes(input, n0, len, x.data());
        std::vector<T> z(taps * ld);
        gemm<T>(true, false, taps, ld, s.c, T(1), weight.raw(), taps, x.data(), ld, T(0), z.data(), ld);
        for (std::size_t q = 0; q < len; ++q) {
            for (std::size_t o = 0; o < c_out; ++o) {
                const T b = bias.empty() ? T(0) : bias[o];
                for (int d = 0; d < 4; ++d) {
                    const std::size_t dy = d / 2;
                    const std::size_t dx = d % 2;
                    const T* zr = z.data() + (o * 4 + d) * ld + q * hw;
                    for (std::size_t i = 0; i < s.h; ++i) {
                        for (std::size_t j = 0; j < s.w; ++j) {
                            out.at(n0 + q, o, 2 * i + dy, 2 * j + dx) = zr[i * s.w + j] + b;
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
void conv_transpose2d_backward(const Tensor4<T>& input, const Tensor4<T>& weight, const Tensor4<T>& grad_out,
                               Tensor4<T>* grad_input, Tensor4<T>* grad_weight, Tensor4<T>* grad_bias) {
    const Shape4& s = input.shape();
    const std::size_t c_out = weight.shape().c;
    const std::size_t hw = s.plane();
    const std::size_t taps = c_out * 4;
    const Groups groups = make_groups(s.n, std::max(taps, s.c) * hw);

    // (taps) x (len * hw) matrix of output gradients, matching the forward z.
    auto gather = [&](std::size_t n0, std::size_t len, std::vector<T>& g) {
        const std::size_t ld = len * hw;
        g.resize(taps * ld);
        for (std::size_t q = 0; q < len; ++q) {
            for (std::size_t o = 0; o < c_out; ++o) {
                for (int d = 0; d < 4; ++d) {
                    const std::size_t dy = d / 2;
                    const std::size_t dx = d % 2;
                    T* gr = g.data() + (o * 4 + d) * ld + q * hw;
                    for (std::size_t i = 0; i < s.h; ++i) {
                        for (std::size_t j = 0; j < s.w; ++j) {
                            gr[i * s.w + j] = grad_out.at(n0 + q, o, 2 * i + dy, 2 * j + dx);
                        }
                    }
                }
            }
        }
    };

    if (grad_bias != nullptr) {
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t o = 0; o < c_out; ++o) {
                T acc = T(0);
                for (T g : grad_out.plane(n, o)) acc += g;
                (*grad_bias)[o] += acc;
            }
        }
    }
    if (grad_weight != nullptr) {
        std::vector<T> g;
        std::vector<T> x;
        for (std::size_t gi = 0; gi < groups.count; ++gi) {
            const std::size_t n0 = groups.begin(gi);
            const std::size_t len = groups.len(gi, s.n);
            const std::size_t ld = len * hw;
            gather(n0, len, g);
            x.resize(s.c * ld);
            gather_planes(input, n0, len, x.data());
            gemm<T>(false, true, s.c, taps, ld, T(1), x.data(), ld, g.data(), ld, T(1), grad_weight->raw(), taps);
        }
    }
    if (grad_input != nullptr) {
        parallel_for(groups.count, [&](std::size_t gi) {
            const std::size_t n0 = groups.begin(gi);
            const std::size_t len = groups.len(gi, s.n);
            const std::size_t ld = len * hw;
            std::vector<T> g;
            gather(n0, len, g);
            std::vector<T> gx(s.c * ld);
            gemm<T>(false, false, s.c, ld, taps, T(1), weight.raw(), taps, g.data(), ld, T(0), gx.data(), ld);
            for (std::size_t q = 0; q < len; ++q) {
                for (std::size_t c = 0; c < s.c; ++c) {
                    T* dst = grad_input->plane(n0 + q, c).data();
                    const T* src = gx.data() + c * ld + q * hw;
                    for (std::size_t p = 0; p < hw; ++p) dst[p] += src[p];
                }
            }
        });
    }
}

template <typename T>
Tensor4<T> maxpool2x2(const Tensor4<T>& input, std::vector<std::uint32_t>* argmax) {
    const Shape4& s = input.shape();
    require(s.h % 2 == 0 && s.w % 2 == 0, "maxpool2x2: spatial dimensions must be even, got " + to_string(s));
    Tensor4<T> out(Shape4{s.n, s.c, s.h / 2, s.w / 2});
    if (argmax != nullptr) argmax->assign(out.size(), 0);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t i = 0; i < s.h / 2; ++i) {
                for (std::size_t j = 0; j < s.w / 2; ++j) {
                    std::size_t best = input.index(n, c, 2 * i, 2 * j);
                    const std::size_t cand[3] = {best + 1, best + s.w, best + s.w + 1};
                    for (std::size_t idx : cand) {
                        if (input[idx] > input[best]) best = idx;
                    }
                    const std::size_t o = out.index(n, c, i, j);
                    out[o] = input[best];
                    if (argmax != nullptr) (*argmax)[o] = static_cast<std::uint32_t>(best);
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& input) {
    Tensor4<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    const Shape4& sa = a.shape();
    const Shape4& sb = b.shape();
    require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
            "concat_channels: batch/spatial mismatch " + to_string(sa) + " vs " + to_string(sb));
    Tensor4<T> out(Shape4{sa.n, sa.c + sb.c, sa.h, sa.w});
    for (std::size_t n = 0; n < sa.n; ++n) {
        std::memcpy(out.plane(n, 0).data(), a.sample(n).data(), a.sample(n).size() * sizeof(T));
        std::memcpy(out.plane(n, sa.c).data(), b.sample(n).data(), b.sample(n).size() * sizeof(T));
    }
    return out;
}

#define LFF_INSTANTIATE(T)                                                                                        \
    template Tensor4<T> conv2d(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&, int);                     \
    template void conv2d_backward(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&, int, Tensor4<T>*,      \
                                  Tensor4<T>*, Tensor4<T>*);                                                      \
    template Tensor4<T> conv_transpose2d(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&);                \
    template void conv_transpose2d_backward(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>*, \
                                            Tensor4<T>*, Tensor4<T>*);                                            \
    template Tensor4<T> maxpool2x2(const Tensor4<T>&, std::vector<std::uint32_t>*);                               \
    template Tensor4<T> relu(const Tensor4<T>&);                                                                  \
    template Tensor4<T> concat_channels(const Tensor4<T>&, const Tensor4<T>&);

LFF_INSTANTIATE(float)
LFF_INSTANTIATE(double)
#undef LFF_INSTANTIATE

}  // namespace lff::kernels
