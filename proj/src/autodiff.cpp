#include "lff/autodiff.hpp"

#include "lff/kernels.hpp"

namespace lff {

template <typename T>
typename Graph<T>::Node& Graph<T>::node(NodeId id) {
    if (id.index >= nodes_.size()) throw ValidationError("graph: unknown node " + std::to_string(id.index));
    return nodes_[id.index];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(NodeId id) const {
    if (id.index >= nodes_.size()) throw ValidationError("graph: unknown node " + std::to_string(id.index));
    return nodes_[id.index];
}

template <typename T>
NodeId Graph<T>::constant(Tensor4<T> value) {
    Node& n = nodes_.emplace_back();
    n.op = "constant";
    n.owned = std::move(value);
    n.value = &n.owned;
    return NodeId{nodes_.size() - 1};
}

template <typename T>
NodeId Graph<T>::leaf(Tensor4<T> value) {
    Node& n = nodes_.emplace_back();
    n.op = "leaf";
    n.owned = std::move(value);
    n.value = &n.owned;
    n.requires_grad = true;
    return NodeId{nodes_.size() - 1};
}

template <typename T>
NodeId Graph<T>::parameter(Parameter<T>& p) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor4<T>(p.value.shape());
    Node& n = nodes_.emplace_back();
    n.op = "parameter:" + p.name;
    n.value = &p.value;
    n.param = &p;
    n.requires_grad = true;
    return NodeId{nodes_.size() - 1};
}

template <typename T>
NodeId Graph<T>::record(std::string op, Tensor4<T> value, std::vector<NodeId> inputs, BackwardFn backward) {
    if (backward_done_) throw ValidationError("graph: cannot record after backward");
    check_finite<T>(value.data(), op.c_str());
    bool needs = false;
    for (NodeId in : inputs) needs = needs || node(in).requires_grad;
    Node& n = nodes_.emplace_back();
    n.op = std::move(op);
    n.owned = std::move(value);
    n.value = &n.owned;
    n.requires_grad = needs;
    n.inputs = std::move(inputs);
    if (needs) n.backward = std::move(backward);
    return NodeId{nodes_.size() - 1};
}

template <typename T>
const Tensor4<T>& Graph<T>::value(NodeId id) const {
    return *node(id).value;
}

template <typename T>
bool Graph<T>::requires_grad(NodeId id) const {
    return node(id).requires_grad;
}

template <typename T>
bool Graph<T>::has_grad_buffer(NodeId id) const {
    const Node& n = node(id);
    return n.param != nullptr || n.grad.has_value();
}

template <typename T>
const std::string& Graph<T>::op(NodeId id) const {
    return node(id).op;
}

template <typename T>
const Tensor4<T>& Graph<T>::grad(NodeId id) const {
    const Node& n = node(id);
    if (!n.requires_grad) throw ValidationError("graph: node '" + n.op + "' does not require grad");
    if (n.param != nullptr) return n.param->grad;
    if (!n.grad) throw ValidationError("graph: no gradient has reached node '" + n.op + "'");
    return *n.grad;
}

template <typename T>
Tensor4<T>* Graph<T>::grad_buffer(Node& n) {
    if (n.param != nullptr) return &n.param->grad;
    if (!n.grad) n.grad.emplace(n.value->shape());
    return &*n.grad;
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
    if (backward_done_) throw ValidationError("graph: backward already ran on this graph");
    Node& root = node(loss);
    if (root.value->size() != 1) {
        throw ValidationError("graph: backward requires a scalar loss, got shape " + to_string(root.value->shape()));
    }
    backward_done_ = true;
    if (!root.requires_grad) return;
    grad_buffer(root)->fill(T(1));

    std::vector<Tensor4<T>*> ptrs;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || !n.grad) continue;
        ptrs.clear();
        for (NodeId in : n.inputs) {
            Node& src = nodes_[in.index];
            ptrs.push_back(src.requires_grad ? grad_buffer(src) : nullptr);
        }
        n.backward(*n.grad, ptrs);
    }
}

namespace {

template <typename T>
Tensor4<T> scalar_tensor(T v) {
    return Tensor4<T>(Shape4{1, 1, 1, 1}, v);
}

}  // namespace

template <typename T>
NodeId conv2d(Graph<T>& g, NodeId input, NodeId weight, std::optional<NodeId> bias, int padding) {
    static const Tensor4<T> no_bias;
    const Tensor4<T>& x = g.value(input);
    const Tensor4<T>& w = g.value(weight);
    const Tensor4<T>& b = bias ? g.value(*bias) : no_bias;
    Tensor4<T> y = kernels::conv2d(x, w, b, padding);
    std::vector<NodeId> inputs{input, weight};
    if (bias) inputs.push_back(*bias);
    return g.record("conv2d", std::move(y), std::move(inputs),
                    [&x, &w, padding](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        kernels::conv2d_backward(x, w, gy, padding, gi[0], gi[1], gi.size() > 2 ? gi[2] : nullptr);
                    });
}

template <typename T>
NodeId conv_transpose2d(Graph<T>& g, NodeId input, NodeId weight, std::optional<NodeId> bias) {
    static const Tensor4<T> no_bias;
    const Tensor4<T>& x = g.value(input);
    const Tensor4<T>& w = g.value(weight);
    const Tensor4<T>& b = bias ? g.value(*bias) : no_bias;
    Tensor4<T> y = kernels::conv_transpose2d(x, w, b);
    std::vector<NodeId> inputs{input, weight};
    if (bias) inputs.push_back(*bias);
    return g.record("conv_transpose2d", std::move(y), std::move(inputs),
                    [&x, &w](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        kernels::conv_transpose2d_backward(x, w, gy, gi[0], gi[1], gi.size() > 2 ? gi[2] : nullptr);
                    });
}

template <typename T>
NodeId maxpool2x2(Graph<T>& g, NodeId input) {
    std::vector<std::uint32_t> argmax;
    Tensor4<T> y = kernels::maxpool2x2(g.value(input), &argmax);
    return g.record("maxpool2x2", std::move(y), {input},
                    [argmax = std::move(argmax)](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        Tensor4<T>& gx = *gi[0];
                        for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += gy[i];
                    });
}

template <typename T>
NodeId relu(Graph<T>& g, NodeId input) {
    const Tensor4<T>& x = g.value(input);
    return g.record("relu", kernels::relu(x), {input}, [&x](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
        Tensor4<T>& gx = *gi[0];
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] > T(0)) gx[i] += gy[i];
        }
    });
}

template <typename T>
NodeId concat_channels(Graph<T>& g, NodeId a, NodeId b) {
    const Shape4 sa = g.value(a).shape();
    const Shape4 sb = g.value(b).shape();
    Tensor4<T> y = kernels::concat_channels(g.value(a), g.value(b));
    return g.record("concat_channels", std::move(y), {a, b},
                    [sa, sb](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        const std::size_t ca = sa.c * sa.plane();
                        const std::size_t cb = sb.c * sb.plane();
                        for (std::size_t n = 0; n < sa.n; ++n) {
                            const T* src = gy.sample(n).data();
                            if (gi[0] != nullptr) {
                                T* dst = gi[0]->sample(n).data();
                                for (std::size_t i = 0; i < ca; ++i) dst[i] += src[i];
                            }
                            if (gi[1] != nullptr) {
                                T* dst = gi[1]->sample(n).data();
                                for (std::size_t i = 0; i < cb; ++i) dst[i] += src[ca + i];
                            }
                        }
                    });
}

template <typename T>
NodeId mse_loss(Graph<T>& g, NodeId pred, NodeId target) {
    const Tensor4<T>& p = g.value(pred);
    const Tensor4<T>& t = g.value(target);
    if (p.shape() != t.shape()) {
        throw ValidationError("mse_loss: shape mismatch " + to_string(p.shape()) + " vs " + to_string(t.shape()));
    }
    if (p.empty()) throw ValidationError("mse_loss: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    const double count = static_cast<double>(p.size());
    return g.record("mse_loss", scalar_tensor(static_cast<T>(acc / count)), {pred, target},
                    [&p, &t, count](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        const T scale = static_cast<T>(2.0 / count) * gy[0];
                        for (std::size_t i = 0; i < p.size(); ++i) {
                            const T d = p[i] - t[i];
                            if (gi[0] != nullptr) (*gi[0])[i] += scale * d;
                            if (gi[1] != nullptr) (*gi[1])[i] -= scale * d;
                        }
                    });
}

template <typename T>
NodeId range_penalty(Graph<T>& g, NodeId layers) {
    const Tensor4<T>& x = g.value(layers);
    if (x.empty()) throw ValidationError("range_penalty: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        if (v > 1.0) acc += (v - 1.0) * (v - 1.0);
        if (v < 0.0) acc += v * v;
    }
    const double count = static_cast<double>(x.size());
    return g.record("range_penalty", scalar_tensor(static_cast<T>(acc / count)), {layers},
                    [&x, count](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        const T scale = static_cast<T>(2.0 / count) * gy[0];
                        Tensor4<T>& gx = *gi[0];
                        for (std::size_t i = 0; i < x.size(); ++i) {
                            if (x[i] > T(1)) gx[i] += scale * (x[i] - T(1));
                            if (x[i] < T(0)) gx[i] += scale * x[i];
                        }
                    });
}

template <typename T>
NodeId sum(Graph<T>& g, NodeId input) {
    const Tensor4<T>& x = g.value(input);
    double acc = 0.0;
    for (T v : x.data()) acc += v;
    return g.record("sum", scalar_tensor(static_cast<T>(acc)), {input},
                    [](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        for (T& v : gi[0]->data()) v += gy[0];
                    });
}

template <typename T>
NodeId add_scaled(Graph<T>& g, NodeId a, NodeId b, T scale) {
    const Tensor4<T>& x = g.value(a);
    const Tensor4<T>& y = g.value(b);
    if (x.shape() != y.shape()) {
        throw ValidationError("add_scaled: shape mismatch " + to_string(x.shape()) + " vs " + to_string(y.shape()));
    }
    Tensor4<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + scale * y[i];
    return g.record("add_scaled", std::move(out), {a, b},
                    [scale](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        for (std::size_t i = 0; i < gy.size(); ++i) {
                            if (gi[0] != nullptr) (*gi[0])[i] += gy[i];
                            if (gi[1] != nullptr) (*gi[1])[i] += scale * gy[i];
                        }
                    });
}

template <typename T>
NodeId weighted_sum(Graph<T>& g, NodeId input, const Tensor4<T>& weights) {
    const Tensor4<T>& x = g.value(input);
    if (x.shape() != weights.shape()) {
        throw ValidationError("weighted_sum: shape mismatch " + to_string(x.shape()) + " vs " +
                              to_string(weights.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]) * weights[i];
    return g.record("weighted_sum", scalar_tensor(static_cast<T>(acc)), {input},
                    [weights](const Tensor4<T>& gy, std::span<Tensor4<T>* const> gi) {
                        for (std::size_t i = 0; i < weights.size(); ++i) (*gi[0])[i] += gy[0] * weights[i];
                    });
}

#define LFF_INSTANTIATE(T)                                                                       \
    template class Graph<T>;                                                                     \
    template NodeId conv2d(Graph<T>&, NodeId, NodeId, std::optional<NodeId>, int);               \
    template NodeId conv_transpose2d(Graph<T>&, NodeId, NodeId, std::optional<NodeId>);          \
    template NodeId maxpool2x2(Graph<T>&, NodeId);                                               \
    template NodeId relu(Graph<T>&, NodeId);                                                     \
    template NodeId concat_channels(Graph<T>&, NodeId, NodeId);                                  \
    template NodeId mse_loss(Graph<T>&, NodeId, NodeId);                                         \
    template NodeId range_penalty(Graph<T>&, NodeId);                                            \
    template NodeId sum(Graph<T>&, NodeId);                                                      \
    template NodeId add_scaled(Graph<T>&, NodeId, NodeId, T);                                    \
    template NodeId weighted_sum(Graph<T>&, NodeId, const Tensor4<T>&);

LFF_INSTANTIATE(float)
LFF_INSTANTIATE(double)
#undef LFF_INSTANTIATE

}  // namespace lff
