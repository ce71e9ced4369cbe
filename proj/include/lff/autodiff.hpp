#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lff/tensor.hpp"

namespace lff {

/// Handle to a value recorded in a Graph.
struct NodeId {
    std::size_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
};

/// Reverse-mode tape. Nodes are appended in construction order, which is a
/// topological order; backward() visits them strictly in reverse. A graph
/// supports exactly one backward pass; build a fresh graph per step.
template <typename T>
class Graph {
public:
    /// Receives the output gradient and, per input, a gradient buffer to
    /// accumulate into (null when that input does not require grad).
    using BackwardFn = std::function<void(const Tensor4<T>& grad_out, std::span<Tensor4<T>* const> grad_inputs)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Input that never receives a gradient.
    NodeId constant(Tensor4<T> value);
    /// Leaf whose gradient is kept in the graph (read it with grad()).
    NodeId leaf(Tensor4<T> value);
    /// Leaf backed by an external parameter; its gradient accumulates into p.grad.
    /// The parameter must outlive the graph.
    NodeId parameter(Parameter<T>& p);

    /// Records an operation result. The value is checked for non-finite entries.
    NodeId record(std::string op, Tensor4<T> value, std::vector<NodeId> inputs, BackwardFn backward);

    const Tensor4<T>& value(NodeId id) const;
    bool requires_grad(NodeId id) const;
    /// Gradient of the last backward() target w.r.t. this node. Throws if the
    /// node does not require grad.
    const Tensor4<T>& grad(NodeId id) const;
    /// Whether a gradient buffer was ever allocated for this node.
    bool has_grad_buffer(NodeId id) const;
    const std::string& op(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad node.
    void backward(NodeId loss);

private:
    struct Node {
        std::string op;
        Tensor4<T> owned;
        const Tensor4<T>* value = nullptr;
        Parameter<T>* param = nullptr;
        bool requires_grad = false;
        std::optional<Tensor4<T>> grad;
        std::vector<NodeId> inputs;
        BackwardFn backward;
    };

    Node& node(NodeId id);
    const Node& node(NodeId id) const;
    Tensor4<T>* grad_buffer(Node& n);

    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

// Recorded operations. Each validates its inputs, computes the forward value
// and registers the matching backward.

template <typename T>
NodeId conv2d(Graph<T>& g, NodeId input, NodeId weight, std::optional<NodeId> bias, int padding);

template <typename T>
NodeId conv_transpose2d(Graph<T>& g, NodeId input, NodeId weight, std::optional<NodeId> bias);

template <typename T>
NodeId maxpool2x2(Graph<T>& g, NodeId input);

template <typename T>
NodeId relu(Graph<T>& g, NodeId input);

template <typename T>
NodeId concat_channels(Graph<T>& g, NodeId a, NodeId b);

/// Mean over all elements of (pred - target)^2, as a (1,1,1,1) tensor.
template <typename T>
NodeId mse_loss(Graph<T>& g, NodeId pred, NodeId target);

/// Mean of max(0, x - 1)^2 + max(0, -x)^2; zero iff every value lies in [0, 1].
template <typename T>
NodeId range_penalty(Graph<T>& g, NodeId layers);

/// Sum of all elements, as a (1,1,1,1) tensor.
template <typename T>
NodeId sum(Graph<T>& g, NodeId input);

/// a + scale * b for equal shapes.
template <typename T>
NodeId add_scaled(Graph<T>& g, NodeId a, NodeId b, T scale);

/// Sum over all elements of weights * input, for a fixed weight tensor of the
/// same shape. Used to project an output onto a random direction.
template <typename T>
NodeId weighted_sum(Graph<T>& g, NodeId input, const Tensor4<T>& weights);

}  // namespace lff
