#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lff/autodiff.hpp"
#include "lff/display.hpp"
#include "lff/kernels.hpp"
#include "lff/random.hpp"

namespace lff {

enum class Architecture { stacked, unet };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& s);

struct NetworkSpec {
    Architecture arch = Architecture::unet;
    int in_channels = 25;   ///< views flattened to channels
    int out_channels = 3;   ///< display layers
    int base_channels = 64;
    int stacked_modules = 19;
    int unet_depth = 4;     ///< pooling levels
    std::uint64_t seed = 0;

    void validate() const;
    /// Spatial divisor the input must satisfy (1 for the stacked CNN).
    int spatial_multiple() const { return arch == Architecture::unet ? 1 << unet_depth : 1; }
};

/// Exact trainable parameter total, computed from the spec alone.
std::size_t param_count(const NetworkSpec& spec);

struct ForwardOptions {
    /// Replace every U-Net skip tensor by zeros (ablation probe).
    bool zero_skips = false;
};

/// A parameterized network of either architecture. Parameter names and order
/// are deterministic functions of the spec.
class Network {
public:
    const NetworkSpec& spec() const { return spec_; }
    std::vector<Parameter<float>>& parameters() { return params_; }
    const std::vector<Parameter<float>>& parameters() const { return params_; }
    std::size_t parameter_count() const;

    /// Runs the architecture against an operation backend (EvalOps or GraphOps).
    template <typename Ops>
    typename Ops::Value forward(Ops& ops, typename Ops::Value x, const ForwardOptions& options = {}) const;

    /// Network with the spec's layout and the given parameter values; every
    /// name and shape must match.
    static Network from_parameters(const NetworkSpec& spec, std::vector<Parameter<float>> params);

private:
    friend Network build_stacked_cnn(const NetworkSpec&, Rng&);
    friend Network build_unet(const NetworkSpec&, Rng&);

    struct Conv {
        std::size_t weight;
        std::size_t bias;
        int kernel;
    };

    explicit Network(NetworkSpec spec) : spec_(spec) {}
    Conv add_conv(const std::string& name, int c_in, int c_out, int kernel, Rng* rng);
    Conv add_upconv(const std::string& name, int c_in, int c_out, Rng* rng);
    void lay_out(Rng* rng);

    NetworkSpec spec_;
    std::vector<Parameter<float>> params_;
    std::vector<Conv> body_;                 // stacked modules, or U-Net encoder convs (2 per stage)
    std::vector<Conv> bottleneck_;
    std::vector<Conv> up_;                   // one per decoder stage, deepest first
    std::vector<Conv> decoder_;              // 2 per decoder stage, deepest first
    Conv head_{};
};

/// 19 modules of [3x3 conv to base_channels + ReLU], then a 3x3 conv to
/// out_channels + ReLU. Kaiming-uniform weights, zero biases.
Network build_stacked_cnn(const NetworkSpec& spec, Rng& rng);

/// Encoder of unet_depth stages [2 x (3x3 conv + ReLU), 2x2 maxpool] with
/// channel doubling, a bottleneck, mirrored decoder stages [2x2 up-convolution,
/// skip concatenation, 2 x (3x3 conv + ReLU)] and a 1x1 conv + ReLU head.
Network build_unet(const NetworkSpec& spec, Rng& rng);

/// Builds either architecture from Rng(spec.seed).
Network build_network(const NetworkSpec& spec);

/// Graph-free backend: values are tensors.
class EvalOps {
public:
    using Value = Tensor4<float>;
    explicit EvalOps(const std::vector<Parameter<float>>& params) : params_(params) {}

    Value conv(const Value& x, std::size_t weight, std::size_t bias, int padding) const {
        return checked(kernels::conv2d(x, params_[weight].value, params_[bias].value, padding), "conv2d");
    }
    Value upconv(const Value& x, std::size_t weight, std::size_t bias) const {
        return checked(kernels::conv_transpose2d(x, params_[weight].value, params_[bias].value), "conv_transpose2d");
    }
    Value relu(const Value& x) const { return kernels::relu(x); }
    Value maxpool(const Value& x) const { return kernels::maxpool2x2<float>(x, nullptr); }
    Value concat(const Value& a, const Value& b) const { return kernels::concat_channels(a, b); }
    Value zeros_like(const Value& x) const { return Value(x.shape()); }

private:
    static Value checked(Value v, const char* what) {
        check_finite<float>(v.data(), what);
        return v;
    }
    const std::vector<Parameter<float>>& params_;
};

/// Recording backend: values are graph nodes; parameters enter the graph once.
class GraphOps {
public:
    using Value = NodeId;
    GraphOps(Graph<float>& graph, std::vector<Parameter<float>>& params)
        : graph_(graph), params_(params), nodes_(params.size()) {}

    Value conv(Value x, std::size_t weight, std::size_t bias, int padding) {
        return lff::conv2d(graph_, x, param(weight), param(bias), padding);
    }
    Value upconv(Value x, std::size_t weight, std::size_t bias) {
        return lff::conv_transpose2d(graph_, x, param(weight), param(bias));
    }
    Value relu(Value x) { return lff::relu(graph_, x); }
    Value maxpool(Value x) { return lff::maxpool2x2(graph_, x); }
    Value concat(Value a, Value b) { return lff::concat_channels(graph_, a, b); }
    Value zeros_like(Value x) { return graph_.constant(Tensor4<float>(graph_.value(x).shape())); }

private:
    NodeId param(std::size_t i) {
        if (!nodes_[i]) nodes_[i] = graph_.parameter(params_[i]);
        return *nodes_[i];
    }
    Graph<float>& graph_;
    std::vector<Parameter<float>>& params_;
    std::vector<std::optional<NodeId>> nodes_;
};

template <typename Ops>
typename Ops::Value Network::forward(Ops& ops, typename Ops::Value x, const ForwardOptions& options) const {
    auto conv_relu = [&](const auto& in, const Conv& c) { return ops.relu(ops.conv(in, c.weight, c.bias, c.kernel / 2)); };
    if (spec_.arch == Architecture::stacked) {
        for (const Conv& c : body_) x = conv_relu(x, c);
        return conv_relu(x, head_);
    }
    std::vector<typename Ops::Value> skips;
    for (int s = 0; s < spec_.unet_depth; ++s) {
        x = conv_relu(x, body_[2 * s]);
        x = conv_relu(x, body_[2 * s + 1]);
        skips.push_back(x);
        x = ops.maxpool(x);
    }
    x = conv_relu(x, bottleneck_[0]);
    x = conv_relu(x, bottleneck_[1]);
    for (int s = 0; s < spec_.unet_depth; ++s) {
        const Conv& up = up_[s];
        x = ops.upconv(x, up.weight, up.bias);
        auto& skip = skips[skips.size() - 1 - s];
        x = ops.concat(options.zero_skips ? ops.zeros_like(skip) : skip, x);
        x = conv_relu(x, decoder_[2 * s]);
        x = conv_relu(x, decoder_[2 * s + 1]);
    }
    return ops.relu(ops.conv(x, head_.weight, head_.bias, 0));
}

/// Graph-free inference: views become input channels, output channels become
/// layers. U-Net inputs are reflect-padded on the bottom/right to the spatial
/// multiple and cropped back. With clamp, layers are clipped to [0, 1].
LayerStack forward_infer(const Network& network, const LightField& lf, bool clamp,
                         Modulation mode = Modulation::additive, const ForwardOptions& options = {});

/// Same computation on a (N, C, H, W) tensor whose spatial size already
/// satisfies the spatial multiple; returns the raw network output.
Tensor4<float> forward_tensor(const Network& network, const Tensor4<float>& input, const ForwardOptions& options = {});

struct CheckpointMeta {
    int epoch = 0;
    double test_psnr_db = 0.0;
    std::uint64_t training_seed = 0;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Directory layout: spec.json (architecture + metadata), manifest.json
/// (name -> shape, byte length, order) and one little-endian float32 blob
/// `<name>.f32` per parameter.
void save_checkpoint(const std::filesystem::path& dir, const Network& network, const CheckpointMeta& meta);

struct Checkpoint {
    Network network;
    CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace lff
