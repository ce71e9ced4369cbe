#include "lff/networks.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "lff/optim.hpp"
#include "lff/serialize.hpp"

namespace lff {

std::string to_string(Architecture a) { return a == Architecture::unet ? "unet" : "stacked"; }

Architecture parse_architecture(const std::string& s) {
    if (s == "unet") return Architecture::unet;
    if (s == "stacked") return Architecture::stacked;
    throw ValidationError("unknown architecture '" + s + "' (expected unet or stacked)");
}

void NetworkSpec::validate() const {
    if (in_channels < 1 || out_channels < 1) throw ValidationError("network: channel counts must be at least 1");
    if (base_channels < 1) throw ValidationError("network: base_channels must be at least 1");
    if (arch == Architecture::stacked && stacked_modules < 1) {
        throw ValidationError("network: stacked_modules must be at least 1");
    }
    if (arch == Architecture::unet && (unet_depth < 1 || unet_depth > 12)) {
        throw ValidationError("network: unet_depth must lie in [1, 12]");
    }
}

namespace {

std::size_t conv_params(std::size_t c_in, std::size_t c_out, std::size_t k) { return c_in * c_out * k * k + c_out; }

}  // namespace

std::size_t param_count(const NetworkSpec& spec) {
    spec.validate();
    const std::size_t in = spec.in_channels;
    const std::size_t out = spec.out_channels;
    const std::size_t base = spec.base_channels;
    if (spec.arch == Architecture::stacked) {
        return conv_params(in, base, 3) + (spec.stacked_modules - 1) * conv_params(base, base, 3) +
               conv_params(base, out, 3);
    }
    std::size_t total = 0;
    std::size_t prev = in;
    for (int s = 0; s < spec.unet_depth; ++s) {
        const std::size_t c = base << s;
        total += conv_params(prev, c, 3) + conv_params(c, c, 3);
        prev = c;
    }
    const std::size_t bottom = base << spec.unet_depth;
    total += conv_params(prev, bottom, 3) + conv_params(bottom, bottom, 3);
    for (int s = spec.unet_depth; s >= 1; --s) {
        const std::size_t hi = base << s;
        const std::size_t lo = base << (s - 1);
        total += hi * lo * 4 + lo;
        total += conv_params(2 * lo, lo, 3) + conv_params(lo, lo, 3);
    }
    return total + conv_params(base, out, 1);
}

std::size_t Network::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.value.size();
    return total;
}

Network::Conv Network::add_conv(const std::string& name, int c_in, int c_out, int kernel, Rng* rng) {
    const Shape4 ws{static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in), static_cast<std::size_t>(kernel),
                    static_cast<std::size_t>(kernel)};
    Conv c{params_.size(), params_.size() + 1, kernel};
    params_.emplace_back(name + ".weight", rng ? kaiming_init<float>(ws, *rng) : Tensor4<float>(ws));
    params_.emplace_back(name + ".bias", Tensor4<float>(Shape4{static_cast<std::size_t>(c_out), 1, 1, 1}));
    return c;
}

Network::Conv Network::add_upconv(const std::string& name, int c_in, int c_out, Rng* rng) {
    const Shape4 ws{static_cast<std::size_t>(c_in), static_cast<std::size_t>(c_out), 2, 2};
    Conv c{params_.size(), params_.size() + 1, 2};
    // Each output pixel of a stride-2 2x2 transposed convolution receives one
    // tap per input channel.
    params_.emplace_back(name + ".weight",
                         rng ? kaiming_init<float>(ws, static_cast<std::size_t>(c_in), *rng) : Tensor4<float>(ws));
    params_.emplace_back(name + ".bias", Tensor4<float>(Shape4{static_cast<std::size_t>(c_out), 1, 1, 1}));
    return c;
}

void Network::lay_out(Rng* rng) {
    spec_.validate();
    const int in = spec_.in_channels;
    const int out = spec_.out_channels;
    const int base = spec_.base_channels;
    if (spec_.arch == Architecture::stacked) {
        for (int m = 0; m < spec_.stacked_modules; ++m) {
            body_.push_back(add_conv("module" + std::to_string(m), m == 0 ? in : base, base, 3, rng));
        }
        head_ = add_conv("head", base, out, 3, rng);
        return;
    }
    int prev = in;
    for (int s = 0; s < spec_.unet_depth; ++s) {
        const int c = base << s;
        const std::string stage = "enc" + std::to_string(s);
        body_.push_back(add_conv(stage + ".conv0", prev, c, 3, rng));
        body_.push_back(add_conv(stage + ".conv1", c, c, 3, rng));
        prev = c;
    }
    const int bottom = base << spec_.unet_depth;
    bottleneck_.push_back(add_conv("bottleneck.conv0", prev, bottom, 3, rng));
    bottleneck_.push_back(add_conv("bottleneck.conv1", bottom, bottom, 3, rng));
    for (int s = spec_.unet_depth; s >= 1; --s) {
        const int hi = base << s;
        const int lo = base << (s - 1);
        const std::string stage = "dec" + std::to_string(s - 1);
        up_.push_back(add_upconv(stage + ".upconv", hi, lo, rng));
        decoder_.push_back(add_conv(stage + ".conv0", 2 * lo, lo, 3, rng));
        decoder_.push_back(add_conv(stage + ".conv1", lo, lo, 3, rng));
    }
    head_ = add_conv("head", base, out, 1, rng);
}

Network build_stacked_cnn(const NetworkSpec& spec, Rng& rng) {
    if (spec.arch != Architecture::stacked) throw ValidationError("build_stacked_cnn: spec arch is not stacked");
    Network net(spec);
    net.lay_out(&rng);
    return net;
}

Network build_unet(const NetworkSpec& spec, Rng& rng) {
    if (spec.arch != Architecture::unet) throw ValidationError("build_unet: spec arch is not unet");
    Network net(spec);
    net.lay_out(&rng);
    return net;
}

Network build_network(const NetworkSpec& spec) {
    Rng rng(spec.seed);
    return spec.arch == Architecture::unet ? build_unet(spec, rng) : build_stacked_cnn(spec, rng);
}

Network Network::from_parameters(const NetworkSpec& spec, std::vector<Parameter<float>> params) {
    Network net(spec);
    net.lay_out(nullptr);
    if (params.size() != net.params_.size()) {
        throw FormatError("network: expected " + std::to_string(net.params_.size()) + " parameter tensors, got " +
                          std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& want = net.params_[i];
        if (params[i].name != want.name || params[i].value.shape() != want.value.shape()) {
            throw FormatError("network: parameter " + std::to_string(i) + " is '" + params[i].name + "' " +
                              to_string(params[i].value.shape()) + ", expected '" + want.name + "' " +
                              to_string(want.value.shape()));
        }
        net.params_[i].value = std::move(params[i].value);
    }
    return net;
}

Tensor4<float> forward_tensor(const Network& network, const Tensor4<float>& input, const ForwardOptions& options) {
    const NetworkSpec& spec = network.spec();
    const Shape4& s = input.shape();
    if (s.c != static_cast<std::size_t>(spec.in_channels)) {
        throw ValidationError("forward: network expects " + std::to_string(spec.in_channels) +
                              " input channels, got " + std::to_string(s.c));
    }
    const std::size_t m = spec.spatial_multiple();
    if (s.h % m != 0 || s.w % m != 0) {
        throw ValidationError("forward: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                              " is not a multiple of " + std::to_string(m));
    }
    EvalOps ops(network.parameters());
    return network.forward(ops, input, options);
}

namespace {

std::size_t reflect(std::size_t i, std::size_t n) { return i < n ? i : 2 * (n - 1) - i; }

}  // namespace

LayerStack forward_infer(const Network& network, const LightField& lf, bool clamp, Modulation mode,
                         const ForwardOptions& options) {
    const NetworkSpec& spec = network.spec();
    if (lf.view_count() != static_cast<std::size_t>(spec.in_channels)) {
        throw ValidationError("forward_infer: light field has " + std::to_string(lf.view_count()) +
                              " views, network expects " + std::to_string(spec.in_channels));
    }
    const std::size_t m = spec.spatial_multiple();
    const std::size_t h = lf.height();
    const std::size_t w = lf.width();
    if (h < m || w < m) {
        throw ValidationError("forward_infer: a " + std::to_string(h) + "x" + std::to_string(w) +
                              " image is too small for U-Net depth " + std::to_string(spec.unet_depth));
    }
    const std::size_t ph = (h + m - 1) / m * m;
    const std::size_t pw = (w + m - 1) / m * m;
    Tensor4<float> input(Shape4{1, lf.view_count(), ph, pw});
    for (std::size_t v = 0; v < lf.view_count(); ++v) {
        auto src = lf.view(v);
        for (std::size_t y = 0; y < ph; ++y) {
            const std::size_t sy = reflect(y, h);
            for (std::size_t x = 0; x < pw; ++x) input.at(0, v, y, x) = static_cast<float>(src[sy * w + reflect(x, w)]);
        }
    }
    const Tensor4<float> out = forward_tensor(network, input, options);
    LayerStack stack(out.shape().c, static_cast<int>(h), static_cast<int>(w), mode);
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        auto dst = stack.layer(l);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double v = out.at(0, l, y, x);
                dst[y * w + x] = clamp ? std::clamp(v, 0.0, 1.0) : v;
            }
        }
    }
    return stack;
}

namespace {

void write_blob(const std::filesystem::path& path, const Tensor4<float>& t) {
    std::vector<char> bytes(t.size() * 4);
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint32_t u = std::bit_cast<std::uint32_t>(t[i]);
        for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw IoError("failed writing " + path.string());
    }
}

Tensor4<float> read_blob(const std::filesystem::path& path, const Shape4& shape, std::size_t expected_bytes) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("checkpoint blob missing: " + path.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    if (size != expected_bytes || expected_bytes != shape.size() * 4) {
        throw FormatError("checkpoint blob " + path.filename().string() + " has " + std::to_string(size) +
                          " bytes, expected " + std::to_string(shape.size() * 4));
    }
    in.seekg(0);
    std::vector<unsigned char> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    Tensor4<float> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        t[i] = std::bit_cast<float>(u);
    }
    return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Network& network, const CheckpointMeta& meta) {
    std::filesystem::create_directories(dir);
    nlohmann::json spec_json = {
        {"format_version", kCheckpointFormatVersion},
        {"network", network.spec()},
        {"metadata", {{"epoch", meta.epoch}, {"test_psnr_db", meta.test_psnr_db}, {"training_seed", meta.training_seed}}},
    };
    nlohmann::json params = nlohmann::json::array();
    const auto& ps = network.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Shape4& s = ps[i].value.shape();
        const std::string file = ps[i].name + ".f32";
        params.push_back({{"name", ps[i].name},
                          {"shape", {s.n, s.c, s.h, s.w}},
                          {"bytes", s.size() * 4},
                          {"order", i},
                          {"file", file}});
        write_blob(dir / file, ps[i].value);
    }
    write_json(dir / "spec.json", spec_json);
    write_json(dir / "manifest.json", {{"format_version", kCheckpointFormatVersion}, {"parameters", params}});
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const nlohmann::json spec_json = read_json(dir / "spec.json");
    const nlohmann::json manifest = read_json(dir / "manifest.json");
    try {
        for (const auto* doc : {&spec_json, &manifest}) {
            const int version = doc->at("format_version").get<int>();
            if (version != kCheckpointFormatVersion) {
                throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kCheckpointFormatVersion) + ")");
            }
        }
        const NetworkSpec spec = spec_json.at("network").get<NetworkSpec>();
        CheckpointMeta meta;
        const auto& md = spec_json.at("metadata");
        meta.epoch = md.at("epoch").get<int>();
        meta.test_psnr_db = md.at("test_psnr_db").get<double>();
        meta.training_seed = md.at("training_seed").get<std::uint64_t>();

        std::vector<nlohmann::json> entries(manifest.at("parameters").begin(), manifest.at("parameters").end());
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return a.at("order").template get<std::size_t>() < b.at("order").template get<std::size_t>(); });
        std::vector<Parameter<float>> params;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            if (e.at("order").get<std::size_t>() != i) throw FormatError("checkpoint manifest order indices are not contiguous");
            const auto dims = e.at("shape").get<std::vector<std::size_t>>();
            if (dims.size() != 4) throw FormatError("checkpoint manifest shape must have 4 dimensions");
            const Shape4 shape{dims[0], dims[1], dims[2], dims[3]};
            params.emplace_back(e.at("name").get<std::string>(),
                                read_blob(dir / e.at("file").get<std::string>(), shape, e.at("bytes").get<std::size_t>()));
        }
        return Checkpoint{Network::from_parameters(spec, std::move(params)), meta};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint in " + dir.string() + ": " + e.what());
    }
}

}  // namespace lff
