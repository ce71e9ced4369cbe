#include "lff/serialize.hpp"

#include <fstream>

namespace lff {

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("missing file: " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

namespace {

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& field) {
    if (j.contains(key)) j.at(key).get_to(field);
}

}  // namespace

void to_json(nlohmann::json& j, const DisplayGeometry& g) {
    j = {{"layer_depths", g.layer_depths}, {"pixel_pitch", g.pixel_pitch}, {"span_u_deg", g.span_u_deg},
         {"span_v_deg", g.span_v_deg},     {"views_u", g.views_u},         {"views_v", g.views_v},
         {"mode", to_string(g.mode)}};
}

void from_json(const nlohmann::json& j, DisplayGeometry& g) {
    read_opt(j, "layer_depths", g.layer_depths);
    read_opt(j, "pixel_pitch", g.pixel_pitch);
    read_opt(j, "span_u_deg", g.span_u_deg);
    read_opt(j, "span_v_deg", g.span_v_deg);
    read_opt(j, "views_u", g.views_u);
    read_opt(j, "views_v", g.views_v);
    if (j.contains("mode")) g.mode = parse_modulation(j.at("mode").get<std::string>());
}

void to_json(nlohmann::json& j, const NetworkSpec& s) {
    j = {{"arch", to_string(s.arch)},          {"in_channels", s.in_channels},
         {"out_channels", s.out_channels},     {"base_channels", s.base_channels},
         {"stacked_modules", s.stacked_modules}, {"unet_depth", s.unet_depth},
         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, NetworkSpec& s) {
    if (j.contains("arch")) s.arch = parse_architecture(j.at("arch").get<std::string>());
    read_opt(j, "in_channels", s.in_channels);
    read_opt(j, "out_channels", s.out_channels);
    read_opt(j, "base_channels", s.base_channels);
    read_opt(j, "stacked_modules", s.stacked_modules);
    read_opt(j, "unet_depth", s.unet_depth);
    read_opt(j, "seed", s.seed);
}

void to_json(nlohmann::json& j, const SolveConfig& c) {
    j = {{"iterations", c.iterations},
         {"relaxation", c.relaxation},
         {"init", c.init ? nlohmann::json(*c.init) : nlohmann::json(nullptr)},
         {"epsilon_floor", c.epsilon_floor},
         {"trace_every", c.trace_every},
         {"crop", c.crop}};
}

void from_json(const nlohmann::json& j, SolveConfig& c) {
    read_opt(j, "iterations", c.iterations);
    read_opt(j, "relaxation", c.relaxation);
    if (j.contains("init")) {
        c.init = j.at("init").is_null() ? std::nullopt : std::optional<double>(j.at("init").get<double>());
    }
    read_opt(j, "epsilon_floor", c.epsilon_floor);
    read_opt(j, "trace_every", c.trace_every);
    read_opt(j, "crop", c.crop);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"lr", c.lr},
         {"lambda_reg", c.lambda_reg}, {"seed", c.seed},             {"arch", c.arch},
         {"eval_every", c.eval_every}, {"crop", c.crop}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "lr", c.lr);
    read_opt(j, "lambda_reg", c.lambda_reg);
    read_opt(j, "seed", c.seed);
    if (j.contains("arch")) from_json(j.at("arch"), c.arch);
    read_opt(j, "eval_every", c.eval_every);
    read_opt(j, "crop", c.crop);
}

void to_json(nlohmann::json& j, const SceneParams& p) {
    j = {{"planes", p.planes}, {"family", to_string(p.family)}, {"height", p.height},
         {"width", p.width},   {"depth_min", p.depth_min},      {"depth_max", p.depth_max}};
}

void from_json(const nlohmann::json& j, SceneParams& p) {
    read_opt(j, "planes", p.planes);
    if (j.contains("family")) p.family = parse_texture_family(j.at("family").get<std::string>());
    read_opt(j, "height", p.height);
    read_opt(j, "width", p.width);
    read_opt(j, "depth_min", p.depth_min);
    read_opt(j, "depth_max", p.depth_max);
}

void to_json(nlohmann::json& j, const AugmentParams& p) {
    j = {{"scales", p.scales}, {"crop", p.crop}, {"crops_per_scale", p.crops_per_scale}};
}

void from_json(const nlohmann::json& j, AugmentParams& p) {
    read_opt(j, "scales", p.scales);
    read_opt(j, "crop", p.crop);
    read_opt(j, "crops_per_scale", p.crops_per_scale);
}

void to_json(nlohmann::json& j, const DatasetParams& p) {
    j = {{"scenes", p.scenes}, {"scene", p.scene}, {"augment", p.augment}, {"downscale", p.downscale},
         {"unet_depth", p.unet_depth}};
}

void from_json(const nlohmann::json& j, DatasetParams& p) {
    read_opt(j, "scenes", p.scenes);
    if (j.contains("scene")) from_json(j.at("scene"), p.scene);
    if (j.contains("augment")) from_json(j.at("augment"), p.augment);
    read_opt(j, "downscale", p.downscale);
    read_opt(j, "unet_depth", p.unet_depth);
}

void to_json(nlohmann::json& j, const SampleRecord& r) {
    j = {{"dir", r.dir},
         {"split", r.split == Split::train ? "train" : "test"},
         {"scene_id", r.scene_id},
         {"augmentation",
          {{"scale", r.augmentation.scale},
           {"crop_x", r.augmentation.crop_x},
           {"crop_y", r.augmentation.crop_y},
           {"crop_size", r.augmentation.crop_size}}},
         {"height", r.height},
         {"width", r.width}};
}

void from_json(const nlohmann::json& j, SampleRecord& r) {
    j.at("dir").get_to(r.dir);
    const std::string split = j.at("split").get<std::string>();
    if (split != "train" && split != "test") throw FormatError("unknown split '" + split + "'");
    r.split = split == "train" ? Split::train : Split::test;
    j.at("scene_id").get_to(r.scene_id);
    const auto& a = j.at("augmentation");
    a.at("scale").get_to(r.augmentation.scale);
    a.at("crop_x").get_to(r.augmentation.crop_x);
    a.at("crop_y").get_to(r.augmentation.crop_y);
    a.at("crop_size").get_to(r.augmentation.crop_size);
    j.at("height").get_to(r.height);
    j.at("width").get_to(r.width);
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = {{"format_version", m.format_version}, {"geometry", m.geometry},          {"seed", m.seed},
         {"unet_depth", m.unet_depth},         {"sample_count", m.samples.size()}, {"samples", m.samples}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
    j.at("format_version").get_to(m.format_version);
    m.geometry = j.at("geometry").get<DisplayGeometry>();
    j.at("seed").get_to(m.seed);
    j.at("unet_depth").get_to(m.unet_depth);
    m.samples = j.at("samples").get<std::vector<SampleRecord>>();
}

}  // namespace lff
