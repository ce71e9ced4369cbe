#include "lff/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lff/image_io.hpp"
#include "lff/serialize.hpp"

namespace lff {

std::string to_string(TextureFamily f) {
    switch (f) {
        case TextureFamily::mixed: return "mixed";
        case TextureFamily::checker: return "checker";
        case TextureFamily::gradient: return "gradient";
        case TextureFamily::noise: return "noise";
        case TextureFamily::glyph: return "glyph";
    }
    return "mixed";
}

TextureFamily parse_texture_family(const std::string& s) {
    for (TextureFamily f : {TextureFamily::mixed, TextureFamily::checker, TextureFamily::gradient, TextureFamily::noise,
                            TextureFamily::glyph}) {
        if (to_string(f) == s) return f;
    }
    throw ValidationError("unknown texture family '" + s + "'");
}

void SceneParams::validate() const {
    if (planes < 1) throw ValidationError("scene: plane count must be at least 1");
    if (height < 1 || width < 1) throw ValidationError("scene: dimensions must be positive");
    if (!(depth_min <= depth_max)) throw ValidationError("scene: depth_min must not exceed depth_max");
}

void AugmentParams::validate() const {
    if (scales.empty()) throw ValidationError("augment: at least one intensity scale is required");
    for (double s : scales) {
        if (!(s > 0.0 && s <= 1.0)) throw ValidationError("augment: intensity scales must lie in (0, 1]");
    }
    if (crop < 1) throw ValidationError("augment: crop size must be positive");
    if (crops_per_scale < 1) throw ValidationError("augment: crops_per_scale must be at least 1");
}

void DatasetParams::validate() const {
    if (scenes < 1) throw ValidationError("dataset: at least one training scene is required");
    scene.validate();
    augment.validate();
    if (unet_depth < 0) throw ValidationError("dataset: unet_depth must be non-negative");
    const int divisor = 1 << unet_depth;
    if (augment.crop % divisor != 0) {
        throw ValidationError("dataset: crop size " + std::to_string(augment.crop) + " is not divisible by 2^" +
                              std::to_string(unet_depth));
    }
    const int h = downscale ? scene.height / 2 : scene.height;
    const int w = downscale ? scene.width / 2 : scene.width;
    if (augment.crop > h || augment.crop > w) {
        throw ValidationError("dataset: crop size " + std::to_string(augment.crop) + " exceeds the " +
                              std::to_string(h) + "x" + std::to_string(w) + " scene");
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace {

using Image = std::vector<double>;

Image checker_texture(Rng& rng, int h, int w) {
    const double period = rng.uniform(6.0, 16.0);
    const double lo = rng.uniform(0.05, 0.4);
    const double hi = rng.uniform(0.6, 0.95);
    const double ox = rng.uniform(0.0, period);
    const double oy = rng.uniform(0.0, period);
    Image img(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const long cx = static_cast<long>(std::floor((x + ox) / period));
            const long cy = static_cast<long>(std::floor((y + oy) / period));
            img[static_cast<std::size_t>(y) * w + x] = ((cx + cy) % 2 == 0) ? hi : lo;
        }
    }
    return img;
}

Image gradient_texture(Rng& rng, int h, int w) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double lo = rng.uniform(0.05, 0.45);
    const double hi = rng.uniform(0.55, 0.95);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double extent = std::abs(c) * (w - 1) + std::abs(s) * (h - 1) + 1e-9;
    const double origin = std::min(0.0, c * (w - 1)) + std::min(0.0, s * (h - 1));
    Image img(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double t = (c * x + s * y - origin) / extent;
            img[static_cast<std::size_t>(y) * w + x] = lo + (hi - lo) * t;
        }
    }
    return img;
}

// Sum of random low-frequency plane waves, rescaled into [lo, hi].
Image noise_texture(Rng& rng, int h, int w) {
    constexpr int kWaves = 8;
    double fx[kWaves], fy[kWaves], ph[kWaves], amp[kWaves];
    for (int i = 0; i < kWaves; ++i) {
        const double f = rng.uniform(0.01, 0.15);
        const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
        fx[i] = f * std::cos(dir);
        fy[i] = f * std::sin(dir);
        ph[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        amp[i] = rng.uniform(0.3, 1.0);
    }
    const double lo = rng.uniform(0.05, 0.3);
    const double hi = rng.uniform(0.7, 0.95);
    Image img(static_cast<std::size_t>(h) * w);
    double mn = 1e300;
    double mx = -1e300;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double v = 0.0;
            for (int i = 0; i < kWaves; ++i) v += amp[i] * std::sin(2.0 * std::numbers::pi * (fx[i] * x + fy[i] * y) + ph[i]);
            img[static_cast<std::size_t>(y) * w + x] = v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
    }
    const double span = mx - mn > 1e-12 ? mx - mn : 1.0;
    for (double& v : img) v = lo + (hi - lo) * (v - mn) / span;
    return img;
}

enum class ShapeKind { disc, rect, ring, cross };

// Rasterizes one random shape; returns whether pixel (x, y) is inside.
struct ShapeDesc {
    ShapeKind kind;
    double cx, cy, r0, r1, angle;

    bool contains(double x, double y) const {
        const double dx = x - cx;
        const double dy = y - cy;
        const double u = std::cos(angle) * dx + std::sin(angle) * dy;
        const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
        switch (kind) {
            case ShapeKind::disc: return u * u + v * v <= r0 * r0;
            case ShapeKind::rect: return std::abs(u) <= r0 && std::abs(v) <= r1;
            case ShapeKind::ring: {
                const double d2 = u * u + v * v;
                return d2 <= r0 * r0 && d2 >= (0.55 * r0) * (0.55 * r0);
            }
            case ShapeKind::cross: return (std::abs(u) <= r0 && std::abs(v) <= 0.3 * r1) || (std::abs(v) <= r0 && std::abs(u) <= 0.3 * r1);
        }
        return false;
    }
};

ShapeDesc random_shape(Rng& rng, int h, int w) {
    const double size = std::min(h, w);
    ShapeDesc s;
    s.kind = static_cast<ShapeKind>(rng.below(4));
    s.cx = rng.uniform(0.2 * w, 0.8 * w);
    s.cy = rng.uniform(0.2 * h, 0.8 * h);
    s.r0 = rng.uniform(0.12 * size, 0.3 * size);
    s.r1 = rng.uniform(0.12 * size, 0.3 * size);
    s.angle = rng.uniform(0.0, std::numbers::pi);
    return s;
}

Image glyph_texture(Rng& rng, int h, int w) {
    Image img(static_cast<std::size_t>(h) * w, rng.uniform(0.1, 0.5));
    const int shapes = 2 + static_cast<int>(rng.below(3));
    for (int k = 0; k < shapes; ++k) {
        const ShapeDesc s = random_shape(rng, h, w);
        const double level = rng.uniform(0.05, 0.95);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (s.contains(x, y)) img[static_cast<std::size_t>(y) * w + x] = level;
            }
        }
    }
    return img;
}

Image texture(Rng& rng, TextureFamily family, int h, int w) {
    if (family == TextureFamily::mixed) family = static_cast<TextureFamily>(1 + rng.below(4));
    switch (family) {
        case TextureFamily::checker: return checker_texture(rng, h, w);
        case TextureFamily::gradient: return gradient_texture(rng, h, w);
        case TextureFamily::noise: return noise_texture(rng, h, w);
        default: return glyph_texture(rng, h, w);
    }
}

// Union of 1-3 shapes covering a non-degenerate fraction of the frame.
Image alpha_mask(Rng& rng, int h, int w) {
    const std::size_t total = static_cast<std::size_t>(h) * w;
    for (int attempt = 0;; ++attempt) {
        Image mask(total, 0.0);
        const int shapes = 1 + static_cast<int>(rng.below(3));
        for (int k = 0; k < shapes; ++k) {
            const ShapeDesc s = random_shape(rng, h, w);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (s.contains(x, y)) mask[static_cast<std::size_t>(y) * w + x] = 1.0;
                }
            }
        }
        const double covered = std::count(mask.begin(), mask.end(), 1.0) / static_cast<double>(total);
        if ((covered >= 0.05 && covered <= 0.7) || attempt >= 32) {
            if (covered == 0.0) mask[total / 2] = 1.0;
            if (covered == 1.0) mask[0] = 0.0;
            return mask;
        }
    }
}

}  // namespace

Scene gen_scene(std::uint64_t seed, const SceneParams& params) {
    params.validate();
    Rng rng(seed);
    Scene scene;
    scene.height = params.height;
    scene.width = params.width;
    scene.seed = seed;
    std::vector<double> depths(params.planes);
    for (double& d : depths) d = rng.uniform(params.depth_min, params.depth_max);
    std::sort(depths.begin(), depths.end());
    const std::size_t total = static_cast<std::size_t>(params.height) * params.width;
    for (int k = 0; k < params.planes; ++k) {
        ScenePlane plane;
        plane.depth = depths[k];
        plane.texture = texture(rng, params.family, params.height, params.width);
        plane.alpha = k == 0 ? Image(total, 1.0) : alpha_mask(rng, params.height, params.width);
        scene.planes.push_back(std::move(plane));
    }
    return scene;
}

LightField render_target_lf(const Scene& scene, const DisplayGeometry& geometry) {
    geometry.validate();
    if (scene.planes.empty()) throw ValidationError("render: scene has no planes");
    const int h = scene.height;
    const int w = scene.width;
    const std::size_t px = static_cast<std::size_t>(h) * w;
    LightField lf(geometry.views_u, geometry.views_v, h, w);
    std::vector<std::vector<double>> premultiplied;
    for (const ScenePlane& p : scene.planes) {
        if (p.texture.size() != px || p.alpha.size() != px) throw ValidationError("render: plane size mismatch");
        std::vector<double> pm(px);
        for (std::size_t i = 0; i < px; ++i) pm[i] = p.texture[i] * p.alpha[i];
        premultiplied.push_back(std::move(pm));
    }
    std::vector<double> a(px);
    std::vector<double> c(px);
    for (int vb = 0; vb < geometry.views_v; ++vb) {
        for (int va = 0; va < geometry.views_u; ++va) {
            auto out = lf.view(va, vb);
            for (std::size_t k = 0; k < scene.planes.size(); ++k) {
                const double z = scene.planes[k].depth;
                const Shift s{z * geometry.tangent_u(va) / geometry.pixel_pitch,
                              z * geometry.tangent_v(vb) / geometry.pixel_pitch};
                shift_sample<double>(scene.planes[k].alpha, h, w, s, a);
                shift_sample<double>(premultiplied[k], h, w, s, c);
                for (std::size_t i = 0; i < px; ++i) out[i] = out[i] * (1.0 - a[i]) + c[i];
            }
        }
    }
    lf.clamp01();
    return lf;
}

std::vector<Patch> augment(const LightField& lf, Rng& rng, const AugmentParams& params) {
    params.validate();
    if (params.crop > lf.height() || params.crop > lf.width()) {
        throw ValidationError("augment: crop " + std::to_string(params.crop) + " is larger than the " +
                              std::to_string(lf.height()) + "x" + std::to_string(lf.width()) + " image");
    }
    std::vector<Patch> patches;
    const int c = params.crop;
    for (double scale : params.scales) {
        for (int k = 0; k < params.crops_per_scale; ++k) {
            Patch p;
            p.record.scale = scale;
            p.record.crop_size = c;
            p.record.crop_y = static_cast<int>(rng.below(static_cast<std::uint64_t>(lf.height() - c + 1)));
            p.record.crop_x = static_cast<int>(rng.below(static_cast<std::uint64_t>(lf.width() - c + 1)));
            p.lf = LightField(lf.views_u(), lf.views_v(), c, c);
            for (std::size_t v = 0; v < lf.view_count(); ++v) {
                auto src = lf.view(v);
                auto dst = p.lf.view(v);
                for (int y = 0; y < c; ++y) {
                    for (int x = 0; x < c; ++x) {
                        dst[static_cast<std::size_t>(y) * c + x] =
                            scale * src[static_cast<std::size_t>(y + p.record.crop_y) * lf.width() + x + p.record.crop_x];
                    }
                }
            }
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

LightField downscale_by_2(const LightField& lf) {
    const int h = lf.height() / 2;
    const int w = lf.width() / 2;
    if (h < 1 || w < 1) throw ValidationError("downscale: image too small");
    LightField out(lf.views_u(), lf.views_v(), h, w);
    for (std::size_t v = 0; v < lf.view_count(); ++v) {
        auto src = lf.view(v);
        auto dst = out.view(v);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(2 * y) * lf.width() + 2 * x;
                dst[static_cast<std::size_t>(y) * w + x] =
                    0.25 * (src[i] + src[i + 1] + src[i + lf.width()] + src[i + lf.width() + 1]);
            }
        }
    }
    return out;
}

Dataset make_dataset(std::uint64_t seed, const DisplayGeometry& geometry, const DatasetParams& params) {
    params.validate();
    geometry.validate();
    Dataset ds;
    ds.manifest.geometry = geometry;
    ds.manifest.seed = seed;
    ds.manifest.unet_depth = params.unet_depth;

    // Halving the resolution doubles the effective pixel pitch of the views.
    DisplayGeometry render_geometry = geometry;
    if (params.downscale) ds.manifest.geometry.pixel_pitch *= 2.0;

    auto render = [&](int scene_id) {
        LightField lf = render_target_lf(gen_scene(derive_seed(seed, 2 * scene_id), params.scene), render_geometry);
        return params.downscale ? downscale_by_2(lf) : lf;
    };

    for (int s = 0; s < params.scenes; ++s) {
        const LightField lf = render(s);
        Rng rng(derive_seed(seed, 2 * s + 1));
        for (Patch& p : augment(lf, rng, params.augment)) {
            SampleRecord rec;
            rec.dir = "sample_" + std::to_string(ds.train.size());
            rec.split = Split::train;
            rec.scene_id = s;
            rec.augmentation = p.record;
            rec.height = p.lf.height();
            rec.width = p.lf.width();
            ds.manifest.samples.push_back(rec);
            ds.train.push_back(std::move(p.lf));
        }
    }
    ds.test = render(params.scenes);
    SampleRecord test;
    test.dir = "test_lf";
    test.split = Split::test;
    test.scene_id = params.scenes;
    test.augmentation = AugmentRecord{1.0, 0, 0, 0};
    test.height = ds.test.height();
    test.width = ds.test.width();
    ds.manifest.samples.push_back(test);
    return ds;
}

void write_dataset(const std::filesystem::path& root, const Dataset& dataset, bool with_pfm) {
    std::filesystem::create_directories(root);
    std::size_t train_index = 0;
    for (const SampleRecord& rec : dataset.manifest.samples) {
        if (rec.split == Split::train) {
            if (train_index >= dataset.train.size()) throw ValidationError("write_dataset: manifest lists more patches than provided");
            write_lightfield(root / rec.dir, dataset.train[train_index++], with_pfm);
        } else {
            write_lightfield(root / rec.dir, dataset.test, with_pfm, dataset.manifest.geometry);
        }
    }
    if (train_index != dataset.train.size()) throw ValidationError("write_dataset: manifest and patch count differ");
    write_json(root / "manifest.json", dataset.manifest);
}

Dataset read_dataset(const std::filesystem::path& root) {
    Dataset ds;
    const nlohmann::json doc = read_json(root / "manifest.json");
    try {
        const int version = doc.at("format_version").get<int>();
        if (version != kDatasetFormatVersion) {
            throw FormatError("dataset manifest version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kDatasetFormatVersion) + ")");
        }
        ds.manifest = doc.get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed dataset manifest " + (root / "manifest.json").string() + ": " + e.what());
    }
    const DatasetManifest& m = ds.manifest;
    try {
        m.geometry.validate();
    } catch (const ValidationError& e) {
        throw FormatError(std::string("dataset manifest geometry: ") + e.what());
    }
    if (doc.contains("sample_count") && doc.at("sample_count").get<std::size_t>() != m.samples.size()) {
        throw FormatError("dataset manifest sample_count does not match the sample list");
    }
    const int divisor = 1 << m.unet_depth;
    bool have_test = false;
    for (const SampleRecord& rec : m.samples) {
        const LoadedLightField loaded = read_lightfield(root / rec.dir);
        const LightField& lf = loaded.lf;
        if (lf.height() != rec.height || lf.width() != rec.width || lf.views_u() != m.geometry.views_u ||
            lf.views_v() != m.geometry.views_v) {
            throw FormatError("dataset sample " + rec.dir + " does not match its manifest dimensions");
        }
        if (rec.split == Split::train) {
            if (rec.augmentation.crop_size % divisor != 0) {
                throw FormatError("dataset sample " + rec.dir + " crop size is not divisible by 2^" +
                                  std::to_string(m.unet_depth));
            }
            ds.train.push_back(lf);
        } else {
            if (have_test) throw FormatError("dataset manifest lists more than one test light field");
            ds.test = lf;
            have_test = true;
        }
    }
    if (ds.train.empty()) throw FormatError("dataset has no training samples");
    if (!have_test) throw FormatError("dataset has no test light field");
    return ds;
}

}  // namespace lff
