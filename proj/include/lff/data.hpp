#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lff/display.hpp"
#include "lff/random.hpp"

namespace lff {

enum class TextureFamily { mixed, checker, gradient, noise, glyph };

std::string to_string(TextureFamily f);
TextureFamily parse_texture_family(const std::string& s);

struct ScenePlane {
    double depth = 0.0;            ///< mm, same convention as layer depths
    std::vector<double> texture;   ///< H×W in [0, 1]
    std::vector<double> alpha;     ///< H×W in {0, 1}
};

/// Planes ordered far to near (ascending depth); the farthest is fully opaque.
struct Scene {
    int height = 0;
    int width = 0;
    std::uint64_t seed = 0;
    std::vector<ScenePlane> planes;
};

struct SceneParams {
    int planes = 3;
    TextureFamily family = TextureFamily::mixed;
    int height = 96;
    int width = 96;
    double depth_min = -6.0;
    double depth_max = 6.0;

    void validate() const;
};

Scene gen_scene(std::uint64_t seed, const SceneParams& params);

/// Composites the planes far to near per view with the display's shear-shift
/// rule: premultiplied "over" with bilinearly sampled texture and alpha, which
/// overwrites wherever the sampled alpha is 1. The result is clamped to [0, 1].
LightField render_target_lf(const Scene& scene, const DisplayGeometry& geometry);

struct AugmentParams {
    std::vector<double> scales{1.0, 0.75, 0.5, 0.25};
    int crop = 64;
    int crops_per_scale = 5;

    void validate() const;
};

struct AugmentRecord {
    double scale = 1.0;
    int crop_x = 0;
    int crop_y = 0;
    int crop_size = 0;
};

struct Patch {
    LightField lf;
    AugmentRecord record;
};

/// For every scale and every random crop origin, the scaled crop of all views.
/// The same window is applied to every view of a patch.
std::vector<Patch> augment(const LightField& lf, Rng& rng, const AugmentParams& params);

/// 2×2 box-filter downscale of every view (odd trailing rows/columns dropped).
LightField downscale_by_2(const LightField& lf);

enum class Split { train, test };

struct SampleRecord {
    std::string dir;
    Split split = Split::train;
    int scene_id = 0;
    AugmentRecord augmentation;
    int height = 0;
    int width = 0;
};

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetManifest {
    int format_version = kDatasetFormatVersion;
    DisplayGeometry geometry;
    std::uint64_t seed = 0;
    int unet_depth = 4;  ///< crops must be divisible by 2^unet_depth
    std::vector<SampleRecord> samples;
};

struct DatasetParams {
    int scenes = 25;  ///< training scenes; one further scene is held out for testing
    SceneParams scene;
    AugmentParams augment;
    bool downscale = false;  ///< reduce the pixel count by 2×2 averaging before cropping
    int unet_depth = 4;

    void validate() const;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<LightField> train;  ///< patches, in manifest order
    LightField test;                ///< held-out full-frame light field
};

/// Deterministic given (seed, geometry, params). Train and test are split by scene.
Dataset make_dataset(std::uint64_t seed, const DisplayGeometry& geometry, const DatasetParams& params);

/// root/manifest.json, root/sample_{i}/ for training patches and root/test_lf/
/// for the held-out light field.
void write_dataset(const std::filesystem::path& root, const Dataset& dataset, bool with_pfm = true);

/// Validates the format version, sample counts and every image dimension.
Dataset read_dataset(const std::filesystem::path& root);

/// Per-index seed derivation (splitmix64 of seed and index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace lff
