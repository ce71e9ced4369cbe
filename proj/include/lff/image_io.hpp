#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lff/display.hpp"

namespace lff {

struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  ///< row-major, top row first
};

/// 8-bit grayscale PNG; values are clamped to [0, 1] and rounded to v * 255.
void write_png(const std::filesystem::path& path, std::span<const double> pixels, int height, int width);
/// Values scaled to [0, 1].
GrayImage read_png(const std::filesystem::path& path);

/// Grayscale PFM (`Pf`, scale -1.0, little-endian float32, bottom row first on disk).
void write_pfm(const std::filesystem::path& path, std::span<const double> pixels, int height, int width);
GrayImage read_pfm(const std::filesystem::path& path);

inline constexpr int kImageDirFormatVersion = 1;

/// Light field directory: lightfield.json plus view_{a}_{b}.png and, when
/// with_pfm, a lossless view_{a}_{b}.pfm sidecar. The geometry, when given,
/// is stored alongside.
void write_lightfield(const std::filesystem::path& dir, const LightField& lf, bool with_pfm,
                      const std::optional<DisplayGeometry>& geometry = std::nullopt);

struct LoadedLightField {
    LightField lf;
    std::optional<DisplayGeometry> geometry;
};

/// Reads PFM sidecars when present, PNG otherwise.
LoadedLightField read_lightfield(const std::filesystem::path& dir);

/// Layer directory: layers.json plus layer_{l}.png (clamped, display-ready)
/// and layer_{l}.pfm (unclamped).
void write_layers(const std::filesystem::path& dir, const LayerStack& stack);
LayerStack read_layers(const std::filesystem::path& dir);

}  // namespace lff
