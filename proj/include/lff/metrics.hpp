#pragma once

#include <vector>

#include "lff/display.hpp"

namespace lff {

/// Reported in place of +inf when the error is exactly zero (and the ceiling for all values).
inline constexpr double kPsnrCapDb = 99.0;

/// 10 log10(1 / mse) at peak 1.0, capped at kPsnrCapDb.
double psnr_from_mse(double mse);

/// Mean squared error pooled over all views, ignoring a border of crop_border
/// pixels on every side.
double cropped_mse(const LightField& recon, const LightField& target, int crop_border);

/// PSNR over all views inside the crop window.
double evaluate_psnr(const LightField& recon, const LightField& target, int crop_border);

struct Uniformity {
    std::vector<double> layer_means;
    double cv = 0.0;  ///< population stddev of layer_means / mean of layer_means
};

/// Throws ValidationError when the mean of the layer means is not positive.
Uniformity layer_uniformity(const LayerStack& stack);

}  // namespace lff
