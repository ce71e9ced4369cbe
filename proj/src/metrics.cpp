#include "lff/metrics.hpp"

#include <cmath>

namespace lff {

double psnr_from_mse(double mse) {
    if (!(mse >= 0.0)) throw NumericError("psnr: invalid mean squared error");
    if (mse == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, -10.0 * std::log10(mse));
}

double cropped_mse(const LightField& recon, const LightField& target, int crop_border) {
    if (recon.views_u() != target.views_u() || recon.views_v() != target.views_v() ||
        recon.height() != target.height() || recon.width() != target.width()) {
        throw ValidationError("psnr: light field shapes differ");
    }
    if (crop_border < 0) throw ValidationError("psnr: crop border must be non-negative");
    const int h = recon.height();
    const int w = recon.width();
    if (2 * crop_border >= h || 2 * crop_border >= w) {
        throw ValidationError("psnr: crop border " + std::to_string(crop_border) + " leaves no pixels of a " +
                              std::to_string(h) + "x" + std::to_string(w) + " view");
    }
    double acc = 0.0;
    for (std::size_t v = 0; v < recon.view_count(); ++v) {
        auto a = recon.view(v);
        auto b = target.view(v);
        for (int y = crop_border; y < h - crop_border; ++y) {
            for (int x = crop_border; x < w - crop_border; ++x) {
                const double d = a[static_cast<std::size_t>(y) * w + x] - b[static_cast<std::size_t>(y) * w + x];
                acc += d * d;
            }
        }
    }
    const double count =
        static_cast<double>(recon.view_count()) * (h - 2 * crop_border) * static_cast<double>(w - 2 * crop_border);
    return acc / count;
}

double evaluate_psnr(const LightField& recon, const LightField& target, int crop_border) {
    return psnr_from_mse(cropped_mse(recon, target, crop_border));
}

Uniformity layer_uniformity(const LayerStack& stack) {
    Uniformity u;
    double total = 0.0;
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        double acc = 0.0;
        for (double v : stack.layer(l)) acc += v;
        u.layer_means.push_back(acc / static_cast<double>(stack.pixels()));
        total += u.layer_means.back();
    }
    const double mean = total / static_cast<double>(stack.layers());
    if (!(mean > 0.0)) throw ValidationError("layer_uniformity: CV is undefined for a stack with zero mean");
    double var = 0.0;
    for (double m : u.layer_means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(stack.layers());
    u.cv = std::sqrt(var) / mean;
    return u;
}

}  // namespace lff
