#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "lff/display.hpp"

namespace lff {

struct SolveConfig {
    int iterations = 100;
    double relaxation = 1.0;     ///< omega, in (0, 2]
    std::optional<double> init;  ///< initial layer value; 0.5 additive, 1.0 multiplicative when unset
    double epsilon_floor = 1e-3; ///< smallest transmittance in the log-domain solve
    int trace_every = 1;
    bool crop = true;            ///< crop the shift border when computing trace PSNR

    void validate() const;
};

struct TraceRecord {
    int iteration = 0;
    double loss = 0.0;     ///< mean squared error over all rays, intensity domain
    double psnr_db = 0.0;  ///< cropped PSNR
    double ms = 0.0;       ///< wall time since the solve started
};

struct SolveTrace {
    std::vector<TraceRecord> records;
};

struct SolveResult {
    LayerStack stack;
    SolveTrace trace;
};

/// Projected gradient on the additive display operator. Each iteration takes
/// the step omega / (L * U * V) on the backprojected residual and clamps every
/// layer to [0, 1].
SolveResult solve_additive(const LightField& target, const DisplayGeometry& geometry, const SolveConfig& config);

/// Multiplicative display, solved as an additive problem on optical densities
/// -ln(transmittance) with the target floored at epsilon_floor.
SolveResult solve_multiplicative(const LightField& target, const DisplayGeometry& geometry,
                                 const SolveConfig& config);

/// Dispatches on geometry.mode.
SolveResult solve(const LightField& target, const DisplayGeometry& geometry, const SolveConfig& config);

/// CSV with header `iter,loss,psnr_db,ms` and 6 significant digits.
void export_trace(const SolveTrace& trace, const std::filesystem::path& path);
SolveTrace read_trace(const std::filesystem::path& path);

}  // namespace lff
