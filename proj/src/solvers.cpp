#include "lff/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lff/metrics.hpp"

namespace lff {

void SolveConfig::validate() const {
    if (iterations < 1) throw ValidationError("solve: iterations must be at least 1");
    if (!(relaxation > 0.0 && relaxation <= 2.0)) throw ValidationError("solve: relaxation must lie in (0, 2]");
    if (!(epsilon_floor > 0.0 && epsilon_floor < 1.0)) throw ValidationError("solve: epsilon_floor must lie in (0, 1)");
    if (trace_every < 1) throw ValidationError("solve: trace_every must be at least 1");
}

namespace {

using Clock = std::chrono::steady_clock;

void check_target(const LightField& target, const DisplayGeometry& geometry) {
    geometry.validate();
    if (target.views_u() != geometry.views_u || target.views_v() != geometry.views_v) {
        throw ValidationError("solve: target has a " + std::to_string(target.views_u()) + "x" +
                              std::to_string(target.views_v()) + " view grid, geometry expects " +
                              std::to_string(geometry.views_u) + "x" + std::to_string(geometry.views_v));
    }
}

double full_mse(const Tensor4<double>& a, const Tensor4<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

class TraceRecorder {
public:
    TraceRecorder(const LightField& target, const DisplayGeometry& geometry, const SolveConfig& config)
        : target_(target),
          geometry_(geometry),
          border_(config.crop ? crop_border(geometry) : 0),
          start_(Clock::now()) {
        const int limit = (std::min(target.height(), target.width()) - 1) / 2;
        border_ = std::min(border_, std::max(limit, 0));
    }

    void add(SolveTrace& trace, int iteration, const Tensor4<double>& recon, const Tensor4<double>& target) const {
        TraceRecord r;
        r.iteration = iteration;
        r.loss = full_mse(recon, target);
        const LightField lf = LightField::from_tensor(recon, 0, geometry_.views_u, geometry_.views_v);
        r.psnr_db = evaluate_psnr(lf, target_, border_);
        r.ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
        trace.records.push_back(r);
    }

private:
    const LightField& target_;
    const DisplayGeometry& geometry_;
    int border_;
    Clock::time_point start_;
};

bool should_record(int k, const SolveConfig& config) {
    return k == 0 || k % config.trace_every == 0 || k == config.iterations;
}

// Box-constrained projected gradient for the linear additive operator A:
// x <- clamp(x + step * A^T (b - A x)). With step = omega / (L * U * V) and
// omega <= 2 the step is within 2 / ||A||^2, since every ray sums at most L
// bilinear taps and every pixel is reached by at most U * V views.
// `mask`, when non-empty, zeroes residual rays that take no part in the fit.
template <typename OnIterate>
Tensor4<double> projected_gradient(const Tensor4<double>& b, const ShiftTable& shifts, Tensor4<double> x, double hi,
                                   double step, int iterations, const Tensor4<double>& mask, OnIterate&& on_iterate) {
    Tensor4<double> ax = reconstruct(x, shifts, Modulation::additive);
    on_iterate(0, x, ax);
    Tensor4<double> residual(b.shape());
    Tensor4<double> grad(x.shape());
    for (int k = 1; k <= iterations; ++k) {
        for (std::size_t i = 0; i < b.size(); ++i) residual[i] = b[i] - ax[i];
        if (!mask.empty()) {
            for (std::size_t i = 0; i < b.size(); ++i) residual[i] *= mask[i];
        }
        check_finite<double>(residual.data(), "solver residual");
        grad.fill(0.0);
        reconstruct_backward(x, shifts, Modulation::additive, residual, grad);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i] + step * grad[i], 0.0, hi);
        ax = reconstruct(x, shifts, Modulation::additive);
        on_iterate(k, x, ax);
    }
    return x;
}

}  // namespace

SolveResult solve_additive(const LightField& target, const DisplayGeometry& geometry, const SolveConfig& config) {
    config.validate();
    check_target(target, geometry);
    if (geometry.mode != Modulation::additive) throw ValidationError("solve_additive: geometry mode is not additive");

    const ShiftTable shifts = view_shifts(geometry);
    const Tensor4<double> b = target.to_tensor<double>();
    const std::size_t L = geometry.layer_count();
    const Shape4 layer_shape{1, L, static_cast<std::size_t>(target.height()), static_cast<std::size_t>(target.width())};
    const double init = config.init.value_or(0.5);
    const double step = config.relaxation / (static_cast<double>(L) * static_cast<double>(geometry.view_count()));

    SolveResult result;
    TraceRecorder recorder(target, geometry, config);
    Tensor4<double> x = projected_gradient(
        b, shifts, Tensor4<double>(layer_shape, std::clamp(init, 0.0, 1.0)), 1.0, step, config.iterations,
        Tensor4<double>(), [&](int k, const Tensor4<double>&, const Tensor4<double>& ax) {
            if (should_record(k, config)) recorder.add(result.trace, k, ax, b);
        });
    result.stack = LayerStack::from_tensor(x, 0, Modulation::additive);
    return result;
}

SolveResult solve_multiplicative(const LightField& target, const DisplayGeometry& geometry,
                                 const SolveConfig& config) {
    config.validate();
    check_target(target, geometry);
    if (geometry.mode != Modulation::multiplicative) {
        throw ValidationError("solve_multiplicative: geometry mode is not multiplicative");
    }

    const ShiftTable shifts = view_shifts(geometry);
    const Tensor4<double> intensity = target.to_tensor<double>();
    const double eps = config.epsilon_floor;
    const double max_density = -std::log(eps);

    Tensor4<double> density(intensity.shape());
    for (std::size_t i = 0; i < density.size(); ++i) density[i] = -std::log(std::max(intensity[i], eps));

    const std::size_t L = geometry.layer_count();
    const Shape4 layer_shape{1, L, static_cast<std::size_t>(target.height()), static_cast<std::size_t>(target.width())};

    // Rays that leave some layer's extent are dark in the intensity model but
    // transparent in the density model; they are left out of the fit.
    Tensor4<double> mask = reconstruct(Tensor4<double>(layer_shape, 1.0), shifts, Modulation::additive);
    for (double& m : mask.data()) m = m > static_cast<double>(L) - 1e-9 ? 1.0 : 0.0;

    const double init = std::clamp(config.init.value_or(1.0), eps, 1.0);
    const double step = config.relaxation / (static_cast<double>(L) * static_cast<double>(geometry.view_count()));

    auto to_transmittance = [](const Tensor4<double>& d) {
        Tensor4<double> t(d.shape());
        for (std::size_t i = 0; i < d.size(); ++i) t[i] = std::exp(-d[i]);
        return t;
    };

    SolveResult result;
    TraceRecorder recorder(target, geometry, config);
    Tensor4<double> x = projected_gradient(
        density, shifts, Tensor4<double>(layer_shape, -std::log(init)), max_density, step, config.iterations, mask,
        [&](int k, const Tensor4<double>& d, const Tensor4<double>&) {
            if (!should_record(k, config)) return;
            const Tensor4<double> recon = reconstruct(to_transmittance(d), shifts, Modulation::multiplicative);
            recorder.add(result.trace, k, recon, intensity);
        });
    result.stack = LayerStack::from_tensor(to_transmittance(x), 0, Modulation::multiplicative);
    return result;
}

SolveResult solve(const LightField& target, const DisplayGeometry& geometry, const SolveConfig& config) {
    return geometry.mode == Modulation::additive ? solve_additive(target, geometry, config)
                                                 : solve_multiplicative(target, geometry, config);
}

void export_trace(const SolveTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open trace file for writing: " + path.string());
    out << "iter,loss,psnr_db,ms\n";
    char line[160];
    for (const TraceRecord& r : trace.records) {
        std::snprintf(line, sizeof line, "%d,%.6g,%.6g,%.6g\n", r.iteration, r.loss, r.psnr_db, r.ms);
        out << line;
    }
    if (!out) throw IoError("failed writing trace file: " + path.string());
}

SolveTrace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trace file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "iter,loss,psnr_db,ms") {
        throw FormatError("trace file has an unexpected header: " + path.string());
    }
    SolveTrace trace;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        TraceRecord r;
        char comma[3];
        std::istringstream fields(line);
        if (!(fields >> r.iteration >> comma[0] >> r.loss >> comma[1] >> r.psnr_db >> comma[2] >> r.ms)) {
            throw FormatError("malformed trace row: " + line);
        }
        trace.records.push_back(r);
    }
    return trace;
}

}  // namespace lff
