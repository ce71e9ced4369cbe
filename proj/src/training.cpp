#include "lff/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "lff/optim.hpp"

namespace lff {

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("train: epochs must be at least 1");
    if (batch_size < 1) throw ValidationError("train: batch_size must be at least 1");
    if (!(lr > 0.0)) throw ValidationError("train: lr must be positive");
    if (!(lambda_reg >= 0.0)) throw ValidationError("train: lambda_reg must be non-negative");
    if (eval_every < 1) throw ValidationError("train: eval_every must be at least 1");
}

namespace {

using Clock = std::chrono::steady_clock;

int border_for(const DisplayGeometry& geometry, const LightField& lf, bool crop) {
    if (!crop) return 0;
    const int limit = (std::min(lf.height(), lf.width()) - 1) / 2;
    return std::min(crop_border(geometry), std::max(limit, 0));
}

void check_compatible(const Dataset& dataset, const NetworkSpec& spec) {
    const DisplayGeometry& g = dataset.manifest.geometry;
    if (static_cast<std::size_t>(spec.in_channels) != g.view_count()) {
        throw ValidationError("train: network expects " + std::to_string(spec.in_channels) + " input channels, dataset has " +
                              std::to_string(g.view_count()) + " views");
    }
    if (static_cast<std::size_t>(spec.out_channels) != g.layer_count()) {
        throw ValidationError("train: network emits " + std::to_string(spec.out_channels) + " layers, geometry has " +
                              std::to_string(g.layer_count()));
    }
    if (dataset.train.empty()) throw ValidationError("train: dataset has no training samples");
    const std::size_t m = spec.spatial_multiple();
    for (const LightField& lf : dataset.train) {
        if (lf.view_count() != g.view_count()) throw ValidationError("train: sample view count differs from geometry");
        if (lf.height() % m != 0 || lf.width() % m != 0) {
            throw ValidationError("train: sample size " + std::to_string(lf.height()) + "x" + std::to_string(lf.width()) +
                                  " is not divisible by " + std::to_string(m));
        }
    }
}

// Stacks the selected samples into one (n, U*V, H, W) batch. Samples within a
// batch must share their size.
Tensor4<float> make_batch(const std::vector<LightField>& samples, std::span<const std::size_t> indices) {
    const LightField& first = samples[indices[0]];
    const Shape4 s{indices.size(), first.view_count(), static_cast<std::size_t>(first.height()),
                   static_cast<std::size_t>(first.width())};
    Tensor4<float> batch(s);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const LightField& lf = samples[indices[i]];
        if (lf.height() != first.height() || lf.width() != first.width()) {
            throw ValidationError("train: samples in a batch must share their spatial size");
        }
        auto src = lf.data();
        auto dst = batch.sample(i);
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<float>(src[k]);
    }
    return batch;
}

}  // namespace

NetworkEvaluation evaluate_network(const Network& network, const LightField& target, const DisplayGeometry& geometry,
                                   bool crop) {
    NetworkEvaluation ev;
    ev.layers = forward_infer(network, target, true, geometry.mode);
    ev.recon = reconstruct(ev.layers, geometry);
    ev.psnr_db = evaluate_psnr(ev.recon, target, border_for(geometry, target, crop));
    return ev;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
    NetworkSpec spec = config.arch;
    spec.in_channels = static_cast<int>(dataset.manifest.geometry.view_count());
    spec.out_channels = static_cast<int>(dataset.manifest.geometry.layer_count());
    spec.seed = config.seed;
    return train(dataset, config, build_network(spec), on_epoch);
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, Network initial, const EpochCallback& on_epoch) {
    config.validate();
    const DisplayGeometry& geometry = dataset.manifest.geometry;
    geometry.validate();
    check_compatible(dataset, initial.spec());

    const ShiftTable shifts = view_shifts(geometry);
    Network net = std::move(initial);
    auto& params = net.parameters();
    for (auto& p : params) p.zero_grad();
    AdamState<float> adam(params, AdamOptions{config.lr, 0.9, 0.999, 1e-8});
    Rng shuffle_rng(derive_seed(config.seed, 1));

    std::vector<std::size_t> order(dataset.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result{net, CheckpointMeta{0, -1e300, config.seed}, EvalReport{}};
    bool have_best = false;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        double mse_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            Graph<float> g;
            try {
                const NodeId target = g.constant(make_batch(dataset.train, idx));
                GraphOps ops(g, params);
                const NodeId layers = net.forward(ops, target);
                const NodeId recon = reconstruct(g, layers, shifts, geometry.mode);
                const NodeId data_loss = mse_loss(g, recon, target);
                const NodeId loss = add_scaled(g, data_loss, range_penalty(g, layers), static_cast<float>(config.lambda_reg));
                g.backward(loss);
                adam_step(params, adam);
                const double n = static_cast<double>(idx.size());
                loss_sum += g.value(loss)[0] * n;
                mse_sum += g.value(data_loss)[0] * n;
                seen += idx.size();
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch starting at " +
                                   std::to_string(start) + ": " + e.what());
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.train_psnr_db = psnr_from_mse(mse_sum / static_cast<double>(seen));
        if (epoch % config.eval_every == 0 || epoch == config.epochs) {
            rec.test_psnr_db = evaluate_network(net, dataset.test, geometry, config.crop).psnr_db;
            if (!have_best || *rec.test_psnr_db > result.meta.test_psnr_db) {
                have_best = true;
                result.best = net;
                result.meta.epoch = epoch;
                result.meta.test_psnr_db = *rec.test_psnr_db;
            }
        }
        result.report.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }

    result.report.best_epoch = result.meta.epoch;
    result.report.best_test_psnr_db = result.meta.test_psnr_db;
    const NetworkEvaluation best = evaluate_network(result.best, dataset.test, geometry, config.crop);
    const double total = std::accumulate(best.layers.data().begin(), best.layers.data().end(), 0.0);
    if (total > 0.0) {
        const Uniformity u = layer_uniformity(best.layers);
        result.report.layer_means = u.layer_means;
        result.report.uniformity_cv = u.cv;
    } else {
        result.report.layer_means.assign(best.layers.layers(), 0.0);
        result.report.uniformity_cv = std::nan("");
    }
    return result;
}

namespace {

template <typename F>
double median_ms(int runs, F&& f) {
    f();  // warmup
    std::vector<double> times;
    for (int r = 0; r < runs; ++r) {
        const auto t0 = Clock::now();
        f();
        times.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    return n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

}  // namespace

std::vector<TimingRecord> bench_compare(const LightField& lf, const DisplayGeometry& geometry, const Network& network,
                                        const std::vector<int>& iters, int runs, bool crop) {
    if (runs < 1) throw ValidationError("bench: runs must be at least 1");
    const int border = border_for(geometry, lf, crop);
    std::vector<TimingRecord> rows;

    TimingRecord net_row;
    net_row.method = to_string(network.spec().arch);
    net_row.iters = 0;
    net_row.ms = median_ms(runs, [&] { (void)forward_infer(network, lf, true, geometry.mode); });
    net_row.psnr_db = evaluate_psnr(reconstruct(forward_infer(network, lf, true, geometry.mode), geometry), lf, border);
    rows.push_back(net_row);

    for (int n : iters) {
        SolveConfig cfg;
        cfg.iterations = n;
        cfg.trace_every = n;
        cfg.crop = crop;
        TimingRecord row;
        row.method = "iterative";
        row.iters = n;
        row.ms = median_ms(runs, [&] { (void)solve(lf, geometry, cfg); });
        row.psnr_db = evaluate_psnr(reconstruct(solve(lf, geometry, cfg).stack, geometry), lf, border);
        rows.push_back(row);
    }
    return rows;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open report for writing: " + path.string());
    out << "epoch,train_loss,train_psnr,test_psnr\n";
    char line[160];
    for (const EpochRecord& r : report.epochs) {
        if (r.test_psnr_db) {
            std::snprintf(line, sizeof line, "%d,%.6g,%.6g,%.6g\n", r.epoch, r.train_loss, r.train_psnr_db, *r.test_psnr_db);
        } else {
            std::snprintf(line, sizeof line, "%d,%.6g,%.6g,\n", r.epoch, r.train_loss, r.train_psnr_db);
        }
        out << line;
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void write_bench_csv(const std::vector<TimingRecord>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open report for writing: " + path.string());
    out << "method,iters,psnr_db,ms\n";
    char line[160];
    for (const TimingRecord& r : rows) {
        std::snprintf(line, sizeof line, "%s,%d,%.6g,%.6g\n", r.method.c_str(), r.iters, r.psnr_db, r.ms);
        out << line;
    }
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace lff
