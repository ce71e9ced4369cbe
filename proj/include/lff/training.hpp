#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lff/data.hpp"
#include "lff/metrics.hpp"
#include "lff/networks.hpp"
#include "lff/solvers.hpp"

namespace lff {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 15;
    double lr = 1e-4;
    double lambda_reg = 0.01;  ///< range-penalty weight
    std::uint64_t seed = 0;
    NetworkSpec arch;          ///< in/out channels are taken from the dataset
    int eval_every = 1;
    bool crop = true;          ///< crop the shift border in test PSNR

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;   ///< epoch mean of MSE + lambda * penalty
    double train_psnr_db = 0.0;
    std::optional<double> test_psnr_db;
};

struct TimingRecord {
    std::string method;
    int iters = 0;
    double psnr_db = 0.0;
    double ms = 0.0;
};

struct EvalReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_test_psnr_db = 0.0;
    std::vector<double> layer_means;  ///< of the best network's clamped test output
    double uniformity_cv = 0.0;
    std::vector<TimingRecord> timings;
};

struct TrainResult {
    Network best;
    CheckpointMeta meta;
    EvalReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch training of a fresh network built from config (seeded by config.seed).
TrainResult train(const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Same loop starting from the given network, whose channel counts must match the dataset.
TrainResult train(const Dataset& dataset, const TrainConfig& config, Network initial,
                  const EpochCallback& on_epoch = {});

struct NetworkEvaluation {
    LayerStack layers;  ///< clamped network output
    LightField recon;
    double psnr_db = 0.0;
};

/// Clamped inference, display simulation and cropped PSNR against the target.
NetworkEvaluation evaluate_network(const Network& network, const LightField& target, const DisplayGeometry& geometry,
                                   bool crop = true);

/// Network inference and iterative solves at each iteration count on the same
/// input; each timing is the median of `runs` runs after one warmup.
std::vector<TimingRecord> bench_compare(const LightField& lf, const DisplayGeometry& geometry, const Network& network,
                                        const std::vector<int>& iters = {20, 50, 100}, int runs = 5,
                                        bool crop = true);

/// `epoch,train_loss,train_psnr,test_psnr`
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
/// `method,iters,psnr_db,ms`
void write_bench_csv(const std::vector<TimingRecord>& rows, const std::filesystem::path& path);

}  // namespace lff
