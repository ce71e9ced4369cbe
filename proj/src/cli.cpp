#include "lff/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lff/data.hpp"
#include "lff/error.hpp"
#include "lff/image_io.hpp"
#include "lff/metrics.hpp"
#include "lff/networks.hpp"
#include "lff/parallel.hpp"
#include "lff/serialize.hpp"
#include "lff/solvers.hpp"
#include "lff/training.hpp"

namespace lff::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Deep merge of `patch` into `base`; every key of `patch` must already exist
// in `base`. Objects merge recursively, anything else is replaced.
void merge_checked(json& base, const json& patch, const std::string& where) {
    if (!patch.is_object()) throw ValidationError(where + ": expected a JSON object");
    for (const auto& [key, value] : patch.items()) {
        const std::string path = where + "/" + key;
        if (!base.contains(key)) throw ValidationError("unknown config key '" + path + "'");
        json& slot = base[key];
        if (slot.is_object()) {
            merge_checked(slot, value, path);
        } else {
            slot = value;
        }
    }
}

struct Flag {
    CLI::Option* option;
    std::function<void(json&)> apply;
};

class Command {
public:
    Command(CLI::App& app, const std::string& name, const std::string& description)
        : app_(app.add_subcommand(name, description)), name_(name), defaults_(default_config(name)) {
        app_->option_defaults()->always_capture_default();
        add_path("--config", "", "JSON config file; flags override it");
        bind<unsigned>("--threads", "/threads", "worker threads, 0 = machine parallelism");
    }

    CLI::App* app() const { return app_; }
    const std::string& name() const { return name_; }
    const json& defaults() const { return defaults_; }
    json& defaults() { return defaults_; }

    template <typename V>
    CLI::Option* bind(const std::string& flag, const std::string& pointer, const std::string& description) {
        auto store = std::make_shared<V>();
        const json::json_pointer ptr(pointer);
        if (defaults_.contains(ptr) && !defaults_.at(ptr).is_null()) *store = defaults_.at(ptr).get<V>();
        CLI::Option* opt = app_->add_option(flag, *store, description);
        if constexpr (std::is_same_v<V, std::vector<double>> || std::is_same_v<V, std::vector<int>>) {
            opt->delimiter(',');
        }
        if constexpr (std::is_same_v<V, std::string>) {
            if (store->empty()) opt->default_str("required");
        }
        flags_.push_back({opt, [store, ptr](json& j) { j[ptr] = *store; }});
        return opt;
    }

    CLI::Option* bind_switch(const std::string& flags, const std::string& pointer, const std::string& description) {
        auto store = std::make_shared<bool>(defaults_.at(json::json_pointer(pointer)).get<bool>());
        CLI::Option* opt = app_->add_flag(flags, *store, description)->default_str(*store ? "true" : "false");
        const json::json_pointer ptr(pointer);
        flags_.push_back({opt, [store, ptr](json& j) { j[ptr] = *store; }});
        return opt;
    }

    /// A JSON file merged into the object at `pointer`, applied in flag order.
    void bind_json_file(const std::string& flag, const std::string& pointer, const std::string& description) {
        auto store = std::make_shared<std::string>();
        CLI::Option* opt = app_->add_option(flag, *store, description)->default_str("built-in");
        const json::json_pointer ptr(pointer);
        flags_.push_back({opt, [store, ptr, flag](json& j) {
                              merge_checked(j[ptr], read_json(*store), flag + " " + *store);
                          }});
    }

    /// Resolves defaults < config file < flags.
    json resolve(const json& defaults) const {
        json cfg = defaults;
        if (!config_path_->empty()) {
            json file = read_json(*config_path_);
            if (file.contains("command") && file.at("command") != name_) {
                throw ValidationError("config file is for '" + file.at("command").dump() + "', not '" + name_ + "'");
            }
            merge_checked(cfg, file, "config");
        }
        for (const Flag& f : flags_) {
            if (f.option->count() > 0) f.apply(cfg);
        }
        cfg["command"] = name_;
        return cfg;
    }

private:
    void add_path(const std::string& flag, const std::string& dflt, const std::string& description) {
        config_path_ = std::make_shared<std::string>(dflt);
        app_->add_option(flag, *config_path_, description)->default_str(dflt.empty() ? "none" : dflt);
    }

    CLI::App* app_;
    std::string name_;
    json defaults_;
    std::vector<Flag> flags_;
    std::shared_ptr<std::string> config_path_;
};

std::string required_path(const json& cfg, const char* key) {
    const std::string value = cfg.at(key).get<std::string>();
    if (value.empty()) throw ValidationError(std::string("missing required --") + key);
    return value;
}

fs::path prepare_out(const json& cfg) {
    const fs::path out = required_path(cfg, "out");
    fs::create_directories(out);
    return out;
}

// For --report commands the report's directory is the output directory.
fs::path prepare_report(const json& cfg) {
    const fs::path report = required_path(cfg, "report");
    if (report.has_parent_path()) fs::create_directories(report.parent_path());
    return report;
}

fs::path report_dir(const fs::path& report) { return report.has_parent_path() ? report.parent_path() : fs::path("."); }

void write_run_config(const fs::path& dir, const json& cfg) { write_json(dir / "run_config.json", cfg); }

DisplayGeometry resolved_geometry(const json& cfg) {
    DisplayGeometry g = cfg.at("geometry").get<DisplayGeometry>();
    g.validate();
    return g;
}

void require_views(const LightField& lf, const DisplayGeometry& g) {
    if (lf.views_u() != g.views_u || lf.views_v() != g.views_v) {
        throw ValidationError("light field has " + std::to_string(lf.views_u()) + "x" + std::to_string(lf.views_v()) +
                              " views, geometry expects " + std::to_string(g.views_u) + "x" +
                              std::to_string(g.views_v));
    }
}

// Stored geometry of a light field directory, when it has one.
std::optional<json> stored_geometry(const std::string& dir) {
    if (dir.empty()) return std::nullopt;
    const fs::path meta = fs::path(dir) / "lightfield.json";
    if (!fs::exists(meta)) return std::nullopt;
    const json doc = read_json(meta);
    if (!doc.contains("geometry")) return std::nullopt;
    return doc.at("geometry");
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

int cmd_gen(const json& cfg, std::ostream& out) {
    const DisplayGeometry geometry = resolved_geometry(cfg);
    const DatasetParams params = cfg.at("dataset").get<DatasetParams>();
    params.validate();
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const fs::path dir = prepare_out(cfg);
    const Dataset ds = make_dataset(seed, geometry, params);
    write_dataset(dir, ds, cfg.at("pfm").get<bool>());
    write_run_config(dir, cfg);
    out << "wrote " << ds.train.size() << " training patches and the test light field to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_solve(const json& cfg, std::ostream& out) {
    const DisplayGeometry geometry = resolved_geometry(cfg);
    const SolveConfig sc = cfg.at("solve").get<SolveConfig>();
    sc.validate();
    const LoadedLightField target = read_lightfield(required_path(cfg, "lf"));
    require_views(target.lf, geometry);
    const fs::path dir = prepare_out(cfg);
    const SolveResult result = solve(target.lf, geometry, sc);
    write_layers(dir, result.stack);
    export_trace(result.trace, dir / "trace.csv");
    write_run_config(dir, cfg);
    const TraceRecord& last = result.trace.records.back();
    out << to_string(geometry.mode) << " solve: " << last.iteration << " iterations, psnr " << fmt(last.psnr_db)
        << " dB, " << fmt(last.ms) << " ms\n";
    return kExitOk;
}

int cmd_train(const json& cfg, std::ostream& out) {
    const TrainConfig tc = cfg.at("train").get<TrainConfig>();
    tc.validate();
    const Dataset ds = read_dataset(required_path(cfg, "data"));
    const fs::path dir = prepare_out(cfg);
    const TrainResult result = train(ds, tc, [&](const EpochRecord& e) {
        out << "epoch " << e.epoch << " loss " << fmt(e.train_loss) << " train_psnr " << fmt(e.train_psnr_db);
        if (e.test_psnr_db) out << " test_psnr " << fmt(*e.test_psnr_db);
        out << "\n" << std::flush;
    });
    save_checkpoint(dir / "best", result.best, result.meta);
    write_report_csv(result.report, dir / "report.csv");
    json summary = {{"best_epoch", result.report.best_epoch},
                    {"best_test_psnr_db", result.report.best_test_psnr_db},
                    {"layer_means", result.report.layer_means},
                    {"uniformity_cv", std::isnan(result.report.uniformity_cv)
                                          ? json(nullptr)
                                          : json(result.report.uniformity_cv)}};
    write_json(dir / "summary.json", summary);
    write_run_config(dir, cfg);
    out << "best epoch " << result.report.best_epoch << " test psnr " << fmt(result.report.best_test_psnr_db)
        << " dB\n";
    return kExitOk;
}

int cmd_infer(const json& cfg, std::ostream& out) {
    const DisplayGeometry geometry = resolved_geometry(cfg);
    const Checkpoint ckpt = load_checkpoint(required_path(cfg, "ckpt"));
    const LoadedLightField target = read_lightfield(required_path(cfg, "lf"));
    require_views(target.lf, geometry);
    const fs::path dir = prepare_out(cfg);
    const LayerStack stack = forward_infer(ckpt.network, target.lf, cfg.at("clamp").get<bool>(), geometry.mode);
    write_layers(dir, stack);
    write_run_config(dir, cfg);
    const double psnr = evaluate_psnr(reconstruct(stack, geometry), target.lf, crop_border(geometry));
    out << "inferred " << stack.layers() << " layers, psnr " << fmt(psnr) << " dB\n";
    return kExitOk;
}

int cmd_eval(const json& cfg, std::ostream& out) {
    const DisplayGeometry geometry = resolved_geometry(cfg);
    const LoadedLightField target = read_lightfield(required_path(cfg, "lf"));
    const LayerStack stack = read_layers(required_path(cfg, "layers"));
    require_views(target.lf, geometry);
    if (stack.mode() != geometry.mode) {
        throw ValidationError("layers were synthesized for " + to_string(stack.mode()) + " modulation, geometry is " +
                              to_string(geometry.mode));
    }
    const json& border_cfg = cfg.at("crop_border");
    const int border = border_cfg.is_null() ? crop_border(geometry) : border_cfg.get<int>();
    if (border < 0) throw ValidationError("--crop-border must be non-negative");
    const fs::path report = prepare_report(cfg);

    const LightField recon = reconstruct(stack, geometry);
    const double mse = cropped_mse(recon, target.lf, border);
    std::ofstream csv(report, std::ios::binary);
    if (!csv) throw IoError("cannot open for writing: " + report.string());
    csv << "metric,value\n";
    csv << "psnr_db," << fmt(psnr_from_mse(mse)) << "\n";
    csv << "mse," << fmt(mse) << "\n";
    csv << "crop_border," << border << "\n";
    const double total = std::accumulate(stack.data().begin(), stack.data().end(), 0.0);
    if (total > 0.0) {
        const Uniformity u = layer_uniformity(stack);
        csv << "uniformity_cv," << fmt(u.cv) << "\n";
        for (std::size_t l = 0; l < u.layer_means.size(); ++l) {
            csv << "layer_mean_" << l << "," << fmt(u.layer_means[l]) << "\n";
        }
    }
    if (!csv) throw IoError("failed writing " + report.string());
    write_run_config(report_dir(report), cfg);
    out << "psnr " << fmt(psnr_from_mse(mse)) << " dB (crop border " << border << ")\n";
    return kExitOk;
}

int cmd_bench(const json& cfg, std::ostream& out) {
    const DisplayGeometry geometry = resolved_geometry(cfg);
    const std::vector<int> iters = cfg.at("iters").get<std::vector<int>>();
    const int runs = cfg.at("runs").get<int>();
    if (iters.empty()) throw ValidationError("--iters needs at least one iteration count");
    for (int n : iters) {
        if (n < 1) throw ValidationError("--iters values must be >= 1");
    }
    if (runs < 1) throw ValidationError("--runs must be >= 1");
    const Checkpoint ckpt = load_checkpoint(required_path(cfg, "ckpt"));
    const LoadedLightField target = read_lightfield(required_path(cfg, "lf"));
    require_views(target.lf, geometry);
    const fs::path report = prepare_report(cfg);
    const auto rows = bench_compare(target.lf, geometry, ckpt.network, iters, runs, cfg.at("crop").get<bool>());
    write_bench_csv(rows, report);
    write_run_config(report_dir(report), cfg);
    for (const TimingRecord& r : rows) {
        out << r.method << " iters " << r.iters << " psnr " << fmt(r.psnr_db) << " dB " << fmt(r.ms) << " ms\n";
    }
    return kExitOk;
}

void setup_flags(Command& c) {
    const std::string& n = c.name();
    if (n == "gen") {
        c.bind<std::uint64_t>("--seed", "/seed", "master seed");
        c.bind<int>("--scenes", "/dataset/scenes", "training scenes (one more is held out)");
        c.bind<int>("--planes", "/dataset/scene/planes", "depth planes per scene");
        c.bind<int>("--height", "/dataset/scene/height", "scene height in pixels");
        c.bind<int>("--width", "/dataset/scene/width", "scene width in pixels");
        c.bind<double>("--depth-min", "/dataset/scene/depth_min", "nearest allowed plane depth (mm)");
        c.bind<double>("--depth-max", "/dataset/scene/depth_max", "farthest allowed plane depth (mm)");
        c.bind_json_file("--geometry", "/geometry", "display geometry JSON file");
        c.bind<int>("--crop", "/dataset/augment/crop", "patch size in pixels");
        c.bind<std::vector<double>>("--scales", "/dataset/augment/scales", "comma-separated intensity scales");
        c.bind<int>("--crops-per-scale", "/dataset/augment/crops_per_scale", "random crops per scale");
        c.bind_switch("--downscale,!--no-downscale", "/dataset/downscale", "2x2 average scenes before cropping");
        c.bind_switch("--pfm,!--no-pfm", "/pfm", "write lossless PFM sidecars");
        c.bind<std::string>("--out", "/out", "output dataset directory");
    } else if (n == "solve") {
        c.bind_json_file("--geometry", "/geometry", "display geometry JSON file");
        c.bind<std::string>("--mode", "/geometry/mode", "additive | multiplicative")
            ->check(CLI::IsMember({"additive", "multiplicative"}));
        c.bind<int>("--iters", "/solve/iterations", "iterations");
        c.bind<double>("--omega", "/solve/relaxation", "relaxation factor in (0, 2)");
        c.bind<double>("--init", "/solve/init", "uniform initial layer value (default: mode-specific)")
            ->default_str("auto");
        c.bind<double>("--epsilon", "/solve/epsilon_floor", "transmittance floor for multiplicative mode");
        c.bind<int>("--trace-every", "/solve/trace_every", "trace row interval");
        c.bind_switch("--crop,!--no-crop", "/solve/crop", "exclude the shift border from traced PSNR");
        c.bind<std::string>("--lf", "/lf", "target light field directory");
        c.bind<std::string>("--out", "/out", "output directory");
    } else if (n == "train") {
        c.bind<std::string>("--arch", "/train/arch/arch", "unet | stacked")->check(CLI::IsMember({"unet", "stacked"}));
        c.bind<std::string>("--data", "/data", "dataset directory");
        c.bind<int>("--epochs", "/train/epochs", "epochs");
        c.bind<int>("--batch", "/train/batch_size", "minibatch size");
        c.bind<double>("--lr", "/train/lr", "Adam learning rate");
        c.bind<double>("--lambda-reg", "/train/lambda_reg", "range penalty weight");
        c.bind<std::uint64_t>("--seed", "/train/seed", "initialization and shuffling seed");
        c.bind<int>("--base-channels", "/train/arch/base_channels", "feature width");
        c.bind<int>("--modules", "/train/arch/stacked_modules", "stacked CNN conv modules");
        c.bind<int>("--depth", "/train/arch/unet_depth", "U-Net pooling levels");
        c.bind<int>("--eval-every", "/train/eval_every", "epochs between test evaluations");
        c.bind_switch("--crop,!--no-crop", "/train/crop", "exclude the shift border from test PSNR");
        c.bind<std::string>("--out", "/out", "output directory");
    } else if (n == "infer") {
        c.bind<std::string>("--ckpt", "/ckpt", "checkpoint directory");
        c.bind<std::string>("--lf", "/lf", "input light field directory");
        c.bind_json_file("--geometry", "/geometry", "display geometry JSON file");
        c.bind<std::string>("--mode", "/geometry/mode", "additive | multiplicative")
            ->check(CLI::IsMember({"additive", "multiplicative"}));
        c.bind_switch("--clamp,!--no-clamp", "/clamp", "clip layers to [0, 1]");
        c.bind<std::string>("--out", "/out", "output directory");
    } else if (n == "eval") {
        c.bind<std::string>("--lf", "/lf", "target light field directory");
        c.bind<std::string>("--layers", "/layers", "layer directory");
        c.bind_json_file("--geometry", "/geometry", "display geometry JSON file");
        c.bind<int>("--crop-border", "/crop_border", "excluded border in pixels (default: from geometry)")
            ->default_str("auto");
        c.bind<std::string>("--report", "/report", "output CSV");
    } else if (n == "bench") {
        c.bind<std::string>("--ckpt", "/ckpt", "checkpoint directory");
        c.bind<std::string>("--lf", "/lf", "input light field directory");
        c.bind_json_file("--geometry", "/geometry", "display geometry JSON file");
        c.bind<std::vector<int>>("--iters", "/iters", "comma-separated solver iteration counts");
        c.bind<int>("--runs", "/runs", "timed runs per method (median reported)");
        c.bind_switch("--crop,!--no-crop", "/crop", "exclude the shift border from PSNR");
        c.bind<std::string>("--report", "/report", "output CSV");
    }
}

int dispatch(const Command& c, std::ostream& out) {
    json defaults = c.defaults();
    // Two passes: the first finds the input light field, whose stored
    // geometry replaces the built-in default geometry.
    if (defaults.contains("lf")) {
        const json first = c.resolve(defaults);
        if (auto g = stored_geometry(first.at("lf").get<std::string>())) {
            json merged = defaults.at("geometry");
            merge_checked(merged, *g, "lightfield.json geometry");
            defaults["geometry"] = merged;
        }
        if (c.name() == "eval") {
            const std::string layers = first.at("layers").get<std::string>();
            if (!layers.empty() && fs::exists(fs::path(layers) / "layers.json")) {
                const json meta = read_json(fs::path(layers) / "layers.json");
                if (meta.contains("mode")) defaults["geometry"]["mode"] = meta.at("mode");
            }
        }
    }
    json cfg = c.resolve(defaults);
    set_num_threads(cfg.at("threads").get<unsigned>());
    const std::string& n = c.name();
    if (n == "gen") return cmd_gen(cfg, out);
    if (n == "solve") return cmd_solve(cfg, out);
    if (n == "train") return cmd_train(cfg, out);
    if (n == "infer") return cmd_infer(cfg, out);
    if (n == "eval") return cmd_eval(cfg, out);
    return cmd_bench(cfg, out);
}

}  // namespace

json default_config(const std::string& command) {
    json cfg = {{"command", command}, {"threads", 0u}};
    if (command == "gen") {
        cfg["seed"] = std::uint64_t{0};
        cfg["geometry"] = DisplayGeometry{};
        cfg["dataset"] = DatasetParams{};
        cfg["pfm"] = true;
        cfg["out"] = "";
    } else if (command == "solve") {
        cfg["geometry"] = DisplayGeometry{};
        cfg["solve"] = SolveConfig{};
        cfg["lf"] = "";
        cfg["out"] = "";
    } else if (command == "train") {
        cfg["train"] = TrainConfig{};
        cfg["data"] = "";
        cfg["out"] = "";
    } else if (command == "infer") {
        cfg["geometry"] = DisplayGeometry{};
        cfg["ckpt"] = "";
        cfg["lf"] = "";
        cfg["clamp"] = true;
        cfg["out"] = "";
    } else if (command == "eval") {
        cfg["geometry"] = DisplayGeometry{};
        cfg["lf"] = "";
        cfg["layers"] = "";
        cfg["crop_border"] = nullptr;
        cfg["report"] = "";
    } else if (command == "bench") {
        cfg["geometry"] = DisplayGeometry{};
        cfg["ckpt"] = "";
        cfg["lf"] = "";
        cfg["iters"] = std::vector<int>{20, 50, 100};
        cfg["runs"] = 5;
        cfg["crop"] = true;
        cfg["report"] = "";
    } else {
        throw ValidationError("unknown subcommand '" + command + "'");
    }
    return cfg;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layer synthesis for compressive light field displays", "lf-factor"};
    app.require_subcommand(1, 1);
    std::vector<std::unique_ptr<Command>> commands;
    const std::vector<std::pair<std::string, std::string>> descriptions{
        {"gen", "generate a synthetic dataset"},
        {"solve", "synthesize layers with the iterative solver"},
        {"train", "train a layer-synthesis network"},
        {"infer", "synthesize layers with a trained network"},
        {"eval", "score layers against a target light field"},
        {"bench", "time network inference against iterative solves"}};
    for (const auto& [name, description] : descriptions) {
        commands.push_back(std::make_unique<Command>(app, name, description));
        setup_flags(*commands.back());
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
            app.exit(e, out, err);
            return kExitOk;
        }
        err << "error: " << e.what() << "\n";
        const CLI::App* target = &app;
        for (const auto& c : commands) {
            if (c->app()->parsed()) target = c->app();
        }
        err << target->help();
        return kExitValidation;
    }

    const Command* chosen = nullptr;
    for (const auto& c : commands) {
        if (c->app()->parsed()) chosen = c.get();
    }
    try {
        return dispatch(*chosen, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const json::exception& e) {
        err << "error: invalid configuration value: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace lff::cli
