#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "lff/cli.hpp"
#include "lff/image_io.hpp"
#include "lff/serialize.hpp"
#include "lff/training.hpp"

using namespace lff;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"lf-factor"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliResult r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = file_bytes(e.path());
    }
    return out;
}

// Trace CSV without the wall-time column.
std::string trace_without_timing(const fs::path& p) {
    std::ifstream in(p);
    std::string result;
    for (std::string line; std::getline(in, line);) result += line.substr(0, line.rfind(',')) + "\n";
    return result;
}

std::string fmt10(double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

std::map<std::string, std::string> read_metric_csv(const fs::path& p) {
    std::ifstream in(p);
    std::map<std::string, std::string> m;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) m[line.substr(0, line.find(','))] = line.substr(line.find(',') + 1);
    return m;
}

class CliTest : public ::testing::Test {
protected:
    static fs::path root() { return fs::temp_directory_path() / "lff_cli"; }
    static fs::path data() { return root() / "data"; }

    static void SetUpTestSuite() {
        fs::remove_all(root());
        const CliResult r = run_cli({"gen", "--seed", "7", "--scenes", "2", "--height", "32", "--width", "32", "--crop",
                                     "16", "--crops-per-scale", "1", "--out", data().string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    static void TearDownTestSuite() { fs::remove_all(root()); }

    static fs::path fresh(const std::string& name) {
        const fs::path p = root() / name;
        fs::remove_all(p);
        return p;
    }

    static std::vector<std::string> train_args(const fs::path& out) {
        return {"train", "--arch", "unet", "--epochs", "2", "--batch", "3", "--base-channels", "4", "--depth", "2",
                "--seed", "3", "--data", data().string(), "--out", out.string()};
    }
};

}  // namespace

TEST_F(CliTest, GenTwiceIsByteIdentical) {
    const fs::path a = fresh("gen_a");
    const fs::path b = fresh("gen_b");
    for (const fs::path& p : {a, b}) {
        const CliResult r = run_cli({"gen", "--seed", "7", "--scenes", "2", "--height", "32", "--width", "32", "--crop",
                                     "16", "--crops-per-scale", "1", "--out", p.string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    auto ta = tree_bytes(a);
    auto tb = tree_bytes(b);
    ASSERT_TRUE(ta.count("manifest.json"));
    json ca = json::parse(ta.at("run_config.json"));
    json cb = json::parse(tb.at("run_config.json"));
    ca.erase("out");
    cb.erase("out");
    EXPECT_EQ(ca, cb);
    ta.erase("run_config.json");
    tb.erase("run_config.json");
    EXPECT_EQ(ta, tb);
    // The handed-off dataset equals the in-process one for the same resolved config.
    EXPECT_EQ(tree_bytes(data()).at("manifest.json"), ta.at("manifest.json"));
}

TEST_F(CliTest, SolveWritesArtifactsAndMatchesApi) {
    const fs::path out = fresh("solve");
    const CliResult r = run_cli({"solve", "--mode", "additive", "--iters", "30", "--lf", (data() / "test_lf").string(),
                                 "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"layer_0.png", "layer_2.pfm", "layers.json", "trace.csv", "run_config.json"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }

    const LoadedLightField target = read_lightfield(data() / "test_lf");
    ASSERT_TRUE(target.geometry.has_value());
    SolveConfig sc;
    sc.iterations = 30;
    const SolveResult api = solve(target.lf, *target.geometry, sc);
    const LayerStack cli_layers = read_layers(out);
    ASSERT_EQ(cli_layers.data().size(), api.stack.data().size());
    for (std::size_t i = 0; i < api.stack.data().size(); ++i) {
        ASSERT_EQ(cli_layers.data()[i], static_cast<double>(static_cast<float>(api.stack.data()[i])));
    }
    export_trace(api.trace, out / "api_trace.csv");
    EXPECT_EQ(trace_without_timing(out / "trace.csv"), trace_without_timing(out / "api_trace.csv"));

    const json cfg = read_json(out / "run_config.json");
    EXPECT_EQ(cfg.at("command"), "solve");
    EXPECT_EQ(cfg.at("solve").at("iterations"), 30);
    EXPECT_EQ(cfg.at("geometry").at("views_u"), target.geometry->views_u);
}

TEST_F(CliTest, MultiplicativeSolveAndEvalRoundTrip) {
    const fs::path out = fresh("solve_mult");
    const std::string lf = (data() / "test_lf").string();
    ASSERT_EQ(run_cli({"solve", "--mode", "multiplicative", "--iters", "10", "--lf", lf, "--out", (out / "layers").string()}).code, 0);
    const CliResult r = run_cli({"eval", "--lf", lf, "--layers", (out / "layers").string(), "--report", (out / "eval.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = read_metric_csv(out / "eval.csv");
    const LoadedLightField target = read_lightfield(data() / "test_lf");
    DisplayGeometry g = *target.geometry;
    g.mode = Modulation::multiplicative;
    const LayerStack layers = read_layers(out / "layers");
    EXPECT_EQ(m.at("psnr_db"), fmt10(evaluate_psnr(reconstruct(layers, g), target.lf, crop_border(g))));
    EXPECT_EQ(m.at("crop_border"), std::to_string(crop_border(g)));
    EXPECT_TRUE(m.count("uniformity_cv"));
    EXPECT_TRUE(m.count("layer_mean_2"));
    EXPECT_TRUE(fs::exists(out / "run_config.json"));
}

TEST_F(CliTest, ResultsIndependentOfThreadCount) {
    const fs::path out = fresh("threads");
    const std::string lf = (data() / "test_lf").string();
    for (const char* n : {"1", "3"}) {
        ASSERT_EQ(run_cli({"solve", "--iters", "15", "--threads", n, "--lf", lf, "--out", (out / n).string()}).code, 0);
        auto args = train_args(out / (std::string("train") + n));
        args.insert(args.end(), {"--threads", n});
        ASSERT_EQ(run_cli(args).code, 0);
    }
    for (const char* f : {"layer_0.pfm", "layer_1.pfm", "layer_2.pfm", "layer_0.png", "layers.json"}) {
        EXPECT_EQ(file_bytes(out / "1" / f), file_bytes(out / "3" / f)) << f;
    }
    EXPECT_EQ(trace_without_timing(out / "1" / "trace.csv"), trace_without_timing(out / "3" / "trace.csv"));
    EXPECT_EQ(tree_bytes(out / "train1" / "best"), tree_bytes(out / "train3" / "best"));
    EXPECT_EQ(file_bytes(out / "train1" / "report.csv"), file_bytes(out / "train3" / "report.csv"));
    EXPECT_EQ(file_bytes(out / "train1" / "summary.json"), file_bytes(out / "train3" / "summary.json"));
}

TEST_F(CliTest, TrainInferBenchMatchApi) {
    const fs::path out = fresh("train");
    const CliResult r = run_cli(train_args(out));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("epoch 2"), std::string::npos);
    for (const char* f : {"best/spec.json", "report.csv", "summary.json", "run_config.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;

    const Dataset ds = read_dataset(data());
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 3;
    tc.seed = 3;
    tc.arch.arch = Architecture::unet;
    tc.arch.base_channels = 4;
    tc.arch.unet_depth = 2;
    const TrainResult api = train(ds, tc);
    save_checkpoint(out / "api_best", api.best, api.meta);
    write_report_csv(api.report, out / "api_report.csv");
    EXPECT_EQ(tree_bytes(out / "best"), tree_bytes(out / "api_best"));
    EXPECT_EQ(file_bytes(out / "report.csv"), file_bytes(out / "api_report.csv"));
    const json summary = read_json(out / "summary.json");
    EXPECT_EQ(summary.at("best_epoch"), api.report.best_epoch);
    EXPECT_EQ(summary.at("best_test_psnr_db").get<double>(), api.report.best_test_psnr_db);

    const std::string lf = (data() / "test_lf").string();
    const CliResult inf = run_cli({"infer", "--ckpt", (out / "best").string(), "--lf", lf, "--out", (out / "infer").string()});
    ASSERT_EQ(inf.code, 0) << inf.err;
    const LayerStack want = forward_infer(api.best, ds.test, true);
    const LayerStack got = read_layers(out / "infer");
    ASSERT_EQ(got.data().size(), want.data().size());
    for (std::size_t i = 0; i < want.data().size(); ++i) {
        ASSERT_EQ(got.data()[i], static_cast<double>(static_cast<float>(want.data()[i])));
    }

    const CliResult b = run_cli({"bench", "--ckpt", (out / "best").string(), "--lf", lf, "--iters", "2,4", "--runs", "1",
                                 "--report", (out / "bench" / "bench.csv").string()});
    ASSERT_EQ(b.code, 0) << b.err;
    std::ifstream in(out / "bench" / "bench.csv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], "method,iters,psnr_db,ms");
    EXPECT_EQ(lines[1].rfind("unet,0,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("iterative,4,", 0), 0u);
    EXPECT_TRUE(fs::exists(out / "bench" / "run_config.json"));
}

TEST_F(CliTest, MalformedDatasetExitsOneNamingTheManifest) {
    const fs::path bad = fresh("bad_data");
    fs::copy(data(), bad, fs::copy_options::recursive);
    std::ofstream(bad / "manifest.json") << "{\"format_version\": 1, \"samples\": 3}";
    const fs::path out = fresh("bad_train");
    const CliResult r = run_cli({"train", "--arch", "unet", "--epochs", "1", "--batch", "15", "--data", bad.string(),
                                 "--out", out.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("manifest"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(out));

    const CliResult missing = run_cli({"train", "--data", (root() / "nowhere").string(), "--out", out.string()});
    EXPECT_EQ(missing.code, 1);
    EXPECT_NE(missing.err.find("manifest"), std::string::npos) << missing.err;
}

TEST_F(CliTest, HelpListsEveryFlagWithItsDefault) {
    const std::map<std::string, std::vector<std::string>> principal{
        {"gen", {"--seed", "--scenes", "--planes", "--geometry", "--crop", "--scales", "--out"}},
        {"solve", {"--mode", "--iters", "--omega", "--lf", "--geometry", "--out"}},
        {"train", {"--arch", "--data", "--epochs", "--batch", "--lr", "--lambda-reg", "--seed", "--out"}},
        {"infer", {"--ckpt", "--lf", "--clamp", "--out"}},
        {"eval", {"--lf", "--layers", "--geometry", "--crop-border", "--report"}},
        {"bench", {"--ckpt", "--lf", "--iters", "--report"}}};
    for (const auto& [command, flags] : principal) {
        const CliResult r = run_cli({command, "--help"});
        ASSERT_EQ(r.code, 0);
        for (const std::string& f : flags) {
            EXPECT_NE(r.out.find("  " + f), std::string::npos) << command << " " << f;
        }
        EXPECT_NE(r.out.find("--threads"), std::string::npos);
        std::istringstream lines(r.out);
        int options = 0;
        for (std::string line; std::getline(lines, line);) {
            if (line.rfind("  -", 0) != 0 || line.find("--help") != std::string::npos) continue;
            ++options;
            EXPECT_NE(line.find('['), std::string::npos) << command << ": no default shown in '" << line << "'";
        }
        EXPECT_GE(options, static_cast<int>(flags.size()));
    }
}

TEST_F(CliTest, UsageErrorsExitOne) {
    CliResult r = run_cli({"solve", "--nope"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--nope"), std::string::npos);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"solve", "--mode", "subtractive"}).code, 1);
    EXPECT_EQ(run_cli({"solve", "--iters", "many"}).code, 1);
}

TEST_F(CliTest, ValidationErrorsExitOneBeforeAnyWork) {
    const std::string lf = (data() / "test_lf").string();
    const fs::path out = fresh("invalid");
    CliResult r = run_cli({"solve", "--iters", "0", "--lf", lf, "--out", out.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("iterations"), std::string::npos) << r.err;
    EXPECT_EQ(run_cli({"solve", "--omega", "2.5", "--lf", lf, "--out", out.string()}).code, 1);
    EXPECT_EQ(run_cli({"solve", "--lf", lf}).code, 1);  // no --out
    EXPECT_EQ(run_cli({"gen", "--scenes", "0", "--out", out.string()}).code, 1);
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, RuntimeErrorsExitTwo) {
    const fs::path blocker = fresh("blocker");
    std::ofstream(blocker) << "a file where a directory is expected";
    const CliResult r = run_cli({"solve", "--iters", "2", "--lf", (data() / "test_lf").string(), "--out", (blocker / "x").string()});
    EXPECT_EQ(r.code, 2) << r.err;
}

TEST_F(CliTest, ConfigFilePrecedenceAndKeyChecking) {
    const fs::path dir = fresh("config");
    fs::create_directories(dir);
    write_json(dir / "solve.json", json{{"command", "solve"}, {"solve", {{"iterations", 7}, {"relaxation", 0.5}}}});
    const std::string lf = (data() / "test_lf").string();
    CliResult r = run_cli({"solve", "--config", (dir / "solve.json").string(), "--iters", "9", "--lf", lf, "--out",
                           (dir / "out").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const json cfg = read_json(dir / "out" / "run_config.json");
    EXPECT_EQ(cfg.at("solve").at("iterations"), 9);    // flag beats file
    EXPECT_EQ(cfg.at("solve").at("relaxation"), 0.5);  // file beats default
    EXPECT_EQ(cfg.at("solve").at("epsilon_floor"), SolveConfig{}.epsilon_floor);

    write_json(dir / "typo.json", json{{"solve", {{"iterationz", 3}}}});
    r = run_cli({"solve", "--config", (dir / "typo.json").string(), "--lf", lf, "--out", (dir / "out2").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("iterationz"), std::string::npos) << r.err;

    write_json(dir / "wrong.json", json{{"command", "train"}});
    EXPECT_EQ(run_cli({"solve", "--config", (dir / "wrong.json").string(), "--lf", lf, "--out", (dir / "out3").string()}).code, 1);

    write_json(dir / "geom.json", json{{"views_u", 2}});
    r = run_cli({"solve", "--geometry", (dir / "geom.json").string(), "--lf", lf, "--out", (dir / "out4").string()});
    EXPECT_EQ(r.code, 1);  // the light field has 5x5 views
    EXPECT_NE(r.err.find("views"), std::string::npos) << r.err;
}

TEST_F(CliTest, NoWritesOutsideTheOutputDirectory) {
    const fs::path sandbox = fresh("sandbox");
    fs::create_directories(sandbox / "inputs");
    fs::copy(data() / "test_lf", sandbox / "inputs" / "lf", fs::copy_options::recursive);
    const auto before = tree_bytes(sandbox);
    const auto cwd = fs::current_path();
    fs::current_path(sandbox);
    EXPECT_EQ(run_cli({"solve", "--iters", "3", "--lf", "inputs/lf", "--out", "out/solve"}).code, 0);
    EXPECT_EQ(run_cli({"gen", "--scenes", "1", "--height", "16", "--width", "16", "--crop", "16", "--crops-per-scale", "1",
                       "--out", "out/gen"}).code,
              0);
    fs::current_path(cwd);
    std::map<std::string, std::string> after;
    for (const auto& [path, bytes] : tree_bytes(sandbox)) {
        if (path.rfind("out/", 0) != 0) after[path] = bytes;
    }
    EXPECT_EQ(after, before);
}
