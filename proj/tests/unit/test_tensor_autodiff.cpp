#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <vector>

#include "../common/gradcheck.hpp"
#include "../common/oracles.hpp"
#include "lff/autodiff.hpp"
#include "lff/error.hpp"
#include "lff/kernels.hpp"
#include "lff/optim.hpp"
#include "lff/parallel.hpp"

using namespace lff;
using namespace lff::testing;

namespace {

Tensor4<double> from_values(Shape4 s, std::vector<double> v) { return Tensor4<double>(s, std::move(v)); }

struct ThreadGuard {
    ~ThreadGuard() { set_num_threads(0); }
};

}  // namespace

TEST(Tensor, ConstructionAndIndexing) {
    Tensor4<float> t(Shape4{2, 3, 4, 5}, 1.5f);
    EXPECT_EQ(t.size(), 120u);
    EXPECT_EQ(t.index(1, 2, 3, 4), 119u);
    t.at(1, 0, 2, 1) = 7.0f;
    EXPECT_EQ(t.plane(1, 0)[2 * 5 + 1], 7.0f);
    EXPECT_EQ(t.sample(1).size(), 60u);
    EXPECT_THROW(Tensor4<float>(Shape4{1, 1, 2, 2}, std::vector<float>(3)), ValidationError);
}

TEST(Tensor, CheckFiniteRejectsNanAndInf) {
    std::vector<double> v{1.0, std::numeric_limits<double>::quiet_NaN()};
    EXPECT_THROW(check_finite<double>(v, "probe"), NumericError);
    v[1] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(check_finite<double>(v, "probe"), NumericError);
    v[1] = 2.0;
    EXPECT_NO_THROW(check_finite<double>(v, "probe"));
}

TEST(Parallel, EveryIndexRunsExactlyOnce) {
    ThreadGuard guard;
    for (unsigned threads : {1u, 2u, 7u}) {
        set_num_threads(threads);
        std::vector<std::atomic<int>> hits(1000);
        parallel_for(hits.size(), [&](std::size_t i) { hits[i].fetch_add(1); });
        for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
}

TEST(Parallel, ExceptionsPropagateToCaller) {
    ThreadGuard guard;
    set_num_threads(3);
    EXPECT_THROW(parallel_for(50, [](std::size_t i) {
                     if (i == 17) throw ValidationError("boom");
                 }),
                 ValidationError);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
    const auto x = from_values(Shape4{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor4<double> k(Shape4{1, 1, 3, 3});
    k.at(0, 0, 1, 1) = 1.0;
    EXPECT_EQ(kernels::conv2d(x, k, Tensor4<double>(Shape4{1, 1, 1, 1}), 1), x);
}

TEST(Conv2d, OnesKernelMatchesNestedLoopOracle) {
    const auto x = from_values(Shape4{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor4<double> k(Shape4{1, 1, 3, 3}, 1.0);
    const auto y = kernels::conv2d(x, k, Tensor4<double>(), 1);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 45.0);
    EXPECT_EQ(y, conv2d_oracle(x, k, Tensor4<double>(), 1));
}

TEST(Conv2d, RandomInstancesMatchOracle) {
    Rng rng(11);
    for (int i = 0; i < 30; ++i) {
        const std::size_t n = rand_int(rng, 1, 3), ci = rand_int(rng, 1, 5), co = rand_int(rng, 1, 5);
        const std::size_t h = rand_int(rng, 1, 9), w = rand_int(rng, 1, 9);
        const std::size_t k = rng.below(2) ? 3 : 1;
        const auto x = random_tensor<double>(Shape4{n, ci, h, w}, rng);
        const auto wt = random_tensor<double>(Shape4{co, ci, k, k}, rng);
        const auto b = random_tensor<double>(Shape4{co, 1, 1, 1}, rng);
        const auto got = kernels::conv2d(x, wt, b, static_cast<int>((k - 1) / 2));
        const auto want = conv2d_oracle(x, wt, b, static_cast<int>((k - 1) / 2));
        for (std::size_t e = 0; e < got.size(); ++e) EXPECT_NEAR(got[e], want[e], 1e-12);
    }
}

TEST(Conv2d, RejectsBadArguments) {
    const Tensor4<double> x(Shape4{1, 2, 4, 4});
    EXPECT_THROW(kernels::conv2d(x, Tensor4<double>(Shape4{1, 3, 3, 3}), Tensor4<double>(), 1), ValidationError);
    EXPECT_THROW(kernels::conv2d(x, Tensor4<double>(Shape4{1, 2, 3, 3}), Tensor4<double>(), 0), ValidationError);
    EXPECT_THROW(kernels::conv2d(x, Tensor4<double>(Shape4{1, 2, 2, 2}), Tensor4<double>(), 0), ValidationError);
}

TEST(Conv2d, GradientOfSumMatchesFiniteDifferences) {
    Rng rng(5);
    GradCase c;
    c.inputs = {random_tensor<double>(Shape4{2, 3, 8, 8}, rng), random_tensor<double>(Shape4{4, 3, 3, 3}, rng),
                random_tensor<double>(Shape4{4, 1, 1, 1}, rng)};
    c.op = [](Graph<double>& g, const std::vector<NodeId>& in) { return sum(g, conv2d(g, in[0], in[1], in[2], 1)); };
    EXPECT_LE(gradcheck_relative_error(c, rng), 1e-4);
}

TEST(Conv2d, NonFiniteOutputIsAnError) {
    Graph<double> g;
    Tensor4<double> x(Shape4{1, 1, 2, 2}, 1.0);
    x[0] = std::numeric_limits<double>::infinity();
    const NodeId xi = g.constant(x);
    const NodeId w = g.constant(Tensor4<double>(Shape4{1, 1, 1, 1}, 1.0));
    EXPECT_THROW(conv2d(g, xi, w, std::nullopt, 0), NumericError);
}

TEST(ConvTranspose, SinglePixelExpansion) {
    const auto x = from_values(Shape4{1, 1, 1, 1}, {3.0});
    const auto k = from_values(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(kernels::conv_transpose2d(x, k, Tensor4<double>()), from_values(Shape4{1, 1, 2, 2}, {3, 6, 9, 12}));
}

TEST(ConvTranspose, ZeroInputGivesZeroOutput) {
    Rng rng(2);
    const auto k = random_tensor<double>(Shape4{2, 3, 2, 2}, rng);
    const auto y = kernels::conv_transpose2d(Tensor4<double>(Shape4{1, 2, 3, 3}), k, Tensor4<double>());
    EXPECT_EQ(y.shape(), (Shape4{1, 3, 6, 6}));
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ConvTranspose, MatchesOracleAndIsAdjointOfStride2Conv) {
    Rng rng(3);
    for (int i = 0; i < 25; ++i) {
        const std::size_t n = rand_int(rng, 1, 2), ci = rand_int(rng, 1, 4), co = rand_int(rng, 1, 4);
        const std::size_t h = rand_int(rng, 1, 5), w = rand_int(rng, 1, 5);
        const auto x = random_tensor<double>(Shape4{n, ci, h, w}, rng);
        const auto k = random_tensor<double>(Shape4{ci, co, 2, 2}, rng);
        const auto y = random_tensor<double>(Shape4{n, co, 2 * h, 2 * w}, rng);
        const auto up = kernels::conv_transpose2d(x, k, Tensor4<double>());
        const auto want = conv_transpose_oracle(x, k, Tensor4<double>());
        for (std::size_t e = 0; e < up.size(); ++e) EXPECT_NEAR(up[e], want[e], 1e-12);
        EXPECT_NEAR(inner(up, y), inner(x, conv_stride2_oracle(y, k)), 1e-10);
    }
}

TEST(Maxpool, BasicAndOracle) {
    EXPECT_EQ(kernels::maxpool2x2(from_values(Shape4{1, 1, 2, 2}, {1, 2, 3, 4}), nullptr),
              from_values(Shape4{1, 1, 1, 1}, {4.0}));
    Rng rng(9);
    const auto x = random_tensor<double>(Shape4{1, 2, 4, 4}, rng);
    EXPECT_EQ(kernels::maxpool2x2(x, nullptr), maxpool_oracle(x));
    EXPECT_THROW(kernels::maxpool2x2(Tensor4<double>(Shape4{1, 1, 3, 4}), nullptr), ValidationError);
}

TEST(Maxpool, TiesRouteGradientToFirstRowMajorCell) {
    Graph<double> g;
    const NodeId x = g.leaf(Tensor4<double>(Shape4{1, 1, 4, 4}, 2.0));
    const NodeId y = maxpool2x2(g, x);
    for (double v : g.value(y).data()) EXPECT_EQ(v, 2.0);
    g.backward(sum(g, y));
    const auto& gx = g.grad(x);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_EQ(gx.at(0, 0, 2 * i, 2 * j), 1.0);
            EXPECT_EQ(gx.at(0, 0, 2 * i, 2 * j + 1) + gx.at(0, 0, 2 * i + 1, 2 * j) + gx.at(0, 0, 2 * i + 1, 2 * j + 1), 0.0);
        }
    }
}

TEST(Relu, ValuesAndZeroConvention) {
    Graph<double> g;
    const NodeId x = g.leaf(from_values(Shape4{1, 1, 1, 3}, {-1, 0, 2}));
    const NodeId y = relu(g, x);
    EXPECT_EQ(g.value(y), from_values(Shape4{1, 1, 1, 3}, {0, 0, 2}));
    g.backward(sum(g, y));
    EXPECT_EQ(g.grad(x), from_values(Shape4{1, 1, 1, 3}, {0, 0, 1}));
    const auto pos = from_values(Shape4{1, 1, 1, 3}, {0, 0.5, 3});
    EXPECT_EQ(kernels::relu(pos), pos);
}

TEST(Concat, ShapeLawAndSliceBack) {
    Rng rng(4);
    const auto a = random_tensor<double>(Shape4{2, 64, 3, 3}, rng);
    const auto b = random_tensor<double>(Shape4{2, 64, 3, 3}, rng);
    const auto c = kernels::concat_channels(a, b);
    EXPECT_EQ(c.shape(), (Shape4{2, 128, 3, 3}));
    EXPECT_EQ(slice_channels(c, 0, 64), a);
    EXPECT_EQ(slice_channels(c, 64, 64), b);
    EXPECT_THROW(kernels::concat_channels(a, Tensor4<double>(Shape4{2, 1, 3, 4})), ValidationError);
}

TEST(MseLoss, AnalyticValuesAndOracle) {
    Graph<double> g;
    const auto t = from_values(Shape4{1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
    EXPECT_EQ(g.value(mse_loss(g, g.constant(t), g.constant(t)))[0], 0.0);
    auto shifted = t;
    for (auto& v : shifted.data()) v += 0.5;
    EXPECT_NEAR(g.value(mse_loss(g, g.constant(shifted), g.constant(t)))[0], 0.25, 1e-15);

    Rng rng(8);
    const auto p = random_tensor<double>(Shape4{2, 3, 4, 5}, rng);
    const auto q = random_tensor<double>(Shape4{2, 3, 4, 5}, rng);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) acc += (static_cast<long double>(p[i]) - q[i]) * (static_cast<long double>(p[i]) - q[i]);
    EXPECT_NEAR(g.value(mse_loss(g, g.constant(p), g.constant(q)))[0], static_cast<double>(acc / p.size()), 1e-12);
    EXPECT_THROW(mse_loss(g, g.constant(p), g.constant(Tensor4<double>(Shape4{1, 1, 1, 1}))), ValidationError);
}

TEST(RangePenalty, AnalyticValues) {
    Graph<double> g;
    Tensor4<double> inside(Shape4{1, 1, 2, 3}, 0.5);
    inside[0] = 0.0;
    inside[1] = 1.0;
    EXPECT_EQ(g.value(range_penalty(g, g.constant(inside)))[0], 0.0);
    Tensor4<double> one_out(Shape4{1, 1, 2, 4}, 0.3);
    one_out[5] = 1.5;
    EXPECT_NEAR(g.value(range_penalty(g, g.constant(one_out)))[0], 0.25 / 8.0, 1e-15);
}

TEST(Gradcheck, EveryOpOnRandomCases) {
    for (const auto& op : grad_suite_ops()) {
        const GradSuiteResult r = run_grad_suite(op, 20, 1234);
        EXPECT_LE(r.max_relative_error, 1e-4) << op;
    }
}

TEST(Backward, SumGivesOnes) {
    Graph<double> g;
    const NodeId x = g.leaf(Tensor4<double>(Shape4{1, 2, 2, 2}, 3.0));
    g.backward(sum(g, x));
    for (double v : g.grad(x).data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, MseOfConvMatchesFiniteDifferences) {
    Rng rng(21);
    const auto target = random_tensor<double>(Shape4{1, 2, 5, 5}, rng);
    GradCase c;
    c.inputs = {random_tensor<double>(Shape4{1, 3, 5, 5}, rng), random_tensor<double>(Shape4{2, 3, 3, 3}, rng)};
    c.op = [target](Graph<double>& g, const std::vector<NodeId>& in) {
        return mse_loss(g, conv2d(g, in[0], in[1], std::nullopt, 1), g.constant(target));
    };
    EXPECT_LE(gradcheck_relative_error(c, rng), 1e-4);
}

TEST(Backward, BranchesAccumulate) {
    Rng rng(6);
    const auto xv = random_tensor<double>(Shape4{1, 1, 3, 3}, rng);
    const auto w1 = random_tensor<double>(Shape4{1, 1, 1, 1}, rng);
    const auto w2 = random_tensor<double>(Shape4{1, 1, 3, 3}, rng);
    auto path_grad = [&](int which) {
        Graph<double> g;
        const NodeId x = g.leaf(xv);
        NodeId total{};
        const NodeId a = sum(g, conv2d(g, x, g.constant(w1), std::nullopt, 0));
        const NodeId b = sum(g, relu(g, conv2d(g, x, g.constant(w2), std::nullopt, 1)));
        total = which == 0 ? add_scaled(g, a, b, 1.0) : (which == 1 ? a : b);
        g.backward(total);
        return g.grad(x);
    };
    const auto both = path_grad(0);
    const auto first = path_grad(1);
    const auto second = path_grad(2);
    for (std::size_t i = 0; i < both.size(); ++i) EXPECT_NEAR(both[i], first[i] + second[i], 1e-14);
}

TEST(Backward, ErrorsAndGradientAllocation) {
    Graph<double> g;
    const NodeId c = g.constant(Tensor4<double>(Shape4{1, 1, 2, 2}, 1.0));
    const NodeId x = g.leaf(Tensor4<double>(Shape4{1, 1, 2, 2}, 2.0));
    const NodeId y = add_scaled(g, x, c, 1.0);
    EXPECT_THROW(g.backward(y), ValidationError);  // not a scalar
    const NodeId loss = sum(g, y);
    g.backward(loss);
    EXPECT_TRUE(g.has_grad_buffer(x));
    EXPECT_FALSE(g.has_grad_buffer(c));
    EXPECT_FALSE(g.requires_grad(c));
    EXPECT_THROW(g.grad(c), ValidationError);
    EXPECT_THROW(g.backward(loss), ValidationError);  // double backward
}

TEST(Backward, ParameterGradientsAccumulateIntoParameter) {
    Parameter<double> p("w", Tensor4<double>(Shape4{1, 1, 1, 2}, 1.0));
    for (int rep = 0; rep < 2; ++rep) {
        Graph<double> g;
        g.backward(sum(g, g.parameter(p)));
    }
    for (double v : p.grad.data()) EXPECT_EQ(v, 2.0);
}

TEST(Threads, ForwardAndBackwardAreIndependentOfWorkerCount) {
    ThreadGuard guard;
    Rng rng(77);
    const auto x = random_tensor<float>(Shape4{5, 6, 9, 7}, rng);
    const auto w = random_tensor<float>(Shape4{4, 6, 3, 3}, rng);
    const auto b = random_tensor<float>(Shape4{4, 1, 1, 1}, rng);
    const auto k = random_tensor<float>(Shape4{6, 3, 2, 2}, rng);
    auto run = [&](unsigned threads) {
        set_num_threads(threads);
        Parameter<float> pw("w", w);
        Graph<float> g;
        const NodeId xi = g.leaf(x);
        const NodeId y = conv2d(g, xi, g.parameter(pw), g.constant(b), 1);
        const NodeId u = conv_transpose2d(g, xi, g.constant(k), std::nullopt);
        const NodeId loss = add_scaled(g, sum(g, relu(g, y)), sum(g, maxpool2x2(g, u)), 0.5f);
        g.backward(loss);
        return std::make_tuple(g.value(y), g.value(u), g.grad(xi), pw.grad);
    };
    const auto one = run(1);
    for (unsigned t : {2u, 3u, 8u}) EXPECT_EQ(run(t), one) << t << " threads";
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    std::vector<Parameter<double>> params{Parameter<double>("p", Tensor4<double>(Shape4{1, 1, 1, 3}, 0.7))};
    AdamState<double> state(params, AdamOptions{});
    adam_step(params, state);
    for (double v : params[0].value.data()) EXPECT_EQ(v, 0.7);
    EXPECT_EQ(state.t, 1);
}

TEST(Adam, FirstStepMagnitude) {
    for (double g : {0.3, -2.0, 1e-6}) {
        std::vector<Parameter<double>> params{Parameter<double>("p", Tensor4<double>(Shape4{1, 1, 1, 1}, 1.0))};
        params[0].grad[0] = g;
        AdamState<double> state(params, AdamOptions{});
        adam_step(params, state);
        EXPECT_NEAR(std::abs(params[0].value[0] - 1.0), 1e-4 * std::abs(g) / (std::abs(g) + 1e-8), 1e-15);
        EXPECT_EQ(params[0].grad[0], 0.0);
    }
}

TEST(Adam, MatchesScalarRecurrence) {
    const double g = 0.37;
    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<Parameter<double>> params{Parameter<double>("p", Tensor4<double>(Shape4{1, 1, 1, 1}, 0.25))};
    AdamState<double> state(params, AdamOptions{lr, b1, b2, eps});
    double p = 0.25, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
        params[0].grad[0] = g;
        adam_step(params, state);
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        p -= lr * mh / (std::sqrt(vh) + eps);
        EXPECT_NEAR(params[0].value[0], p, 1e-12);
        EXPECT_EQ(state.t, t);
    }
}

TEST(Adam, RejectsMismatchedState) {
    std::vector<Parameter<double>> params{Parameter<double>("p", Tensor4<double>(Shape4{1, 1, 1, 2}))};
    AdamState<double> state(params, AdamOptions{});
    params[0] = Parameter<double>("p", Tensor4<double>(Shape4{1, 1, 1, 3}));
    EXPECT_THROW(adam_step(params, state), ValidationError);
}

TEST(Kaiming, BoundAndStrictInterior) {
    EXPECT_NEAR(kaiming_bound(225), 0.16330, 5e-6);
    Rng rng(1);
    const auto w = kaiming_init<float>(Shape4{64, 25, 3, 3}, rng);
    const double b = kaiming_bound(225);
    for (float v : w.data()) {
        EXPECT_GT(v, -b);
        EXPECT_LT(v, b);
    }
    EXPECT_THROW(kaiming_bound(0), ValidationError);
}

TEST(Kaiming, SameSeedIsBitIdentical) {
    Rng a(99), b(99);
    EXPECT_EQ(kaiming_init<float>(Shape4{8, 4, 3, 3}, a), kaiming_init<float>(Shape4{8, 4, 3, 3}, b));
}

TEST(Kaiming, MomentsOfOneHundredThousandSamples) {
    Rng rng(2024);
    const auto w = kaiming_init<double>(Shape4{100000, 1, 1, 1}, 225, rng);
    const double b = kaiming_bound(225);
    double mean = 0.0;
    for (double v : w.data()) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    const double sigma = std::sqrt(b * b / 3.0 / static_cast<double>(w.size()));
    EXPECT_LT(std::abs(mean), 3.0 * sigma);
    EXPECT_NEAR(var, b * b / 3.0, 0.05 * b * b / 3.0);
}
