#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ecoc/nncore.hpp"
#include "support/gradcheck.hpp"

using namespace ecoc;
using namespace ecoc::nn;
using testsupport::max_backward_fd_error;

namespace {

std::vector<LayerSpec> small_spec() {
    return {LayerSpec::dense(4, 6), LayerSpec::relu(),    LayerSpec::dropout(0.4),
            LayerSpec::dense(6, 5), LayerSpec::tanh(),    LayerSpec::dense(5, 3),
            LayerSpec::tanh()};
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_symmetric(scale);
    return v;
}

} // namespace

TEST(InitNetwork, ShapesAndBound) {
    Network net = init_network({LayerSpec::dense(2, 3), LayerSpec::tanh()}, 1);
    ASSERT_EQ(net.params.size(), 1u);
    EXPECT_EQ(net.params[0].w.rows, 3u);
    EXPECT_EQ(net.params[0].w.cols, 2u);
    EXPECT_EQ(net.params[0].b.size(), 3u);
    const double bound = std::sqrt(6.0 / 5.0);
    for (double w : net.params[0].w.a) EXPECT_LE(std::fabs(w), bound);
    for (double b : net.params[0].b) EXPECT_EQ(b, 0.0);
}

TEST(InitNetwork, DeterministicPerSeed) {
    Network a = init_network(small_spec(), 7);
    Network b = init_network(small_spec(), 7);
    ASSERT_EQ(a.params.size(), b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        EXPECT_EQ(a.params[i].w.a, b.params[i].w.a);
        EXPECT_EQ(a.params[i].b, b.params[i].b);
    }
}

TEST(InitNetwork, RejectsBadSpecs) {
    EXPECT_THROW(init_network({}, 0), InconsistentDims);
    EXPECT_THROW(init_network({LayerSpec::relu()}, 0), InconsistentDims);
    EXPECT_THROW(init_network({LayerSpec::dense(2, 3), LayerSpec::dense(4, 2)}, 0),
                 InconsistentDims);
    EXPECT_THROW(init_network({LayerSpec::dense(2, 0)}, 0), InconsistentDims);
    EXPECT_THROW(init_network({LayerSpec::dense(2, 2), LayerSpec::dropout(1.0)}, 0),
                 InconsistentDims);
}

TEST(Forward, IdentityDenseLayer) {
    Network net = init_network({LayerSpec::dense(2, 2)}, 0);
    net.params[0].w.a = {1, 0, 0, 1};
    net.params[0].b = {0, 0};
    auto [y, trace] = forward(net, std::vector<double>{3, -2}, Mode::Eval);
    EXPECT_EQ(y, (std::vector<double>{3, -2}));
}

TEST(Forward, HandComputedTanh) {
    Network net = init_network({LayerSpec::dense(1, 1), LayerSpec::tanh()}, 0);
    net.params[0].w.a = {2.0};
    net.params[0].b = {1.0};
    auto [y, trace] = forward(net, std::vector<double>{0.0}, Mode::Eval);
    EXPECT_NEAR(y[0], 0.761594, 1e-6);
    EXPECT_DOUBLE_EQ(y[0], std::tanh(1.0));
}

TEST(Forward, DropoutEvalIsIdentity) {
    Network net = init_network({LayerSpec::dense(3, 3), LayerSpec::dropout(0.5)}, 3);
    net.params[0].w.a = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    const std::vector<double> x{0.5, -1.5, 2.0};
    auto [y, trace] = forward(net, x, Mode::Eval);
    EXPECT_EQ(y, x);
    EXPECT_EQ(eval_forward(net, x), x);
}

TEST(Forward, EvalIsPureAndDrawsNothing) {
    Network net = init_network(small_spec(), 11);
    Rng probe(99);
    const auto x = random_vec(probe, 4);
    const std::uint64_t before = net.rng.state();
    auto y1 = eval_forward(net, x);
    auto [y2, trace] = forward(net, x, Mode::Eval);
    EXPECT_EQ(net.rng.state(), before);
    EXPECT_EQ(y1, y2);
}

TEST(Forward, TrainDropoutMeanApproachesIdentity) {
    // Inverted dropout: E[mask*x/(1-r)] = x. Mean over many seeded masks
    // must land within 3 standard errors coordinatewise.
    const double rate = 0.3;
    Network net = init_network({LayerSpec::dense(2, 2), LayerSpec::dropout(rate)}, 5);
    net.params[0].w.a = {1, 0, 0, 1};
    const std::vector<double> x{1.0, -2.0};
    const int n = 20000;
    std::vector<double> sum(2, 0.0);
    for (int i = 0; i < n; ++i) {
        auto [y, trace] = forward(net, x, Mode::Train);
        sum[0] += y[0];
        sum[1] += y[1];
    }
    for (int j = 0; j < 2; ++j) {
        const double mean = sum[j] / n;
        const double se = std::fabs(x[j]) * std::sqrt(rate / ((1.0 - rate) * n));
        EXPECT_NEAR(mean, x[j], 3.0 * se);
    }
}

TEST(Forward, RejectsWrongInputWidth) {
    Network net = init_network(small_spec(), 2);
    EXPECT_THROW(eval_forward(net, std::vector<double>{1.0}), LengthMismatch);
}

TEST(MseLoss, HandValues) {
    auto [v0, g0] = mse_loss({1, -1}, {1, -1});
    EXPECT_DOUBLE_EQ(v0, 0.0);
    EXPECT_EQ(g0, (std::vector<double>{0, 0}));

    auto [v1, g1] = mse_loss({1, -1}, {1, 1});
    EXPECT_DOUBLE_EQ(v1, 2.0);
    EXPECT_EQ(g1, (std::vector<double>{0, -2}));

    auto [v2, g2] = mse_loss({0}, {1});
    EXPECT_DOUBLE_EQ(v2, 1.0);
    EXPECT_EQ(g2, (std::vector<double>{-2}));

    EXPECT_THROW(mse_loss({}, {}), EmptyVector);
    EXPECT_THROW(mse_loss({1}, {1, 2}), LengthMismatch);
}

TEST(Backward, HandChainRule) {
    Network net = init_network({LayerSpec::dense(1, 1)}, 0);
    net.params[0].w.a = {2.0};
    net.params[0].b = {0.0};
    auto [y, trace] = forward(net, std::vector<double>{3.0}, Mode::Eval);
    GradientSet g = backward(net, trace, std::vector<double>{1.0});
    EXPECT_DOUBLE_EQ(g.dense[0].w.a[0], 3.0);
    EXPECT_DOUBLE_EQ(g.dense[0].b[0], 1.0);
    EXPECT_DOUBLE_EQ(g.input.a[0], 2.0);
}

TEST(Backward, ZeroGradOutGivesZeroGradients) {
    Network net = init_network(small_spec(), 21);
    Rng rng(5);
    auto [y, trace] = forward(net, random_vec(rng, 4), Mode::Eval);
    GradientSet g = backward(net, trace, std::vector<double>(3, 0.0));
    for (const auto& d : g.dense) {
        for (double v : d.w.a) EXPECT_EQ(v, 0.0);
        for (double v : d.b) EXPECT_EQ(v, 0.0);
    }
    for (double v : g.input.a) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MatchesFiniteDifferencesEvalMode) {
    // Oracle: central finite differences, step 1e-5, on a 3-dense-layer
    // network covering relu, tanh and dropout(eval).
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Network net = init_network(small_spec(), seed);
        Rng rng(seed + 100);
        const auto x = random_vec(rng, 4);
        const auto target = random_vec(rng, 3, 0.8);
        EXPECT_LT(max_backward_fd_error(net, x, target, Mode::Eval), 1e-6);
    }
}

TEST(Backward, MatchesFiniteDifferencesTrainModeFixedMask) {
    // Train mode replays the same dropout mask for every probe via the
    // rng reset, which makes the loss differentiable.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Network net = init_network(small_spec(), seed);
        Rng rng(seed + 200);
        const auto x = random_vec(rng, 4);
        const auto target = random_vec(rng, 3, 0.8);
        EXPECT_LT(max_backward_fd_error(net, x, target, Mode::Train), 1e-6);
    }
}

TEST(Backward, BatchGradientIsSumOfPerSampleGradients) {
    Network net = init_network(small_spec(), 33);
    Rng rng(7);
    Mat xb(3, 4);
    for (double& v : xb.a) v = rng.next_symmetric(1.0);
    Mat gy(3, 3);
    for (double& v : gy.a) v = rng.next_symmetric(1.0);

    auto [yb, traceb] = forward(net, xb, Mode::Eval);
    GradientSet gb = backward(net, traceb, gy);

    GradientSet acc;
    for (std::size_t b = 0; b < 3; ++b) {
        std::vector<double> x(xb.row(b), xb.row(b) + 4);
        std::vector<double> g(gy.row(b), gy.row(b) + 3);
        auto [y, trace] = forward(net, x, Mode::Eval);
        GradientSet gs = backward(net, trace, g);
        if (b == 0) {
            acc = std::move(gs);
        } else {
            for (std::size_t l = 0; l < acc.dense.size(); ++l) {
                for (std::size_t i = 0; i < acc.dense[l].w.size(); ++i)
                    acc.dense[l].w.a[i] += gs.dense[l].w.a[i];
                for (std::size_t i = 0; i < acc.dense[l].b.size(); ++i)
                    acc.dense[l].b[i] += gs.dense[l].b[i];
            }
        }
    }
    for (std::size_t l = 0; l < acc.dense.size(); ++l)
        for (std::size_t i = 0; i < acc.dense[l].w.size(); ++i)
            EXPECT_NEAR(gb.dense[l].w.a[i], acc.dense[l].w.a[i], 1e-12);
}

TEST(Backward, TraceMismatchDetected) {
    Network net = init_network(small_spec(), 3);
    Network other = init_network({LayerSpec::dense(4, 3)}, 3);
    Rng rng(1);
    auto [y, trace] = forward(net, random_vec(rng, 4), Mode::Eval);
    EXPECT_THROW(backward(other, trace, std::vector<double>{1, 1, 1}), TraceMismatch);
    EXPECT_THROW(backward(net, trace, std::vector<double>{1, 1}), TraceMismatch);
}

TEST(RmsProp, HandDerivedSingleStep) {
    std::vector<DenseParams> params(1);
    params[0].w = Mat(1, 1);
    params[0].w.a = {1.0};
    std::vector<DenseParams> grads(1);
    grads[0].w = Mat(1, 1);
    grads[0].w.a = {1.0};
    RmsPropState state = make_rmsprop_state(params);

    rmsprop_step(params, grads, state);
    EXPECT_NEAR(state.accum[0].w.a[0], 0.01, 1e-15);
    EXPECT_NEAR(params[0].w.a[0], 1.0 - 3e-4 / (0.1 + 1e-8), 1e-15);
    EXPECT_NEAR(params[0].w.a[0], 0.997000, 1e-9);

    rmsprop_step(params, grads, state);
    EXPECT_NEAR(state.accum[0].w.a[0], 0.99 * 0.01 + 0.01, 1e-15);
}

TEST(RmsProp, ZeroGradientLeavesParamsDecaysAccum) {
    std::vector<DenseParams> params(1);
    params[0].w = Mat(2, 2);
    params[0].w.a = {1, 2, 3, 4};
    params[0].b = {0.5, -0.5};
    std::vector<DenseParams> grads(1);
    grads[0].w = Mat(2, 2);
    grads[0].b = {0.0, 0.0};
    RmsPropState state = make_rmsprop_state(params);
    state.accum[0].w.a = {0.1, 0.1, 0.1, 0.1};

    auto before = params[0].w.a;
    rmsprop_step(params, grads, state);
    EXPECT_EQ(params[0].w.a, before);
    for (double a : state.accum[0].w.a) EXPECT_NEAR(a, 0.099, 1e-15);
}

TEST(RmsProp, ShapeMismatchDetected) {
    std::vector<DenseParams> params(1);
    params[0].w = Mat(2, 2);
    std::vector<DenseParams> grads(1);
    grads[0].w = Mat(2, 3);
    RmsPropState state = make_rmsprop_state(params);
    EXPECT_THROW(rmsprop_step(params, grads, state), ShapeMismatch);
}

TEST(Checkpoint, RoundTripIsByteExact) {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "ecoc_nncore_ckpt.ecnn").string();

    Network net = init_network(small_spec(), 17);
    save_checkpoint(net, path);

    Network loaded = init_network(small_spec(), 99);
    load_checkpoint(loaded, path);
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        EXPECT_EQ(loaded.params[i].w.a, net.params[i].w.a);
        EXPECT_EQ(loaded.params[i].b, net.params[i].b);
    }

    // save(load(file)) reproduces the file bit for bit
    const auto path2 = (fs::temp_directory_path() / "ecoc_nncore_ckpt2.ecnn").string();
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(b1, b2);
    ASSERT_GT(b1.size(), 12u);
    EXPECT_EQ(b1.substr(0, 4), "ECNN");

    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST(Checkpoint, ShapeAndFormatErrors) {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "ecoc_nncore_bad.ecnn").string();
    Network net = init_network(small_spec(), 17);
    save_checkpoint(net, path);

    Network narrow = init_network({LayerSpec::dense(4, 2)}, 0);
    EXPECT_THROW(load_checkpoint(narrow, path), ShapeMismatch);

    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE";
    }
    EXPECT_THROW(load_checkpoint(net, path), ParseError);
    EXPECT_THROW(load_checkpoint(net, path + ".missing"), IoFailure);
    std::remove(path.c_str());
}
