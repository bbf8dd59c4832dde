#ifndef ECOC_TESTS_GRADCHECK_HPP
#define ECOC_TESTS_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "ecoc/nncore.hpp"

namespace ecoc::testsupport {

// |a - b| relative to max(1, |a|, |b|): a relative comparison with an
// absolute floor so near-zero gradients do not blow up the ratio.
inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

/// Central finite difference of a scalar function at x, step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Checks every analytic parameter/input gradient of `net` against central
/// finite differences of the scalar loss
///   loss(x) = mse(net(x), target)
/// Dropout masks are replayed by resetting the network rng before each
/// forward, so train mode is differentiable too. Returns the worst
/// relative error seen.
inline double max_backward_fd_error(nn::Network& net, const std::vector<double>& x,
                                    const std::vector<double>& target, nn::Mode mode,
                                    double h = 1e-5) {
    const std::uint64_t rng_mark = net.rng.state();
    auto loss_now = [&]() {
        net.rng.set_state(rng_mark);
        auto [y, trace] = nn::forward(net, x, mode);
        return nn::mse_loss(y, target).first;
    };

    net.rng.set_state(rng_mark);
    auto [y, trace] = nn::forward(net, x, mode);
    auto [value, grad_pred] = nn::mse_loss(y, target);
    (void)value;
    nn::GradientSet g = nn::backward(net, trace, grad_pred);

    double worst = 0.0;
    auto probe = [&](double& p, double analytic) {
        const double save = p;
        p = save + h;
        const double up = loss_now();
        p = save - h;
        const double down = loss_now();
        p = save;
        worst = std::max(worst, rel_err((up - down) / (2.0 * h), analytic));
    };

    for (std::size_t layer = 0; layer < net.params.size(); ++layer) {
        for (std::size_t i = 0; i < net.params[layer].w.size(); ++i)
            probe(net.params[layer].w.a[i], g.dense[layer].w.a[i]);
        for (std::size_t i = 0; i < net.params[layer].b.size(); ++i)
            probe(net.params[layer].b[i], g.dense[layer].b[i]);
    }

    // gradient w.r.t. the input
    std::vector<double> xv = x;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double save = xv[i];
        auto loss_at = [&](double v) {
            xv[i] = v;
            net.rng.set_state(rng_mark);
            auto [yy, tt] = nn::forward(net, xv, mode);
            return nn::mse_loss(yy, target).first;
        };
        const double fd = central_diff(loss_at, save, h);
        xv[i] = save;
        worst = std::max(worst, rel_err(fd, g.input.a[i]));
    }
    net.rng.set_state(rng_mark);
    return worst;
}

} // namespace ecoc::testsupport

#endif
