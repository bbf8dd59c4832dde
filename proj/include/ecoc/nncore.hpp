#ifndef ECOC_NNCORE_HPP
#define ECOC_NNCORE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ecoc/errors.hpp"
#include "ecoc/mat.hpp"
#include "ecoc/rng.hpp"

namespace ecoc::nn {

enum class LayerKind { Dense, Relu, Tanh, Dropout };

struct LayerSpec {
    LayerKind kind;
    std::size_t in_dim = 0;  // dense only
    std::size_t out_dim = 0; // dense only
    double rate = 0.0;       // dropout only

    static LayerSpec dense(std::size_t in, std::size_t out) {
        return {LayerKind::Dense, in, out, 0.0};
    }
    static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0.0}; }
    static LayerSpec tanh() { return {LayerKind::Tanh, 0, 0, 0.0}; }
    static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, rate}; }
};

struct DenseParams {
    Mat w; // out_dim x in_dim, row-major
    std::vector<double> b;
};

enum class Mode { Train, Eval };

/// Feedforward stack of dense / relu / tanh / dropout layers. Parameters
/// live in `params` (one entry per dense layer, in order); `rng` feeds
/// initialization and the train-mode dropout masks.
struct Network {
    std::vector<LayerSpec> layers;
    std::vector<DenseParams> params;
    Rng rng{0};

    std::size_t input_dim() const {
        for (const auto& l : layers)
            if (l.kind == LayerKind::Dense) return l.in_dim;
        return 0;
    }
    std::size_t output_dim() const {
        std::size_t d = input_dim();
        for (const auto& l : layers)
            if (l.kind == LayerKind::Dense) d = l.out_dim;
        return d;
    }
};

struct ForwardTrace {
    Mat input;
    std::vector<Mat> outputs; // post-layer activations, one per layer
    std::vector<Mat> masks;   // dropout: scaled keep mask; empty otherwise
    Mode mode = Mode::Eval;
};

struct GradientSet {
    std::vector<DenseParams> dense; // dW / db per dense layer
    Mat input;                      // gradient w.r.t. the network input
};

/// Glorot-style init: dense weights uniform in +/- sqrt(6/(in+out)),
/// biases zero. The spec list must form a dimension-consistent chain.
inline Network init_network(const std::vector<LayerSpec>& spec, std::uint64_t seed) {
    if (spec.empty()) throw InconsistentDims("empty layer spec");
    bool has_dense = false;
    std::size_t dim = 0;
    for (const auto& l : spec) {
        switch (l.kind) {
        case LayerKind::Dense:
            if (l.in_dim == 0 || l.out_dim == 0)
                throw InconsistentDims("dense dimensions must be positive");
            if (has_dense && l.in_dim != dim)
                throw InconsistentDims("dense in_dim " + std::to_string(l.in_dim) +
                                       " does not match previous width " + std::to_string(dim));
            dim = l.out_dim;
            has_dense = true;
            break;
        case LayerKind::Dropout:
            if (l.rate < 0.0 || l.rate >= 1.0)
                throw InconsistentDims("dropout rate must lie in [0,1)");
            break;
        default:
            break;
        }
    }
    if (!has_dense) throw InconsistentDims("network needs at least one dense layer");

    Network net;
    net.layers = spec;
    net.rng = Rng(seed);
    for (const auto& l : spec) {
        if (l.kind != LayerKind::Dense) continue;
        DenseParams p;
        p.w = Mat(l.out_dim, l.in_dim);
        p.b.assign(l.out_dim, 0.0);
        const double scale = std::sqrt(6.0 / double(l.in_dim + l.out_dim));
        for (double& v : p.w.a) v = net.rng.next_symmetric(scale);
        net.params.push_back(std::move(p));
    }
    return net;
}

namespace detail {

// Row-tiled accumulating matrix products. Tiling keeps the streamed
// operand in cache across a tile of output rows; the per-element
// summation order is unchanged, so results are bit-identical to the
// naive loops.
constexpr std::size_t kRowTile = 64;

inline void axpy_row(double* __restrict__ c, const double* __restrict__ b, double a,
                     std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] += a * b[i];
}

/// c (MxN) += a (MxK) * b (KxN)
inline void gemm_accum(Mat& c, const Mat& a, const Mat& b) {
    for (std::size_t m0 = 0; m0 < c.rows; m0 += kRowTile) {
        const std::size_t m1 = std::min(m0 + kRowTile, c.rows);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double* bk = b.row(k);
            for (std::size_t m = m0; m < m1; ++m)
                axpy_row(c.row(m), bk, a(m, k), c.cols);
        }
    }
}

/// c (MxN) += a^T (MxK) * b (KxN), with a stored row-major as KxM
inline void gemm_accum_ta(Mat& c, const Mat& a, const Mat& b) {
    for (std::size_t m0 = 0; m0 < c.rows; m0 += kRowTile) {
        const std::size_t m1 = std::min(m0 + kRowTile, c.rows);
        for (std::size_t k = 0; k < a.rows; ++k) {
            const double* ak = a.row(k);
            const double* bk = b.row(k);
            for (std::size_t m = m0; m < m1; ++m)
                axpy_row(c.row(m), bk, ak[m], c.cols);
        }
    }
}

inline std::pair<Mat, ForwardTrace> run_forward(const Network& net, const Mat& x, Mode mode,
                                                Rng* rng) {
    if (x.cols != net.input_dim())
        throw LengthMismatch("input width " + std::to_string(x.cols) + " != network input dim " +
                             std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.input = x;
    trace.mode = mode;
    trace.outputs.reserve(net.layers.size());
    trace.masks.resize(net.layers.size());

    Mat cur = x;
    std::size_t dense_idx = 0;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const LayerSpec& l = net.layers[k];
        switch (l.kind) {
        case LayerKind::Dense: {
            const DenseParams& p = net.params[dense_idx++];
            // Transposed weight copy turns the per-output dot products
            // into stride-1 accumulations over the output row.
            Mat wt(l.in_dim, l.out_dim);
            for (std::size_t o = 0; o < l.out_dim; ++o)
                for (std::size_t i = 0; i < l.in_dim; ++i) wt(i, o) = p.w(o, i);
            Mat out(cur.rows, l.out_dim);
            for (std::size_t b = 0; b < cur.rows; ++b)
                std::copy(p.b.begin(), p.b.end(), out.row(b));
            gemm_accum(out, cur, wt);
            cur = std::move(out);
            break;
        }
        case LayerKind::Relu:
            for (double& v : cur.a) v = v > 0.0 ? v : 0.0;
            break;
        case LayerKind::Tanh:
            for (double& v : cur.a) v = std::tanh(v);
            break;
        case LayerKind::Dropout:
            if (mode == Mode::Train) {
                const double keep = 1.0 - l.rate;
                Mat mask(cur.rows, cur.cols);
                for (std::size_t i = 0; i < cur.size(); ++i)
                    mask.a[i] = rng->next_double() < l.rate ? 0.0 : 1.0 / keep;
                for (std::size_t i = 0; i < cur.size(); ++i) cur.a[i] *= mask.a[i];
                trace.masks[k] = std::move(mask);
            }
            break;
        }
        trace.outputs.push_back(cur);
    }
    return {std::move(cur), std::move(trace)};
}

} // namespace detail

/// Batched forward pass: x is B x in_dim. Train-mode dropout zeroes units
/// with probability `rate` and scales survivors by 1/(1-rate) (inverted
/// dropout); eval mode is the identity and draws nothing from the rng.
inline std::pair<Mat, ForwardTrace> forward(Network& net, const Mat& x, Mode mode) {
    return detail::run_forward(net, x, mode, &net.rng);
}

/// Single-sample convenience overload.
inline std::pair<std::vector<double>, ForwardTrace> forward(Network& net,
                                                            const std::vector<double>& x,
                                                            Mode mode) {
    Mat xm(1, x.size());
    xm.a = x;
    auto [y, trace] = forward(net, xm, mode);
    return {std::move(y.a), std::move(trace)};
}

/// Eval-mode forward on a frozen network: pure in (params, x), draws
/// nothing from the rng, safe to call concurrently.
inline Mat eval_forward(const Network& net, const Mat& x) {
    return detail::run_forward(net, x, Mode::Eval, nullptr).first;
}

inline std::vector<double> eval_forward(const Network& net, const std::vector<double>& x) {
    Mat xm(1, x.size());
    xm.a = x;
    return eval_forward(net, xm).a;
}

/// Mean-over-outputs squared error and its gradient w.r.t. pred.
inline std::pair<double, std::vector<double>> mse_loss(const std::vector<double>& pred,
                                                       const std::vector<double>& target) {
    if (pred.empty()) throw EmptyVector("mse_loss of empty vectors");
    if (pred.size() != target.size())
        throw LengthMismatch("pred length " + std::to_string(pred.size()) + " != target length " +
                             std::to_string(target.size()));
    const double inv_n = 1.0 / double(pred.size());
    double value = 0.0;
    std::vector<double> grad(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        value += d * d * inv_n;
        grad[i] = 2.0 * d * inv_n;
    }
    return {value, std::move(grad)};
}

/// Exact reverse-mode gradients for a forward trace. ReLU passes zero
/// gradient at exactly zero pre-activation; dropout reuses the forward
/// mask and scaling.
inline GradientSet backward(const Network& net, const ForwardTrace& trace, const Mat& grad_out) {
    if (trace.outputs.size() != net.layers.size())
        throw TraceMismatch("trace has " + std::to_string(trace.outputs.size()) +
                            " layers, network has " + std::to_string(net.layers.size()));
    if (!grad_out.same_shape(trace.outputs.back()))
        throw TraceMismatch("grad_out shape does not match the traced output");

    GradientSet g;
    g.dense.resize(net.params.size());
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        g.dense[i].w = Mat(net.params[i].w.rows, net.params[i].w.cols);
        g.dense[i].b.assign(net.params[i].b.size(), 0.0);
    }

    Mat grad = grad_out;
    std::size_t dense_idx = net.params.size();
    for (std::size_t k = net.layers.size(); k-- > 0;) {
        const LayerSpec& l = net.layers[k];
        const Mat& layer_in = k == 0 ? trace.input : trace.outputs[k - 1];
        switch (l.kind) {
        case LayerKind::Dense: {
            --dense_idx;
            const DenseParams& p = net.params[dense_idx];
            DenseParams& gp = g.dense[dense_idx];
            detail::gemm_accum_ta(gp.w, grad, layer_in); // dW += dY^T * X
            for (std::size_t b = 0; b < grad.rows; ++b) {
                const double* gy = grad.row(b);
                for (std::size_t o = 0; o < l.out_dim; ++o) gp.b[o] += gy[o];
            }
            Mat gin(grad.rows, l.in_dim);
            detail::gemm_accum(gin, grad, p.w); // dX += dY * W
            grad = std::move(gin);
            break;
        }
        case LayerKind::Relu:
            for (std::size_t i = 0; i < grad.size(); ++i)
                if (layer_in.a[i] <= 0.0) grad.a[i] = 0.0;
            break;
        case LayerKind::Tanh: {
            const Mat& y = trace.outputs[k];
            for (std::size_t i = 0; i < grad.size(); ++i) grad.a[i] *= 1.0 - y.a[i] * y.a[i];
            break;
        }
        case LayerKind::Dropout:
            if (trace.mode == Mode::Train) {
                const Mat& mask = trace.masks[k];
                if (!mask.same_shape(grad)) throw TraceMismatch("dropout mask shape mismatch");
                for (std::size_t i = 0; i < grad.size(); ++i) grad.a[i] *= mask.a[i];
            }
            break;
        }
    }
    g.input = std::move(grad);
    return g;
}

inline GradientSet backward(const Network& net, const ForwardTrace& trace,
                            const std::vector<double>& grad_out) {
    Mat g(1, grad_out.size());
    g.a = grad_out;
    return backward(net, trace, g);
}

// --- RMSProp -----------------------------------------------------------

struct RmsPropState {
    std::vector<DenseParams> accum; // running mean of squared gradients
    double lr = 3e-4;
    double decay = 0.99;
    double eps = 1e-8;
};

inline RmsPropState make_rmsprop_state(const std::vector<DenseParams>& params, double lr = 3e-4,
                                       double decay = 0.99, double eps = 1e-8) {
    if (lr <= 0.0) throw InvalidArgs("learning rate must be positive");
    if (decay <= 0.0 || decay >= 1.0) throw InvalidArgs("decay must lie in (0,1)");
    RmsPropState s;
    s.lr = lr;
    s.decay = decay;
    s.eps = eps;
    s.accum.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.accum[i].w = Mat(params[i].w.rows, params[i].w.cols);
        s.accum[i].b.assign(params[i].b.size(), 0.0);
    }
    return s;
}

/// accum <- decay*accum + (1-decay)*g^2;  param <- param - lr*g/(sqrt(accum)+eps).
inline void rmsprop_step(std::vector<DenseParams>& params, const std::vector<DenseParams>& grads,
                         RmsPropState& state) {
    if (params.size() != grads.size() || params.size() != state.accum.size())
        throw ShapeMismatch("parameter/gradient/state layer counts differ");
    auto update = [&](double& p, double g, double& acc) {
        acc = state.decay * acc + (1.0 - state.decay) * g * g;
        p -= state.lr * g / (std::sqrt(acc) + state.eps);
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].w.same_shape(grads[i].w) || params[i].b.size() != grads[i].b.size())
            throw ShapeMismatch("layer " + std::to_string(i) + " shapes differ");
        for (std::size_t j = 0; j < params[i].w.size(); ++j)
            update(params[i].w.a[j], grads[i].w.a[j], state.accum[i].w.a[j]);
        for (std::size_t j = 0; j < params[i].b.size(); ++j)
            update(params[i].b[j], grads[i].b[j], state.accum[i].b[j]);
    }
}

// --- checkpoint format ---------------------------------------------------
//
// Binary, little-endian: magic "ECNN", u32 version=1, u32 dense layer
// count, then per dense layer u32 in_dim, u32 out_dim, row-major f64
// weights, f64 biases.

namespace detail {

inline void put_u32(std::ostream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw ParseError(path + ": truncated at byte " + std::to_string(f.gcount()));
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

inline void put_f64(std::ostream& f, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& f, const std::string& path) {
    unsigned char b[8];
    if (!f.read(reinterpret_cast<char*>(b), 8)) throw ParseError(path + ": truncated f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace detail

inline void save_checkpoint(const Network& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for writing");
    f.write("ECNN", 4);
    detail::put_u32(f, 1);
    detail::put_u32(f, static_cast<std::uint32_t>(net.params.size()));
    for (const auto& p : net.params) {
        detail::put_u32(f, static_cast<std::uint32_t>(p.w.cols));
        detail::put_u32(f, static_cast<std::uint32_t>(p.w.rows));
        for (double v : p.w.a) detail::put_f64(f, v);
        for (double v : p.b) detail::put_f64(f, v);
    }
    if (!f) throw IoFailure("write to " + path + " failed");
}

/// Loads parameters into a structurally matching network.
inline void load_checkpoint(Network& net, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for reading");
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, "ECNN", 4) != 0)
        throw ParseError(path + ": bad magic (expected ECNN)");
    if (detail::get_u32(f, path) != 1) throw ParseError(path + ": unsupported version");
    const std::uint32_t layers = detail::get_u32(f, path);
    if (layers != net.params.size())
        throw ShapeMismatch(path + ": checkpoint has " + std::to_string(layers) +
                            " dense layers, network has " + std::to_string(net.params.size()));
    for (auto& p : net.params) {
        const std::uint32_t in = detail::get_u32(f, path);
        const std::uint32_t out = detail::get_u32(f, path);
        if (in != p.w.cols || out != p.w.rows)
            throw ShapeMismatch(path + ": dense layer shape " + std::to_string(out) + "x" +
                                std::to_string(in) + " does not match network");
        for (double& v : p.w.a) v = detail::get_f64(f, path);
        for (double& v : p.b) v = detail::get_f64(f, path);
    }
}

} // namespace ecoc::nn

#endif
