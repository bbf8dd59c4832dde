#ifndef ECOC_MODELS_HPP
#define ECOC_MODELS_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ecoc/codec.hpp"
#include "ecoc/errors.hpp"
#include "ecoc/nncore.hpp"
#include "ecoc/rng.hpp"

namespace ecoc {

// The three randECOC designs. Architectures follow the shallow-network
// setup: hidden widths (500, 50, 10) with ReLU + dropout for independent
// classifiers, a shared (500, 50) trunk plus per-dichotomy heads for the
// multi-task variants, tanh on every scalar bit output.

constexpr std::size_t kHidden1 = 500;
constexpr std::size_t kHidden2 = 50;
constexpr std::size_t kHeadHidden = 10;

/// One shallow network per code column, trained independently.
struct IndependentEnsemble {
    CodeMatrix matrix;
    std::size_t feature_dim = 0;
    std::vector<nn::Network> classifiers; // length L, each D -> 1
};

/// Shared trunk (D -> 500 -> 50) with one small head per code column.
struct MtlNetwork {
    CodeMatrix matrix;
    std::size_t feature_dim = 0;
    nn::Network trunk;
    std::vector<nn::Network> heads; // length L, each 50 -> 1
};

/// MTL plus a frozen K-output linear map whose weights are the code
/// matrix: class scores o_i = h . w_i are produced inside the network.
struct MtlEmbeddingNetwork {
    MtlNetwork base;
    Mat embedding_weights; // K x L copy of the matrix entries, never trained
};

using EnsembleModel = std::variant<IndependentEnsemble, MtlNetwork, MtlEmbeddingNetwork>;

enum class ModelKind { Independent, Mtl, MtlEmbedding };

inline const char* to_string(ModelKind k) {
    switch (k) {
    case ModelKind::Independent: return "independent";
    case ModelKind::Mtl: return "mtl";
    case ModelKind::MtlEmbedding: return "mtl-embedding";
    }
    return "?";
}

inline ModelKind kind_of(const EnsembleModel& m) {
    return static_cast<ModelKind>(m.index());
}

namespace detail {

inline void require_valid(const CodeMatrix& m) {
    auto v = validate(m);
    if (!v.empty()) throw InvalidMatrix(v.front().message);
}

inline std::vector<nn::LayerSpec> independent_spec(std::size_t d, double dropout) {
    return {nn::LayerSpec::dense(d, kHidden1),        nn::LayerSpec::relu(),
            nn::LayerSpec::dropout(dropout),          nn::LayerSpec::dense(kHidden1, kHidden2),
            nn::LayerSpec::relu(),                    nn::LayerSpec::dropout(dropout),
            nn::LayerSpec::dense(kHidden2, kHeadHidden), nn::LayerSpec::relu(),
            nn::LayerSpec::dropout(dropout),          nn::LayerSpec::dense(kHeadHidden, 1),
            nn::LayerSpec::tanh()};
}

inline std::vector<nn::LayerSpec> trunk_spec(std::size_t d, double dropout) {
    return {nn::LayerSpec::dense(d, kHidden1), nn::LayerSpec::relu(),
            nn::LayerSpec::dropout(dropout),   nn::LayerSpec::dense(kHidden1, kHidden2),
            nn::LayerSpec::relu(),             nn::LayerSpec::dropout(dropout)};
}

inline std::vector<nn::LayerSpec> head_spec(double dropout) {
    return {nn::LayerSpec::dropout(dropout), nn::LayerSpec::dense(kHidden2, kHeadHidden),
            nn::LayerSpec::relu(),           nn::LayerSpec::dense(kHeadHidden, 1),
            nn::LayerSpec::tanh()};
}

} // namespace detail

inline IndependentEnsemble build_independent(std::size_t feature_dim, const CodeMatrix& m,
                                             std::uint64_t seed, double dropout = 0.5) {
    if (feature_dim < 1) throw InvalidArgs("feature_dim must be positive");
    detail::require_valid(m);
    IndependentEnsemble e{m, feature_dim, {}};
    e.classifiers.reserve(m.length());
    for (std::size_t j = 0; j < m.length(); ++j)
        e.classifiers.push_back(
            nn::init_network(detail::independent_spec(feature_dim, dropout), derive_seed(seed, j)));
    return e;
}

inline MtlNetwork build_mtl(std::size_t feature_dim, const CodeMatrix& m, std::uint64_t seed,
                            double dropout = 0.5) {
    if (feature_dim < 1) throw InvalidArgs("feature_dim must be positive");
    detail::require_valid(m);
    MtlNetwork net{m, feature_dim,
                   nn::init_network(detail::trunk_spec(feature_dim, dropout),
                                    derive_seed(seed, m.length())),
                   {}};
    net.heads.reserve(m.length());
    for (std::size_t j = 0; j < m.length(); ++j)
        net.heads.push_back(nn::init_network(detail::head_spec(dropout), derive_seed(seed, j)));
    return net;
}

inline MtlEmbeddingNetwork build_embedding(std::size_t feature_dim, const CodeMatrix& m,
                                           std::uint64_t seed, double dropout = 0.5) {
    MtlEmbeddingNetwork net{build_mtl(feature_dim, m, seed, dropout),
                            Mat(m.classes(), m.length())};
    for (std::size_t i = 0; i < m.classes(); ++i)
        for (std::size_t j = 0; j < m.length(); ++j)
            net.embedding_weights(i, j) = double(m.entry(i, j));
    return net;
}

// --- prediction ----------------------------------------------------------

inline const CodeMatrix& matrix_of(const EnsembleModel& model) {
    return std::visit([](const auto& m) -> const CodeMatrix& {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, MtlEmbeddingNetwork>)
            return m.base.matrix;
        else
            return m.matrix;
    }, model);
}

inline std::size_t feature_dim_of(const EnsembleModel& model) {
    return std::visit([](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, MtlEmbeddingNetwork>)
            return m.base.feature_dim;
        else
            return m.feature_dim;
    }, model);
}

/// Base classifier outputs for a batch (B x L), eval mode.
inline Mat predict_bits(const IndependentEnsemble& e, const Mat& x) {
    Mat h(x.rows, e.matrix.length());
    for (std::size_t j = 0; j < e.classifiers.size(); ++j) {
        Mat out = nn::eval_forward(e.classifiers[j], x);
        for (std::size_t b = 0; b < x.rows; ++b) h(b, j) = out(b, 0);
    }
    return h;
}

inline Mat predict_bits(const MtlNetwork& net, const Mat& x) {
    Mat trunk_out = nn::eval_forward(net.trunk, x);
    Mat h(x.rows, net.matrix.length());
    for (std::size_t j = 0; j < net.heads.size(); ++j) {
        Mat out = nn::eval_forward(net.heads[j], trunk_out);
        for (std::size_t b = 0; b < x.rows; ++b) h(b, j) = out(b, 0);
    }
    return h;
}

inline Mat predict_bits(const MtlEmbeddingNetwork& net, const Mat& x) {
    return predict_bits(net.base, x);
}

inline Mat predict_bits(const EnsembleModel& model, const Mat& x) {
    return std::visit([&](const auto& m) { return predict_bits(m, x); }, model);
}

inline std::vector<double> predict_bits(const EnsembleModel& model, const std::vector<double>& x) {
    if (x.size() != feature_dim_of(model))
        throw LengthMismatch("input length " + std::to_string(x.size()) + " != feature dim " +
                             std::to_string(feature_dim_of(model)));
    Mat xm(1, x.size());
    xm.a = x;
    return predict_bits(model, xm).a;
}

/// Class scores of the embedding layer: o = W_embed . h, with W_embed
/// frozen to the code matrix entries.
inline std::vector<double> embedding_scores(const MtlEmbeddingNetwork& net,
                                            const std::vector<double>& h) {
    if (h.size() != net.embedding_weights.cols)
        throw LengthMismatch("bit vector length mismatch");
    std::vector<double> o(net.embedding_weights.rows, 0.0);
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double* w = net.embedding_weights.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < h.size(); ++j) s += w[j] * h[j];
        o[i] = s;
    }
    return o;
}

/// Final class decision. Independent/MTL decode h against the matrix with
/// the chosen metric; the embedding variant takes the lowest-index argmax
/// of its K class scores.
inline std::size_t predict_class(const EnsembleModel& model, const std::vector<double>& x,
                                 Metric metric) {
    const std::vector<double> h = predict_bits(model, x);
    if (const auto* emb = std::get_if<MtlEmbeddingNetwork>(&model)) {
        const std::vector<double> o = embedding_scores(*emb, h);
        std::size_t best = 0;
        for (std::size_t i = 1; i < o.size(); ++i)
            if (o[i] > o[best]) best = i;
        return best;
    }
    return decode(h, matrix_of(model), metric).predicted_class;
}

// --- combined loss of the embedding design --------------------------------

struct LossBreakdown {
    double total = 0.0;
    double score_term = 0.0; // (L_eff - o_c)^2
    double bit_term = 0.0;   // sum over nonzero positions of (h_l - M(c,l))^2
};

/// Combined loss for a sample of class c: push the class score o_c toward
/// its maximum L_eff (the number of nonzero symbols in codeword c) and the
/// bit outputs toward the codeword. Positions where M(c,l) = 0 are outside
/// the dichotomy and contribute to neither term.
inline LossBreakdown embedding_loss(const std::vector<double>& h, std::size_t c,
                                    const CodeMatrix& m) {
    if (c >= m.classes())
        throw IndexOutOfRange("class " + std::to_string(c) + " >= K=" +
                              std::to_string(m.classes()));
    if (h.size() != m.length())
        throw LengthMismatch("bit vector length " + std::to_string(h.size()) +
                             " != code length " + std::to_string(m.length()));
    double o_c = 0.0, bit = 0.0;
    std::size_t l_eff = 0;
    for (std::size_t j = 0; j < m.length(); ++j) {
        const int w = m.entry(c, j);
        if (w == 0) continue;
        ++l_eff;
        o_c += h[j] * w;
        const double d = h[j] - w;
        bit += d * d;
    }
    LossBreakdown out;
    const double gap = double(l_eff) - o_c;
    out.score_term = gap * gap;
    out.bit_term = bit;
    out.total = out.score_term + out.bit_term;
    return out;
}

/// d total / d h_j = -2 (L_eff - o_c) M(c,j) + 2 (h_j - M(c,j)) at nonzero
/// positions, 0 where M(c,j) = 0. This is the analytic chain-rule result
/// (note the leading minus); finite differences of embedding_loss agree.
inline std::vector<double> embedding_loss_grad(const std::vector<double>& h, std::size_t c,
                                               const CodeMatrix& m) {
    if (c >= m.classes())
        throw IndexOutOfRange("class " + std::to_string(c) + " >= K=" +
                              std::to_string(m.classes()));
    if (h.size() != m.length())
        throw LengthMismatch("bit vector length " + std::to_string(h.size()) +
                             " != code length " + std::to_string(m.length()));
    double o_c = 0.0;
    std::size_t l_eff = 0;
    for (std::size_t j = 0; j < m.length(); ++j) {
        const int w = m.entry(c, j);
        if (w == 0) continue;
        ++l_eff;
        o_c += h[j] * w;
    }
    const double gap = double(l_eff) - o_c;
    std::vector<double> grad(m.length(), 0.0);
    for (std::size_t j = 0; j < m.length(); ++j) {
        const int w = m.entry(c, j);
        if (w == 0) continue;
        grad[j] = -2.0 * gap * w + 2.0 * (h[j] - w);
    }
    return grad;
}

// --- ensemble checkpoints ---------------------------------------------------
//
// A checkpoint is a directory holding the code matrix in its text format,
// a plain-text manifest, and one ECNN parameter file per network.

inline void save_ensemble(const EnsembleModel& model, const std::string& dir,
                          const std::map<std::string, std::string>& extra_manifest = {}) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoFailure("cannot create directory " + dir + ": " + ec.message());

    const CodeMatrix& m = matrix_of(model);
    save_matrix(m, dir + "/matrix.txt");

    std::ofstream mf(dir + "/manifest.txt", std::ios::binary);
    if (!mf) throw IoFailure("cannot write manifest in " + dir);
    mf << "kind=" << to_string(kind_of(model)) << '\n';
    mf << "feature_dim=" << feature_dim_of(model) << '\n';
    mf << "classes=" << m.classes() << '\n';
    mf << "length=" << m.length() << '\n';
    for (const auto& [k, v] : extra_manifest) mf << k << '=' << v << '\n';
    if (!mf) throw IoFailure("manifest write failed in " + dir);

    auto pad3 = [](std::size_t j) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "%03zu", j);
        return std::string(buf);
    };

    if (const auto* e = std::get_if<IndependentEnsemble>(&model)) {
        for (std::size_t j = 0; j < e->classifiers.size(); ++j)
            nn::save_checkpoint(e->classifiers[j], dir + "/net_" + pad3(j) + ".ecnn");
    } else {
        const MtlNetwork& base = std::holds_alternative<MtlNetwork>(model)
                                     ? std::get<MtlNetwork>(model)
                                     : std::get<MtlEmbeddingNetwork>(model).base;
        nn::save_checkpoint(base.trunk, dir + "/trunk.ecnn");
        for (std::size_t j = 0; j < base.heads.size(); ++j)
            nn::save_checkpoint(base.heads[j], dir + "/head_" + pad3(j) + ".ecnn");
    }
}

inline std::map<std::string, std::string> load_manifest(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.txt");
    if (!mf) throw IoFailure("cannot read manifest in " + dir);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(mf, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(dir + "/manifest.txt: line " + std::to_string(line_no) +
                             ": expected key=value");
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

inline EnsembleModel load_ensemble(const std::string& dir) {
    auto manifest = load_manifest(dir);
    auto need = [&](const char* key) -> const std::string& {
        auto it = manifest.find(key);
        if (it == manifest.end())
            throw ParseError(dir + "/manifest.txt: missing key " + std::string(key));
        return it->second;
    };
    const std::string kind = need("kind");
    const std::size_t d = std::stoull(need("feature_dim"));
    const double dropout = manifest.count("dropout") ? std::stod(manifest.at("dropout")) : 0.5;
    CodeMatrix m = load_matrix(dir + "/matrix.txt");

    auto pad3 = [](std::size_t j) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "%03zu", j);
        return std::string(buf);
    };

    if (kind == "independent") {
        IndependentEnsemble e = build_independent(d, m, 0, dropout);
        for (std::size_t j = 0; j < e.classifiers.size(); ++j)
            nn::load_checkpoint(e.classifiers[j], dir + "/net_" + pad3(j) + ".ecnn");
        return e;
    }
    if (kind == "mtl" || kind == "mtl-embedding") {
        MtlNetwork base = build_mtl(d, m, 0, dropout);
        nn::load_checkpoint(base.trunk, dir + "/trunk.ecnn");
        for (std::size_t j = 0; j < base.heads.size(); ++j)
            nn::load_checkpoint(base.heads[j], dir + "/head_" + pad3(j) + ".ecnn");
        if (kind == "mtl") return base;
        MtlEmbeddingNetwork net{std::move(base), Mat(m.classes(), m.length())};
        for (std::size_t i = 0; i < m.classes(); ++i)
            for (std::size_t j = 0; j < m.length(); ++j)
                net.embedding_weights(i, j) = double(m.entry(i, j));
        return net;
    }
    throw ParseError(dir + "/manifest.txt: unknown kind \"" + kind + "\"");
}

} // namespace ecoc

#endif
