#ifndef ECOC_TRAINER_HPP
#define ECOC_TRAINER_HPP

#include <atomic>
#include <chrono>
#include <cstdint>
#include <thread>
#include <vector>

#include "ecoc/codec.hpp"
#include "ecoc/data.hpp"
#include "ecoc/errors.hpp"
#include "ecoc/models.hpp"
#include "ecoc/nncore.hpp"

namespace ecoc {

struct HyperParams {
    double lr = 3e-4;
    double decay = 0.99;
    std::size_t batch_size = 512;
    std::size_t epochs = 30;
    double dropout = 0.5;
    std::uint64_t seed = 0;
};

struct Metrics {
    double accuracy = 0.0;
    std::size_t n_test = 0;
    double train_seconds = 0.0;
    double test_seconds = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<std::size_t> per_class_counts;
};

namespace detail {

inline void check_hp(const HyperParams& hp) {
    if (hp.lr <= 0.0) throw InvalidArgs("lr must be positive");
    if (hp.decay <= 0.0 || hp.decay >= 1.0) throw InvalidArgs("decay must lie in (0,1)");
    if (hp.batch_size < 1) throw InvalidArgs("batch_size must be at least 1");
    if (hp.dropout < 0.0 || hp.dropout >= 1.0) throw InvalidArgs("dropout must lie in [0,1)");
}

inline void check_training_inputs(const FeatureTable& train, const FeatureTable& val,
                                  const CodeMatrix& m, const HyperParams& hp) {
    check_hp(hp);
    if (train.n == 0 || train.d == 0) throw DimensionMismatch("empty training table");
    if (train.k != m.classes())
        throw DimensionMismatch("table has K=" + std::to_string(train.k) + ", matrix has K=" +
                                std::to_string(m.classes()));
    if (val.n > 0 && val.d != train.d)
        throw DimensionMismatch("val feature dim " + std::to_string(val.d) +
                                " != train feature dim " + std::to_string(train.d));
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

/// Trains one shallow classifier per code column on its relabeled
/// dichotomy: targets come from the matrix column, samples whose class has
/// a zero symbol are excluded. Classifiers share the per-epoch batch
/// stream but are otherwise fully independent, so they may fan out across
/// `workers` threads without changing the result.
inline IndependentEnsemble train_independent(const FeatureTable& train, const FeatureTable& val,
                                             const CodeMatrix& m, const HyperParams& hp,
                                             std::size_t workers = 1) {
    detail::check_training_inputs(train, val, m, hp);
    detail::require_valid(m);
    const std::size_t l = m.length();

    IndependentEnsemble ensemble{m, train.d, std::vector<nn::Network>(l)};

    auto train_one = [&](std::size_t j) {
        nn::Network net = nn::init_network(detail::independent_spec(train.d, hp.dropout),
                                           derive_seed(hp.seed, j));
        auto state = nn::make_rmsprop_state(net.params, hp.lr, hp.decay);
        const auto targets = column_targets(m, j, train.labels);
        for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
            for (const Batch& batch : batches(train, hp.batch_size, hp.seed, epoch)) {
                std::vector<std::size_t> rows;
                rows.reserve(batch.features.rows);
                for (std::size_t b = 0; b < batch.features.rows; ++b)
                    if (targets[batch.indices[b]] != 0) rows.push_back(b);
                if (rows.empty()) continue;

                Mat xb(rows.size(), train.d);
                std::vector<double> target_vec(rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    std::copy(batch.features.row(rows[r]),
                              batch.features.row(rows[r]) + train.d, xb.row(r));
                    target_vec[r] = double(targets[batch.indices[rows[r]]]);
                }
                auto [y, trace] = nn::forward(net, xb, nn::Mode::Train);
                auto [value, grad] = nn::mse_loss(y.a, target_vec);
                (void)value;
                Mat gy(rows.size(), 1);
                gy.a = grad;
                nn::GradientSet g = nn::backward(net, trace, gy);
                nn::rmsprop_step(net.params, g.dense, state);
            }
        }
        ensemble.classifiers[j] = std::move(net);
    };

    if (workers <= 1 || l == 1) {
        for (std::size_t j = 0; j < l; ++j) train_one(j);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        const std::size_t nthreads = std::min(workers, l);
        for (std::size_t w = 0; w < nthreads; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t j = next.fetch_add(1);
                    if (j >= l) return;
                    train_one(j);
                }
            });
        for (auto& t : pool) t.join();
    }
    return ensemble;
}

namespace detail {

// Shared loop of the two multi-task designs. fill_dh writes the gradient
// of the per-batch loss w.r.t. the head outputs H (B x L).
template <typename FillDh>
inline MtlNetwork train_multitask(const FeatureTable& train, const FeatureTable& val,
                                  const CodeMatrix& m, const HyperParams& hp, FillDh&& fill_dh) {
    check_training_inputs(train, val, m, hp);
    require_valid(m);
    const std::size_t l = m.length();

    MtlNetwork net = build_mtl(train.d, m, hp.seed, hp.dropout);
    auto trunk_state = nn::make_rmsprop_state(net.trunk.params, hp.lr, hp.decay);
    std::vector<nn::RmsPropState> head_states;
    head_states.reserve(l);
    for (const auto& head : net.heads)
        head_states.push_back(nn::make_rmsprop_state(head.params, hp.lr, hp.decay));

    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        for (const Batch& batch : batches(train, hp.batch_size, hp.seed, epoch)) {
            const std::size_t b = batch.features.rows;
            auto [trunk_out, trunk_trace] = nn::forward(net.trunk, batch.features, nn::Mode::Train);

            Mat h(b, l);
            std::vector<nn::ForwardTrace> head_traces;
            head_traces.reserve(l);
            for (std::size_t j = 0; j < l; ++j) {
                auto [hj, tj] = nn::forward(net.heads[j], trunk_out, nn::Mode::Train);
                for (std::size_t r = 0; r < b; ++r) h(r, j) = hj(r, 0);
                head_traces.push_back(std::move(tj));
            }

            Mat dh(b, l);
            fill_dh(h, batch, dh);

            Mat d_trunk_out(b, trunk_out.cols);
            std::vector<std::vector<nn::DenseParams>> head_grads(l);
            for (std::size_t j = 0; j < l; ++j) {
                Mat dyj(b, 1);
                for (std::size_t r = 0; r < b; ++r) dyj(r, 0) = dh(r, j);
                nn::GradientSet g = nn::backward(net.heads[j], head_traces[j], dyj);
                for (std::size_t i = 0; i < d_trunk_out.size(); ++i)
                    d_trunk_out.a[i] += g.input.a[i];
                head_grads[j] = std::move(g.dense);
            }
            nn::GradientSet gt = nn::backward(net.trunk, trunk_trace, d_trunk_out);

            nn::rmsprop_step(net.trunk.params, gt.dense, trunk_state);
            for (std::size_t j = 0; j < l; ++j)
                nn::rmsprop_step(net.heads[j].params, head_grads[j], head_states[j]);
        }
    }
    return net;
}

} // namespace detail

/// Joint training of trunk and heads: per-head squared error against the
/// matrix targets, heads whose symbol is zero for a sample are masked,
/// loss averaged over the batch and all L heads.
inline MtlNetwork train_mtl(const FeatureTable& train, const FeatureTable& val,
                            const CodeMatrix& m, const HyperParams& hp) {
    const std::size_t l = m.length();
    return detail::train_multitask(
        train, val, m, hp, [&](const Mat& h, const Batch& batch, Mat& dh) {
            const double scale = 2.0 / (double(h.rows) * double(l));
            for (std::size_t r = 0; r < h.rows; ++r)
                for (std::size_t j = 0; j < l; ++j) {
                    const int w = m.entry(batch.labels[r], j);
                    dh(r, j) = w == 0 ? 0.0 : scale * (h(r, j) - double(w));
                }
        });
}

/// Same loop as train_mtl, but the per-sample loss is the combined
/// score-plus-bit objective back-propagated through the frozen embedding:
/// the embedding weights are the code matrix and are never updated.
inline MtlEmbeddingNetwork train_embedding(const FeatureTable& train, const FeatureTable& val,
                                           const CodeMatrix& m, const HyperParams& hp) {
    MtlNetwork base = detail::train_multitask(
        train, val, m, hp, [&](const Mat& h, const Batch& batch, Mat& dh) {
            const double inv_b = 1.0 / double(h.rows);
            std::vector<double> hr(h.cols);
            for (std::size_t r = 0; r < h.rows; ++r) {
                hr.assign(h.row(r), h.row(r) + h.cols);
                const auto g = embedding_loss_grad(hr, batch.labels[r], m);
                for (std::size_t j = 0; j < h.cols; ++j) dh(r, j) = g[j] * inv_b;
            }
        });
    MtlEmbeddingNetwork net{std::move(base), Mat(m.classes(), m.length())};
    for (std::size_t i = 0; i < m.classes(); ++i)
        for (std::size_t j = 0; j < m.length(); ++j)
            net.embedding_weights(i, j) = double(m.entry(i, j));
    return net;
}

// --- evaluation -------------------------------------------------------------

/// Batch class predictions, eval mode.
inline std::vector<std::uint32_t> predict_classes(const EnsembleModel& model, const Mat& x,
                                                  Metric metric) {
    const CodeMatrix& m = matrix_of(model);
    Mat h = predict_bits(model, x);
    std::vector<std::uint32_t> out(x.rows);
    std::vector<double> hr(h.cols), dist(m.classes());
    const auto* emb = std::get_if<MtlEmbeddingNetwork>(&model);
    for (std::size_t r = 0; r < x.rows; ++r) {
        hr.assign(h.row(r), h.row(r) + h.cols);
        if (emb) {
            const auto o = embedding_scores(*emb, hr);
            std::size_t best = 0;
            for (std::size_t i = 1; i < o.size(); ++i)
                if (o[i] > o[best]) best = i;
            out[r] = static_cast<std::uint32_t>(best);
        } else {
            out[r] = static_cast<std::uint32_t>(
                detail::decode_into(hr.data(), hr.size(), m, metric, dist.data()));
        }
    }
    return out;
}

namespace detail {

inline Metrics score_predictions(const std::vector<std::uint32_t>& pred,
                                 const FeatureTable& test) {
    Metrics out;
    out.n_test = test.n;
    out.per_class_accuracy.assign(test.k, 0.0);
    out.per_class_counts.assign(test.k, 0);
    std::vector<std::size_t> correct(test.k, 0);
    std::size_t total_correct = 0;
    for (std::size_t i = 0; i < test.n; ++i) {
        ++out.per_class_counts[test.labels[i]];
        if (pred[i] == test.labels[i]) {
            ++correct[test.labels[i]];
            ++total_correct;
        }
    }
    for (std::size_t c = 0; c < test.k; ++c)
        out.per_class_accuracy[c] =
            out.per_class_counts[c] ? double(correct[c]) / double(out.per_class_counts[c]) : 0.0;
    out.accuracy = double(total_correct) / double(test.n);
    return out;
}

inline void check_eval_inputs(const EnsembleModel& model, const FeatureTable& test) {
    if (test.n == 0) throw DimensionMismatch("empty test table");
    if (feature_dim_of(model) != test.d)
        throw DimensionMismatch("model expects D=" + std::to_string(feature_dim_of(model)) +
                                ", table has D=" + std::to_string(test.d));
    if (matrix_of(model).classes() != test.k)
        throw DimensionMismatch("model has K=" + std::to_string(matrix_of(model).classes()) +
                                ", table has K=" + std::to_string(test.k));
}

inline Mat table_chunk(const FeatureTable& t, std::size_t start, std::size_t rows) {
    Mat x(rows, t.d);
    std::copy(t.row(start), t.row(start) + rows * t.d, x.a.begin());
    return x;
}

constexpr std::size_t kEvalChunk = 512;

} // namespace detail

inline Metrics evaluate(const EnsembleModel& model, const FeatureTable& test, Metric metric) {
    detail::check_eval_inputs(model, test);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::uint32_t> pred;
    pred.reserve(test.n);
    for (std::size_t start = 0; start < test.n; start += detail::kEvalChunk) {
        const std::size_t rows = std::min(detail::kEvalChunk, test.n - start);
        auto chunk_pred = predict_classes(model, detail::table_chunk(test, start, rows), metric);
        pred.insert(pred.end(), chunk_pred.begin(), chunk_pred.end());
    }
    Metrics out = detail::score_predictions(pred, test);
    out.test_seconds = detail::seconds_since(t0);
    return out;
}

// --- combinatory averaging ----------------------------------------------------

/// Per-class score vectors for a batch (B x K). The embedding design
/// contributes its native class scores; decode-based designs contribute
/// negated distances so that larger stays better.
inline Mat model_class_scores(const EnsembleModel& model, const Mat& x, Metric metric) {
    const CodeMatrix& m = matrix_of(model);
    Mat h = predict_bits(model, x);
    Mat scores(x.rows, m.classes());
    std::vector<double> hr(h.cols), dist(m.classes());
    const auto* emb = std::get_if<MtlEmbeddingNetwork>(&model);
    for (std::size_t r = 0; r < x.rows; ++r) {
        hr.assign(h.row(r), h.row(r) + h.cols);
        if (emb) {
            const auto o = embedding_scores(*emb, hr);
            std::copy(o.begin(), o.end(), scores.row(r));
        } else {
            detail::decode_into(hr.data(), hr.size(), m, metric, dist.data());
            for (std::size_t c = 0; c < dist.size(); ++c) scores(r, c) = -dist[c];
        }
    }
    return scores;
}

namespace detail {

inline void check_compatible(const std::vector<EnsembleModel>& models) {
    if (models.empty()) throw IncompatibleModels("no models to average");
    const CodeMatrix& m0 = matrix_of(models.front());
    for (const auto& model : models) {
        if (feature_dim_of(model) != feature_dim_of(models.front()))
            throw IncompatibleModels("feature dims differ across models");
        if (!(matrix_of(model) == m0))
            throw IncompatibleModels("models use different code matrices");
    }
}

} // namespace detail

inline std::vector<std::uint32_t> average_predictions(const std::vector<EnsembleModel>& models,
                                                      const Mat& x, Metric metric) {
    detail::check_compatible(models);
    const std::size_t k = matrix_of(models.front()).classes();
    Mat mean(x.rows, k);
    for (const auto& model : models) {
        Mat s = model_class_scores(model, x, metric);
        for (std::size_t i = 0; i < mean.size(); ++i) mean.a[i] += s.a[i];
    }
    const double inv = 1.0 / double(models.size());
    for (double& v : mean.a) v *= inv;

    std::vector<std::uint32_t> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double* row = mean.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (row[c] > row[best]) best = c;
        out[r] = static_cast<std::uint32_t>(best);
    }
    return out;
}

inline Metrics average_ensembles(const std::vector<EnsembleModel>& models,
                                 const FeatureTable& test, Metric metric) {
    detail::check_compatible(models);
    detail::check_eval_inputs(models.front(), test);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::uint32_t> pred;
    pred.reserve(test.n);
    for (std::size_t start = 0; start < test.n; start += detail::kEvalChunk) {
        const std::size_t rows = std::min(detail::kEvalChunk, test.n - start);
        auto chunk = average_predictions(models, detail::table_chunk(test, start, rows), metric);
        pred.insert(pred.end(), chunk.begin(), chunk.end());
    }
    Metrics out = detail::score_predictions(pred, test);
    out.test_seconds = detail::seconds_since(t0);
    return out;
}

} // namespace ecoc

#endif
