#ifndef ECOC_SYNTH_HPP
#define ECOC_SYNTH_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <thread>
#include <vector>

#include "ecoc/codec.hpp"
#include "ecoc/errors.hpp"
#include "ecoc/rng.hpp"

namespace ecoc {

/// Synthetic base-classifier channel: every trial picks a uniform class,
/// flips each nonzero bit of its codeword independently with probability
/// flip_prob (zeros pass through as 0), then Hamming-decodes.
struct ChannelSpec {
    CodeMatrix matrix;
    double flip_prob = 0.1;
    std::size_t trials = 100000;
    std::uint64_t seed = 0;
};

struct ChannelReport {
    double accuracy = 0.0;
    double stderr_est = 0.0; // binomial: sqrt(acc*(1-acc)/trials)
    std::vector<double> per_class_accuracy;
    std::size_t trials = 0;
};

namespace detail {

struct ChannelCounts {
    std::vector<std::uint64_t> correct, total;
};

// Trials are processed in fixed-size chunks, each driven by its own
// derived seed, so the counts are identical for any worker count.
constexpr std::size_t kChunkTrials = 1 << 14;

inline ChannelCounts run_chunk(const ChannelSpec& spec, std::size_t chunk_index,
                               std::size_t trials) {
    const CodeMatrix& m = spec.matrix;
    const std::size_t k = m.classes(), l = m.length();
    ChannelCounts counts{std::vector<std::uint64_t>(k, 0), std::vector<std::uint64_t>(k, 0)};
    Rng rng(derive_seed(spec.seed, chunk_index));
    std::vector<double> y(l);
    std::vector<double> dist(k);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t c = rng.next_below(k);
        const std::int8_t* row = m.row(c);
        for (std::size_t j = 0; j < l; ++j) {
            if (row[j] == 0) {
                y[j] = 0.0;
            } else {
                const bool flip = rng.next_double() < spec.flip_prob;
                y[j] = flip ? -double(row[j]) : double(row[j]);
            }
        }
        const std::size_t pred = decode_into(y.data(), l, m, Metric::Hamming, dist.data());
        ++counts.total[c];
        counts.correct[c] += pred == c;
    }
    return counts;
}

} // namespace detail

inline ChannelReport simulate_channel(const ChannelSpec& spec, std::size_t workers = 1) {
    auto violations = validate(spec.matrix);
    if (!violations.empty()) throw InvalidMatrix(violations.front().message);
    if (spec.flip_prob < 0.0 || spec.flip_prob >= 0.5)
        throw InvalidArgs("flip_prob must lie in [0, 0.5)");
    if (spec.trials < 1) throw InvalidArgs("need at least one trial");

    const std::size_t chunks =
        (spec.trials + detail::kChunkTrials - 1) / detail::kChunkTrials;
    std::vector<detail::ChannelCounts> partial(chunks);
    auto run = [&](std::size_t chunk) {
        const std::size_t begin = chunk * detail::kChunkTrials;
        const std::size_t n = std::min(detail::kChunkTrials, spec.trials - begin);
        partial[chunk] = detail::run_chunk(spec, chunk, n);
    };

    if (workers <= 1 || chunks == 1) {
        for (std::size_t c = 0; c < chunks; ++c) run(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(workers, chunks); ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t c = next.fetch_add(1);
                    if (c >= chunks) return;
                    run(c);
                }
            });
        for (auto& t : pool) t.join();
    }

    const std::size_t k = spec.matrix.classes();
    std::vector<std::uint64_t> correct(k, 0), total(k, 0);
    for (const auto& p : partial)
        for (std::size_t c = 0; c < k; ++c) {
            correct[c] += p.correct[c];
            total[c] += p.total[c];
        }

    ChannelReport report;
    report.trials = spec.trials;
    report.per_class_accuracy.assign(k, 0.0);
    std::uint64_t all_correct = 0;
    for (std::size_t c = 0; c < k; ++c) {
        all_correct += correct[c];
        report.per_class_accuracy[c] = total[c] ? double(correct[c]) / double(total[c]) : 0.0;
    }
    report.accuracy = double(all_correct) / double(spec.trials);
    report.stderr_est =
        std::sqrt(report.accuracy * (1.0 - report.accuracy) / double(spec.trials));
    return report;
}

/// Exact decode-error probability of the 2-class complementary-row code,
/// where Hamming decoding reduces to bit majority: P[Bin(L, p) > L/2].
inline double binomial_tail_oracle(std::size_t l, double p) {
    if (l % 2 == 0 || l < 1) throw InvalidArgs("L must be odd and positive");
    if (p < 0.0 || p >= 0.5) throw InvalidArgs("p must lie in [0, 0.5)");
    if (p == 0.0) return 0.0;
    double tail = 0.0;
    for (std::size_t k = l / 2 + 1; k <= l; ++k) {
        // C(l, k) via running product, exact in double for the small l used here
        double coeff = 1.0;
        for (std::size_t i = 0; i < k; ++i)
            coeff = coeff * double(l - i) / double(i + 1);
        tail += coeff * std::pow(p, double(k)) * std::pow(1.0 - p, double(l - k));
    }
    return tail;
}

/// Channel accuracy as a function of code length: a fresh random binary
/// matrix per L (derived seeds), simulated at the given flip probability.
/// Output is ordered by L.
inline std::vector<std::pair<std::size_t, ChannelReport>>
convergence_curve(std::size_t classes, double flip_prob, std::vector<std::size_t> lengths,
                  std::size_t trials, std::uint64_t seed, std::size_t workers = 1) {
    std::sort(lengths.begin(), lengths.end());
    std::vector<std::pair<std::size_t, ChannelReport>> out;
    out.reserve(lengths.size());
    for (std::size_t l : lengths) {
        const std::uint64_t stream = derive_seed(seed, l);
        ChannelSpec spec{generate_random_matrix(classes, l, CodeKind::Binary, 0.0,
                                                derive_seed(stream, 1)),
                         flip_prob, trials, derive_seed(stream, 2)};
        out.emplace_back(l, simulate_channel(spec, workers));
    }
    return out;
}

/// CSV: header "L,accuracy,stderr,trials", one row per length.
inline void write_curve_csv(std::ostream& os,
                            const std::vector<std::pair<std::size_t, ChannelReport>>& curve) {
    os << "L,accuracy,stderr,trials\n";
    char buf[64];
    for (const auto& [l, report] : curve) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%zu", l, report.accuracy,
                      report.stderr_est, report.trials);
        os << buf << '\n';
    }
}

} // namespace ecoc

#endif
