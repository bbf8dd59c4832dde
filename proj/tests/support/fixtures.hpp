#ifndef ECOC_TESTS_FIXTURES_HPP
#define ECOC_TESTS_FIXTURES_HPP

#include <cstdint>
#include <vector>

#include "ecoc/codec.hpp"
#include "ecoc/data.hpp"
#include "ecoc/rng.hpp"

namespace ecoc::testsupport {

// 4-class / 5-classifier sample matrix used throughout the unit tests:
//        h1  h2  h3  h4  h5
//   c1   +1  +1  +1  -1  -1
//   c2   +1  -1  -1  +1  -1
//   c3   -1  +1  -1  +1  -1
//   c4   -1  -1  -1  -1  +1
inline CodeMatrix sample_matrix_4x5() {
    return CodeMatrix(4, 5,
                      {+1, +1, +1, -1, -1,
                       +1, -1, -1, +1, -1,
                       -1, +1, -1, +1, -1,
                       -1, -1, -1, -1, +1});
}

// Independent oracle: positionwise comparison, zeros contribute nothing.
inline std::size_t brute_hamming(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t d = 0;
    for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j] != 0 && b[j] != 0 && a[j] != b[j]) ++d;
    return d;
}

inline std::vector<int> row_of(const CodeMatrix& m, std::size_t i) {
    std::vector<int> r(m.length());
    for (std::size_t j = 0; j < m.length(); ++j) r[j] = m.entry(i, j);
    return r;
}

/// Well-separated Gaussian blobs over D dimensions, separable by
/// construction: class centers are a seeded draw, per-coordinate noise is
/// small relative to the center separation. `noise_salt` picks the noise
/// substream, so disjoint train/test tables with identical centers come
/// from the same seed and different salts.
inline FeatureTable make_blobs(std::size_t n, std::size_t d, std::size_t k,
                               std::uint64_t seed, std::uint64_t noise_salt = 2,
                               double center_scale = 3.0, double noise = 0.35) {
    Rng center_rng(derive_seed(seed, 1));
    std::vector<double> centers(k * d);
    for (double& v : centers) v = center_rng.next_symmetric(center_scale);

    FeatureTable t;
    t.n = n;
    t.d = d;
    t.k = k;
    t.provenance = "synthetic-blobs";
    t.features.resize(n * d);
    t.labels.resize(n);
    Rng rng(derive_seed(seed, noise_salt));
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t c = static_cast<std::uint32_t>(i % k);
        t.labels[i] = c;
        for (std::size_t j = 0; j < d; ++j) {
            // sum of 4 uniforms, zero mean: cheap bell-shaped noise
            double g = 0.0;
            for (int r = 0; r < 4; ++r) g += rng.next_double() - 0.5;
            t.features[i * d + j] = centers[c * d + j] + noise * g;
        }
    }
    return t;
}

} // namespace ecoc::testsupport

#endif
