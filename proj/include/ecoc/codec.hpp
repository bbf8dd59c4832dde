#ifndef ECOC_CODEC_HPP
#define ECOC_CODEC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ecoc/errors.hpp"
#include "ecoc/rng.hpp"

namespace ecoc {

enum class CodeKind { Binary, Ternary };

/// K x L code matrix over {-1, 0, +1}. Row i is the codeword of class i,
/// column j defines the dichotomy learned by base classifier j (a 0 entry
/// excludes the class from that dichotomy). Immutable after construction.
class CodeMatrix {
public:
    CodeMatrix(std::size_t classes, std::size_t length, std::vector<std::int8_t> entries)
        : k_(classes), l_(length), m_(std::move(entries)) {
        if (k_ == 0 || l_ == 0)
            throw InvalidArgs("code matrix dimensions must be positive");
        if (m_.size() != k_ * l_)
            throw InvalidArgs("entry count does not match K*L");
    }

    std::size_t classes() const { return k_; }
    std::size_t length() const { return l_; }

    int entry(std::size_t i, std::size_t j) const {
        return m_[i * l_ + j];
    }

    const std::int8_t* row(std::size_t i) const { return m_.data() + i * l_; }

    /// Binary iff no zero entry. The kind is a property of the entries, so
    /// a ternary generation call that happens to draw no zeros yields a
    /// matrix indistinguishable from a binary one.
    CodeKind kind() const {
        for (std::int8_t v : m_)
            if (v == 0) return CodeKind::Ternary;
        return CodeKind::Binary;
    }

    /// Number of nonzero symbols in row i (equals L for binary matrices).
    std::size_t effective_length(std::size_t i) const {
        if (i >= k_) throw IndexOutOfRange("row " + std::to_string(i));
        std::size_t n = 0;
        for (std::size_t j = 0; j < l_; ++j)
            if (entry(i, j) != 0) ++n;
        return n;
    }

    friend bool operator==(const CodeMatrix& x, const CodeMatrix& y) {
        return x.k_ == y.k_ && x.l_ == y.l_ && x.m_ == y.m_;
    }

private:
    std::size_t k_, l_;
    std::vector<std::int8_t> m_;
};

enum class ViolationRule { SymbolOutOfRange, DuplicateRows, ConstantColumn, AllZeroRow };

struct Violation {
    ViolationRule rule;
    std::size_t index_a = 0; // row (or column for ConstantColumn)
    std::size_t index_b = 0; // second row for DuplicateRows
    std::string message;
};

/// Empty result means the matrix satisfies every invariant:
/// entries in {-1,0,+1}, pairwise distinct rows, every column holding both
/// a +1 and a -1, and no all-zero row.
inline std::vector<Violation> validate(const CodeMatrix& m) {
    std::vector<Violation> out;
    const std::size_t k = m.classes(), l = m.length();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < l; ++j) {
            int v = m.entry(i, j);
            if (v != -1 && v != 0 && v != 1)
                out.push_back({ViolationRule::SymbolOutOfRange, i, j,
                               "entry (" + std::to_string(i) + "," + std::to_string(j) +
                                   ") = " + std::to_string(v) + " is outside {-1,0,+1}"});
        }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t i2 = i + 1; i2 < k; ++i2) {
            bool same = true;
            for (std::size_t j = 0; j < l && same; ++j)
                same = m.entry(i, j) == m.entry(i2, j);
            if (same)
                out.push_back({ViolationRule::DuplicateRows, i, i2,
                               "rows " + std::to_string(i) + " and " + std::to_string(i2) +
                                   " are identical"});
        }
    for (std::size_t j = 0; j < l; ++j) {
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < k; ++i) {
            has_pos |= m.entry(i, j) == 1;
            has_neg |= m.entry(i, j) == -1;
        }
        if (!has_pos || !has_neg)
            out.push_back({ViolationRule::ConstantColumn, j, 0,
                           "column " + std::to_string(j) + " lacks a " +
                               (has_pos ? "-1" : "+1") + " entry"});
    }
    for (std::size_t i = 0; i < k; ++i) {
        bool all_zero = true;
        for (std::size_t j = 0; j < l && all_zero; ++j)
            all_zero = m.entry(i, j) == 0;
        if (all_zero)
            out.push_back({ViolationRule::AllZeroRow, i, 0,
                           "row " + std::to_string(i) + " is all zeros"});
    }
    return out;
}

/// Hamming distance between two rows. Positions where either symbol is 0
/// contribute nothing: a 0 means "class not in this dichotomy", so there is
/// no bit to disagree on.
inline std::size_t row_hamming(const CodeMatrix& m, std::size_t i, std::size_t i2) {
    std::size_t d = 0;
    for (std::size_t j = 0; j < m.length(); ++j) {
        int a = m.entry(i, j), b = m.entry(i2, j);
        if (a != 0 && b != 0 && a != b) ++d;
    }
    return d;
}

struct MatrixStats {
    std::size_t min_hamming = 0;
    std::size_t correctable = 0; // floor((e-1)/2), clamped at 0
    std::vector<std::vector<std::size_t>> pairwise_hd;
};

inline MatrixStats matrix_stats(const CodeMatrix& m) {
    auto violations = validate(m);
    if (!violations.empty())
        throw InvalidMatrix(violations.front().message);
    const std::size_t k = m.classes();
    MatrixStats s;
    s.pairwise_hd.assign(k, std::vector<std::size_t>(k, 0));
    std::size_t min_hd = SIZE_MAX;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t i2 = i + 1; i2 < k; ++i2) {
            std::size_t d = row_hamming(m, i, i2);
            s.pairwise_hd[i][i2] = s.pairwise_hd[i2][i] = d;
            min_hd = std::min(min_hd, d);
        }
    s.min_hamming = (k < 2) ? 0 : min_hd;
    s.correctable = s.min_hamming == 0 ? 0 : (s.min_hamming - 1) / 2;
    return s;
}

/// Per-sample training targets for dichotomy j: target[n] = M[labels[n], j].
/// A 0 marks the sample as excluded from this dichotomy.
inline std::vector<std::int8_t> column_targets(const CodeMatrix& m, std::size_t j,
                                               const std::vector<std::uint32_t>& labels) {
    if (j >= m.length())
        throw IndexOutOfRange("column " + std::to_string(j) + " of " + std::to_string(m.length()));
    std::vector<std::int8_t> out(labels.size());
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] >= m.classes())
            throw IndexOutOfRange("label " + std::to_string(labels[n]) + " >= K=" +
                                  std::to_string(m.classes()));
        out[n] = static_cast<std::int8_t>(m.entry(labels[n], j));
    }
    return out;
}

enum class Metric { Hamming, Euclidean, Manhattan };

struct DecodeResult {
    std::size_t predicted_class = 0;
    std::vector<double> distances;
    Metric metric = Metric::Hamming;
};

namespace detail {

// Distances of Y against every row, written into dist (length K).
// Returns the lowest-index argmin. Hamming maps Y to hard signs first
// (sign(0) := +1) and uses the ternary zero convention; Euclidean and
// Manhattan compare the raw soft outputs against the codeword symbols.
inline std::size_t decode_into(const double* y, std::size_t len, const CodeMatrix& m,
                               Metric metric, double* dist) {
    const std::size_t k = m.classes(), l = m.length();
    if (len != l)
        throw LengthMismatch("output length " + std::to_string(len) + " != code length " +
                             std::to_string(l));
    for (std::size_t i = 0; i < k; ++i) {
        const std::int8_t* row = m.row(i);
        double d = 0.0;
        switch (metric) {
        case Metric::Hamming:
            for (std::size_t j = 0; j < l; ++j) {
                if (row[j] == 0) continue;
                const int s = y[j] < 0.0 ? -1 : 1;
                if (s != row[j]) d += 1.0;
            }
            break;
        case Metric::Euclidean: {
            for (std::size_t j = 0; j < l; ++j) {
                const double diff = y[j] - row[j];
                d += diff * diff;
            }
            d = std::sqrt(d);
            break;
        }
        case Metric::Manhattan:
            for (std::size_t j = 0; j < l; ++j)
                d += std::fabs(y[j] - row[j]);
            break;
        }
        dist[i] = d;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i)
        if (dist[i] < dist[best]) best = i; // ties keep the lowest index
    return best;
}

} // namespace detail

inline DecodeResult decode(const std::vector<double>& y, const CodeMatrix& m, Metric metric) {
    DecodeResult r;
    r.metric = metric;
    r.distances.resize(m.classes());
    r.predicted_class = detail::decode_into(y.data(), y.size(), m, metric, r.distances.data());
    return r;
}

/// Class scores o[i] = sum_j h[j] * M[i,j] (dot product with codeword i).
inline std::vector<double> class_scores(const std::vector<double>& h, const CodeMatrix& m) {
    if (h.size() != m.length())
        throw LengthMismatch("output length " + std::to_string(h.size()) + " != code length " +
                             std::to_string(m.length()));
    std::vector<double> o(m.classes(), 0.0);
    for (std::size_t i = 0; i < m.classes(); ++i) {
        const std::int8_t* row = m.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.length(); ++j)
            s += h[j] * row[j];
        o[i] = s;
    }
    return o;
}

/// Hamming distance recovered from a class score: (L_eff - o_c) / 2.
/// L_eff is the number of nonzero symbols in the class codeword.
inline double hd_from_score(double o_c, std::size_t l_eff) {
    return (static_cast<double>(l_eff) - o_c) / 2.0;
}

// --- random generation ------------------------------------------------

/// Rejection sampling of columns: each symbol is 0 with probability
/// zero_fraction, otherwise +/-1 uniformly. Columns lacking a +1 or a -1
/// are redrawn; assembled candidates with duplicate rows or an all-zero
/// row are discarded wholesale. The budget counts column draws.
inline CodeMatrix generate_random_matrix(std::size_t classes, std::size_t length, CodeKind kind,
                                         double zero_fraction, std::uint64_t seed) {
    if (classes < 2) throw InvalidArgs("need at least 2 classes");
    if (length < 1) throw InvalidArgs("need at least 1 column");
    if (zero_fraction < 0.0 || zero_fraction >= 1.0)
        throw InvalidArgs("zero_fraction must lie in [0,1)");
    if (kind == CodeKind::Binary && zero_fraction != 0.0)
        throw InvalidArgs("binary matrices admit no zero entries");
    if (kind == CodeKind::Binary && length < 63 &&
        classes > (std::uint64_t{1} << length))
        throw InfeasibleCode("K=" + std::to_string(classes) + " distinct binary rows need L >= " +
                             std::to_string(length + 1) + " (2^L < K)");
    if (kind == CodeKind::Ternary && length < 40) {
        std::uint64_t cap = 1;
        for (std::size_t j = 0; j < length; ++j) cap *= 3;
        if (classes > cap - 1) // all-zero row is not a codeword
            throw InfeasibleCode("K exceeds the number of distinct nonzero ternary rows");
    }

    const std::uint64_t budget = 1000ULL * classes * length;
    std::uint64_t draws = 0;
    Rng rng(seed);
    std::vector<std::int8_t> entries(classes * length, 0);

    for (;;) {
        for (std::size_t j = 0; j < length; ++j) {
            for (;;) {
                if (draws == budget)
                    throw AttemptBudgetExceeded("no valid matrix within " +
                                                std::to_string(budget) + " column draws");
                ++draws;
                bool has_pos = false, has_neg = false;
                for (std::size_t i = 0; i < classes; ++i) {
                    std::int8_t v;
                    if (rng.next_double() < zero_fraction) {
                        v = 0;
                    } else {
                        v = rng.next_double() < 0.5 ? std::int8_t{1} : std::int8_t{-1};
                    }
                    entries[i * length + j] = v;
                    has_pos |= v == 1;
                    has_neg |= v == -1;
                }
                if (has_pos && has_neg) break;
            }
        }
        CodeMatrix candidate(classes, length, entries);
        bool ok = true;
        for (std::size_t i = 0; i < classes && ok; ++i) {
            bool all_zero = true;
            for (std::size_t j = 0; j < length && all_zero; ++j)
                all_zero = candidate.entry(i, j) == 0;
            ok = !all_zero;
        }
        for (std::size_t i = 0; i < classes && ok; ++i)
            for (std::size_t i2 = i + 1; i2 < classes && ok; ++i2) {
                bool same = true;
                for (std::size_t j = 0; j < length && same; ++j)
                    same = candidate.entry(i, j) == candidate.entry(i2, j);
                ok = !same;
            }
        if (ok) return candidate;
    }
}

// --- text format -------------------------------------------------------
//
// First line "K L", then K lines of L space-separated integers from
// {-1, 0, 1}. LF line endings, trailing newline required.

inline void save_matrix(const CodeMatrix& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for writing");
    f << m.classes() << ' ' << m.length() << '\n';
    for (std::size_t i = 0; i < m.classes(); ++i) {
        for (std::size_t j = 0; j < m.length(); ++j) {
            if (j) f << ' ';
            f << m.entry(i, j);
        }
        f << '\n';
    }
    if (!f) throw IoFailure("write to " + path + " failed");
}

inline CodeMatrix load_matrix(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for reading");
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IoFailure("read from " + path + " failed");
    if (content.empty() || content.back() != '\n')
        throw ParseError(path + ": missing trailing newline");

    std::vector<std::string> lines;
    std::size_t start = 0;
    for (std::size_t pos = 0; pos < content.size(); ++pos) {
        if (content[pos] == '\r')
            throw ParseError(path + ": line " + std::to_string(lines.size() + 1) +
                             ": CR line ending (format requires LF)");
        if (content[pos] == '\n') {
            lines.push_back(content.substr(start, pos - start));
            start = pos + 1;
        }
    }

    auto fail = [&](std::size_t line, std::size_t col, const std::string& why) -> ParseError {
        return ParseError(path + ": line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + why);
    };

    if (lines.empty()) throw fail(1, 1, "missing header");
    std::istringstream header(lines[0]);
    long long k = 0, l = 0;
    std::string extra;
    if (!(header >> k >> l) || (header >> extra) || k <= 0 || l <= 0)
        throw fail(1, 1, "header must be two positive integers \"K L\"");
    if (lines.size() != static_cast<std::size_t>(k) + 1)
        throw fail(lines.size() + 1, 1,
                   "expected " + std::to_string(k) + " rows, found " +
                       std::to_string(lines.size() - 1));

    std::vector<std::int8_t> entries;
    entries.reserve(static_cast<std::size_t>(k * l));
    for (long long i = 0; i < k; ++i) {
        const std::string& line = lines[static_cast<std::size_t>(i) + 1];
        std::size_t col = 0;
        for (long long j = 0; j < l; ++j) {
            while (col < line.size() && line[col] == ' ') ++col;
            if (col >= line.size())
                throw fail(i + 2, col + 1, "expected " + std::to_string(l) + " symbols");
            std::size_t tok_start = col;
            while (col < line.size() && line[col] != ' ') ++col;
            const std::string tok = line.substr(tok_start, col - tok_start);
            if (tok == "1" || tok == "+1")
                entries.push_back(1);
            else if (tok == "-1")
                entries.push_back(-1);
            else if (tok == "0")
                entries.push_back(0);
            else
                throw fail(i + 2, tok_start + 1, "symbol \"" + tok + "\" not in {-1,0,1}");
        }
        while (col < line.size() && line[col] == ' ') ++col;
        if (col != line.size())
            throw fail(i + 2, col + 1, "trailing content after " + std::to_string(l) + " symbols");
    }
    return CodeMatrix(static_cast<std::size_t>(k), static_cast<std::size_t>(l),
                      std::move(entries));
}

} // namespace ecoc

#endif
