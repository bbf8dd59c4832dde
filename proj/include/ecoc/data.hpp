#ifndef ECOC_DATA_HPP
#define ECOC_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ecoc/errors.hpp"
#include "ecoc/mat.hpp"
#include "ecoc/rng.hpp"

namespace ecoc {

/// N x D feature rows with integer class labels in [0, K).
struct FeatureTable {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t k = 0;
    std::vector<double> features; // row-major N x D
    std::vector<std::uint32_t> labels;
    std::string provenance;

    const double* row(std::size_t i) const { return features.data() + i * d; }
    double* row(std::size_t i) { return features.data() + i * d; }
};

struct SplitSpec {
    double train_fraction = 0.6;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct Batch {
    Mat features;                      // B x D
    std::vector<std::uint32_t> labels; // length B
    std::vector<std::size_t> indices;  // source rows in the table
    Mat one_hot;                       // B x K
};

enum class TableFormat { Csv, Binary };

namespace detail {

inline void check_finite(const FeatureTable& t, const std::string& origin) {
    for (std::size_t i = 0; i < t.features.size(); ++i)
        if (!std::isfinite(t.features[i]))
            throw NonFiniteFeature(origin + ": feature at row " + std::to_string(i / t.d) +
                                   ", column " + std::to_string(i % t.d) + " is not finite");
}

inline void put_u32(std::ostream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) throw ParseError(path + ": truncated header");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

} // namespace detail

// --- binary format -------------------------------------------------------
//
// Magic "ECOF", u32 version=1, u32 N, u32 D, u32 K, then N*D little-endian
// f32 features row-major, then N u32 labels.

inline void save_table(const FeatureTable& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for writing");
    f.write("ECOF", 4);
    detail::put_u32(f, 1);
    detail::put_u32(f, static_cast<std::uint32_t>(t.n));
    detail::put_u32(f, static_cast<std::uint32_t>(t.d));
    detail::put_u32(f, static_cast<std::uint32_t>(t.k));
    for (double v : t.features) {
        float fv = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &fv, 4);
        detail::put_u32(f, bits);
    }
    for (std::uint32_t l : t.labels) detail::put_u32(f, l);
    if (!f) throw IoFailure("write to " + path + " failed");
}

inline FeatureTable load_binary_table(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for reading");
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, "ECOF", 4) != 0)
        throw ParseError(path + ": bad magic (expected ECOF)");
    if (detail::get_u32(f, path) != 1) throw ParseError(path + ": unsupported version");
    FeatureTable t;
    t.n = detail::get_u32(f, path);
    t.d = detail::get_u32(f, path);
    t.k = detail::get_u32(f, path);
    if (t.n == 0 || t.d == 0 || t.k == 0) throw ParseError(path + ": zero dimension in header");
    t.features.resize(t.n * t.d);
    for (double& v : t.features) {
        std::uint32_t bits = detail::get_u32(f, path);
        float fv;
        std::memcpy(&fv, &bits, 4);
        v = fv;
    }
    t.labels.resize(t.n);
    for (std::uint32_t& l : t.labels) {
        l = detail::get_u32(f, path);
        if (l >= t.k)
            throw LabelOutOfRange(path + ": label " + std::to_string(l) + " >= K=" +
                                  std::to_string(t.k));
    }
    char extra;
    if (f.read(&extra, 1)) throw ParseError(path + ": trailing bytes after payload");
    t.provenance = path;
    detail::check_finite(t, path);
    return t;
}

// --- CSV format ------------------------------------------------------------
//
// D feature columns then one integer label column, '.' decimal separator,
// optional header line. K defaults to 1 + max label.

inline FeatureTable load_csv_table(const std::string& path,
                                   std::optional<std::size_t> classes = std::nullopt) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open " + path + " for reading");
    FeatureTable t;
    std::string line;
    std::size_t line_no = 0;
    bool first_data_line = true;
    std::uint32_t max_label = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t pos = 0; pos <= line.size(); ++pos) {
            if (pos == line.size() || line[pos] == ',') {
                cells.push_back(line.substr(start, pos - start));
                start = pos + 1;
            }
        }
        if (first_data_line && line_no == 1) {
            // header detection: any cell that does not parse as a number
            bool numeric = true;
            for (const auto& c : cells) {
                char* end = nullptr;
                std::strtod(c.c_str(), &end);
                if (end == c.c_str() || *end != '\0') {
                    numeric = false;
                    break;
                }
            }
            if (!numeric) continue; // skip header row
        }
        if (cells.size() < 2)
            throw ParseError(path + ": row " + std::to_string(line_no) +
                             ": need at least one feature column and a label");
        if (first_data_line) {
            t.d = cells.size() - 1;
            first_data_line = false;
        } else if (cells.size() != t.d + 1) {
            throw ParseError(path + ": row " + std::to_string(line_no) + ": expected " +
                             std::to_string(t.d + 1) + " columns, found " +
                             std::to_string(cells.size()));
        }
        for (std::size_t j = 0; j < t.d; ++j) {
            char* end = nullptr;
            double v = std::strtod(cells[j].c_str(), &end);
            if (end == cells[j].c_str() || *end != '\0')
                throw ParseError(path + ": row " + std::to_string(line_no) + ", column " +
                                 std::to_string(j + 1) + ": \"" + cells[j] + "\" is not a number");
            t.features.push_back(v);
        }
        const std::string& lab = cells[t.d];
        char* end = nullptr;
        long l = std::strtol(lab.c_str(), &end, 10);
        if (end == lab.c_str() || *end != '\0' || l < 0)
            throw ParseError(path + ": row " + std::to_string(line_no) +
                             ": label \"" + lab + "\" is not a nonnegative integer");
        t.labels.push_back(static_cast<std::uint32_t>(l));
        max_label = std::max(max_label, t.labels.back());
        ++t.n;
    }
    if (t.n == 0) throw ParseError(path + ": no data rows");
    t.k = classes.value_or(static_cast<std::size_t>(max_label) + 1);
    for (std::uint32_t l : t.labels)
        if (l >= t.k)
            throw LabelOutOfRange(path + ": label " + std::to_string(l) + " >= K=" +
                                  std::to_string(t.k));
    t.provenance = path;
    detail::check_finite(t, path);
    return t;
}

inline FeatureTable load_table(const std::string& path, TableFormat format,
                               std::optional<std::size_t> classes = std::nullopt) {
    if (format == TableFormat::Binary) {
        FeatureTable t = load_binary_table(path);
        if (classes && *classes != t.k)
            throw LabelOutOfRange(path + ": file declares K=" + std::to_string(t.k) +
                                  ", expected " + std::to_string(*classes));
        return t;
    }
    return load_csv_table(path, classes);
}

// --- standardization -------------------------------------------------------

/// Per-column statistics fitted on a training table. Population (1/N)
/// standard deviation; columns with std below 1e-12 are flagged degenerate
/// and only centered.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev; // 1.0 for degenerate columns
    std::vector<bool> degenerate;

    FeatureTable apply(const FeatureTable& t) const {
        if (t.d != mean.size())
            throw DimensionMismatch("table has D=" + std::to_string(t.d) +
                                    ", standardizer was fit on D=" + std::to_string(mean.size()));
        FeatureTable out = t;
        for (std::size_t i = 0; i < t.n; ++i)
            for (std::size_t j = 0; j < t.d; ++j)
                out.features[i * t.d + j] = (t.features[i * t.d + j] - mean[j]) / stddev[j];
        return out;
    }
};

inline std::pair<FeatureTable, Standardizer> standardize(const FeatureTable& t) {
    if (t.n < 2) throw DegenerateTable("need at least 2 rows to standardize");
    Standardizer s;
    s.mean.assign(t.d, 0.0);
    s.stddev.assign(t.d, 1.0);
    s.degenerate.assign(t.d, false);
    for (std::size_t i = 0; i < t.n; ++i)
        for (std::size_t j = 0; j < t.d; ++j) s.mean[j] += t.features[i * t.d + j];
    for (std::size_t j = 0; j < t.d; ++j) s.mean[j] /= double(t.n);
    std::vector<double> var(t.d, 0.0);
    for (std::size_t i = 0; i < t.n; ++i)
        for (std::size_t j = 0; j < t.d; ++j) {
            const double c = t.features[i * t.d + j] - s.mean[j];
            var[j] += c * c;
        }
    for (std::size_t j = 0; j < t.d; ++j) {
        const double sd = std::sqrt(var[j] / double(t.n));
        if (sd < 1e-12) {
            s.degenerate[j] = true;
            s.stddev[j] = 1.0; // center only
        } else {
            s.stddev[j] = sd;
        }
    }
    return {s.apply(t), s};
}

// --- splitting ---------------------------------------------------------------

struct Split {
    FeatureTable train, val, test;
};

/// Deterministic, class-stratified split. Within each class the row order
/// is shuffled by the seed and counts follow the fractions by largest
/// remainder, so per-class proportions stay within one sample of the spec.
inline Split split(const FeatureTable& t, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) ||
        !(spec.val_fraction > 0.0 && spec.val_fraction < 1.0) ||
        spec.train_fraction + spec.val_fraction >= 1.0)
        throw InvalidArgs("split fractions must lie in (0,1) and sum below 1");

    std::vector<std::vector<std::size_t>> by_class(t.k);
    for (std::size_t i = 0; i < t.n; ++i) by_class[t.labels[i]].push_back(i);

    Rng rng(derive_seed(spec.seed, 0x5B17)); // split substream
    std::vector<std::size_t> dest[3]; // train, val, test index lists
    const double fracs[3] = {spec.train_fraction, spec.val_fraction,
                             1.0 - spec.train_fraction - spec.val_fraction};
    for (std::size_t c = 0; c < t.k; ++c) {
        auto& idx = by_class[c];
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.next_below(i)]);

        const std::size_t nc = idx.size();
        std::size_t counts[3];
        double rema[3];
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double want = fracs[s] * double(nc);
            counts[s] = static_cast<std::size_t>(want);
            rema[s] = want - double(counts[s]);
            assigned += counts[s];
        }
        while (assigned < nc) { // largest remainder, ties to earlier split
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (rema[s] > rema[best]) best = s;
            ++counts[best];
            rema[best] = -1.0;
            ++assigned;
        }
        std::size_t at = 0;
        for (int s = 0; s < 3; ++s)
            for (std::size_t i = 0; i < counts[s]; ++i) dest[s].push_back(idx[at++]);
    }

    auto take = [&](const std::vector<std::size_t>& rows, const char* part) {
        if (rows.empty()) throw EmptySplit(std::string(part) + " split is empty");
        FeatureTable out;
        out.d = t.d;
        out.k = t.k;
        out.n = rows.size();
        out.provenance = t.provenance;
        out.features.reserve(rows.size() * t.d);
        out.labels.reserve(rows.size());
        for (std::size_t r : rows) {
            out.features.insert(out.features.end(), t.row(r), t.row(r) + t.d);
            out.labels.push_back(t.labels[r]);
        }
        return out;
    };
    return {take(dest[0], "train"), take(dest[1], "val"), take(dest[2], "test")};
}

// --- batching ---------------------------------------------------------------

/// Epoch-dependent deterministic shuffle; the last batch may be short.
inline std::vector<Batch> batches(const FeatureTable& t, std::size_t batch_size,
                                  std::uint64_t shuffle_seed, std::size_t epoch) {
    if (batch_size < 1) throw InvalidArgs("batch_size must be at least 1");
    std::vector<std::size_t> order(t.n);
    for (std::size_t i = 0; i < t.n; ++i) order[i] = i;
    Rng rng(derive_seed(shuffle_seed, epoch));
    for (std::size_t i = t.n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);

    std::vector<Batch> out;
    for (std::size_t start = 0; start < t.n; start += batch_size) {
        const std::size_t b = std::min(batch_size, t.n - start);
        Batch batch;
        batch.features = Mat(b, t.d);
        batch.one_hot = Mat(b, t.k);
        batch.labels.resize(b);
        batch.indices.resize(b);
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t src = order[start + i];
            batch.indices[i] = src;
            std::copy(t.row(src), t.row(src) + t.d, batch.features.row(i));
            batch.labels[i] = t.labels[src];
            batch.one_hot(i, t.labels[src]) = 1.0;
        }
        out.push_back(std::move(batch));
    }
    return out;
}

} // namespace ecoc

#endif
