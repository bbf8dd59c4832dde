#ifndef ECOC_MAT_HPP
#define ECOC_MAT_HPP

#include <cstddef>
#include <vector>

namespace ecoc {

/// Dense row-major matrix of doubles. Just storage plus indexing; the
/// numeric kernels that use it live with their algorithms.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    double* row(std::size_t r) { return a.data() + r * cols; }
    const double* row(std::size_t r) const { return a.data() + r * cols; }

    std::size_t size() const { return a.size(); }

    void fill(double v) { a.assign(a.size(), v); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    friend bool operator==(const Mat& x, const Mat& y) {
        return x.rows == y.rows && x.cols == y.cols && x.a == y.a;
    }
};

} // namespace ecoc

#endif
