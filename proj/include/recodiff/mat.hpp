#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace recodiff {

// Dense row-major matrix of doubles. The only numeric container in the
// project; vectors are 1xN or Nx1 matrices.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, std::vector<double> values) : rows(r), cols(c), a(std::move(values)) {
        if (a.size() != static_cast<size_t>(r) * c) {
            throw std::invalid_argument("Mat: data size does not match shape");
        }
    }

    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }
    void zero() { fill(0.0); }

    bool finite() const {
        for (double v : a) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

inline void check_same_shape(const Mat& x, const Mat& y, const char* what) {
    if (!x.same_shape(y)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + x.shape_str() +
                                    " vs " + y.shape_str());
    }
}

// out += A * B, shapes (m x k)(k x n). ikj order so the inner loop is a
// contiguous saxpy over the output row.
inline void matmul_acc(const Mat& A, const Mat& B, Mat& out) {
    assert(A.cols == B.rows && out.rows == A.rows && out.cols == B.cols);
    const int m = A.rows, k = A.cols, n = B.cols;
    for (int i = 0; i < m; ++i) {
        const double* arow = A.row(i);
        double* orow = out.row(i);
        for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = B.row(p);
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
}

inline Mat matmul(const Mat& A, const Mat& B) {
    if (A.cols != B.rows) {
        throw std::invalid_argument("matmul: inner dims " + A.shape_str() + " vs " + B.shape_str());
    }
    Mat out(A.rows, B.cols);
    matmul_acc(A, B, out);
    return out;
}

// out += A * B^T, shapes (m x k)(n x k) -> (m x n). Dot-product form.
inline void matmul_nt_acc(const Mat& A, const Mat& B, Mat& out) {
    assert(A.cols == B.cols && out.rows == A.rows && out.cols == B.rows);
    const int m = A.rows, k = A.cols, n = B.rows;
    for (int i = 0; i < m; ++i) {
        const double* arow = A.row(i);
        double* orow = out.row(i);
        for (int j = 0; j < n; ++j) {
            const double* brow = B.row(j);
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            orow[j] += s;
        }
    }
}

inline Mat matmul_nt(const Mat& A, const Mat& B) {
    if (A.cols != B.cols) {
        throw std::invalid_argument("matmul_nt: inner dims " + A.shape_str() + " vs " +
                                    B.shape_str());
    }
    Mat out(A.rows, B.rows);
    matmul_nt_acc(A, B, out);
    return out;
}

// out += A^T * B, shapes (k x m)(k x n) -> (m x n). Rank-1 update per row of A.
inline void matmul_tn_acc(const Mat& A, const Mat& B, Mat& out) {
    assert(A.rows == B.rows && out.rows == A.cols && out.cols == B.cols);
    const int k = A.rows, m = A.cols, n = B.cols;
    for (int p = 0; p < k; ++p) {
        const double* arow = A.row(p);
        const double* brow = B.row(p);
        for (int i = 0; i < m; ++i) {
            const double aip = arow[i];
            if (aip == 0.0) continue;
            double* orow = out.row(i);
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
}

inline void axpy(double alpha, const Mat& x, Mat& y) {
    assert(x.same_shape(y));
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) y.a[i] += alpha * x.a[i];
}

inline double dot_all(const Mat& x, const Mat& y) {
    assert(x.same_shape(y));
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += x.a[i] * y.a[i];
    return s;
}

inline double max_abs_diff(const Mat& x, const Mat& y) {
    check_same_shape(x, y, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x.a[i] - y.a[i]));
    return m;
}

inline double frob_norm(const Mat& x) {
    double s = 0.0;
    for (double v : x.a) s += v * v;
    return std::sqrt(s);
}

}  // namespace recodiff
