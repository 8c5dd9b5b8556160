#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "dgmae/error.hpp"

namespace dgmae {

// Dense row-major real matrix. Row vectors double as rank-1 tensors (1 x n).
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw DataError(Errc::dimension_mismatch, "negative matrix shape");
    }
    Matrix(int rows, int cols, std::initializer_list<double> vals) : Matrix(rows, cols) {
        if (static_cast<size_t>(rows) * cols != vals.size())
            throw DataError(Errc::dimension_mismatch, "initializer size does not match shape");
        size_t k = 0;
        for (double x : vals) v_[k++] = x;
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    size_t size() const noexcept { return v_.size(); }
    bool empty() const noexcept { return v_.empty(); }

    double& operator()(int r, int c) { return v_[static_cast<size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return v_[static_cast<size_t>(r) * cols_ + c]; }

    double* row(int r) { return v_.data() + static_cast<size_t>(r) * cols_; }
    const double* row(int r) const { return v_.data() + static_cast<size_t>(r) * cols_; }

    double* data() noexcept { return v_.data(); }
    const double* data() const noexcept { return v_.data(); }

    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const noexcept {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double row_norm(int r) const {
        double s = 0.0;
        const double* p = row(r);
        for (int c = 0; c < cols_; ++c) s += p[c] * p[c];
        return std::sqrt(s);
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> v_;
};

using FeatureMatrix = Matrix;

// Rows rescaled to unit L2 norm; rows with norm <= eps are divided by eps
// (zero rows stay zero).
inline Matrix l2_normalize_rows(const Matrix& x, double eps = 1e-12) {
    Matrix out = x;
    for (int r = 0; r < x.rows(); ++r) {
        double inv = 1.0 / std::max(x.row_norm(r), eps);
        double* p = out.row(r);
        for (int c = 0; c < x.cols(); ++c) p[c] *= inv;
    }
    return out;
}

inline double row_cosine(const Matrix& a, int i, const Matrix& b, int j, double eps = 1e-12) {
    double dot = 0.0;
    const double* p = a.row(i);
    const double* q = b.row(j);
    for (int c = 0; c < a.cols(); ++c) dot += p[c] * q[c];
    double na = a.row_norm(i), nb = b.row_norm(j);
    if (na <= eps || nb <= eps) return 0.0;
    return dot / (na * nb);
}

} // namespace dgmae
