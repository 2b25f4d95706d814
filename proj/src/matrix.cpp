#include "klora/matrix.hpp"

#include <cmath>
#include <cstring>

#include "klora/errors.hpp"

namespace klora {

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<size_t>(rows) * cols) {
        throw invalid_input_error("Matrix: data length does not match rows*cols");
    }
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diag(std::span<const double> d) {
    Matrix m(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (size_t i = 0; i < d.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c) {
            throw invalid_input_error("Matrix::from_rows: ragged rows");
        }
        int j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix Matrix::column(std::span<const double> v) {
    Matrix m(static_cast<int>(v.size()), 1);
    for (size_t i = 0; i < v.size(); ++i) m(static_cast<int>(i), 0) = v[i];
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i) {
        for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    }
    return t;
}

Matrix Matrix::col(int j) const {
    Matrix c(rows_, 1);
    for (int i = 0; i < rows_; ++i) c(i, 0) = (*this)(i, j);
    return c;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    if (!same_shape(o)) throw invalid_input_error("Matrix+=: shape mismatch");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    if (!same_shape(o)) throw invalid_input_error("Matrix-=: shape mismatch");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double c) {
    for (double& v : data_) v *= c;
    return *this;
}

double Matrix::trace() const {
    const int n = rows_ < cols_ ? rows_ : cols_;
    double t = 0.0;
    for (int i = 0; i < n; ++i) t += (*this)(i, i);
    return t;
}

double Matrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

// Row-streaming ikj order: C's row i accumulates A(i,k) * B row k. Inner loop
// runs over contiguous memory on both sides, which the compiler vectorizes.
Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw invalid_input_error("matmul: inner dimension mismatch");
    Matrix c(a.rows(), b.cols());
    const int n = b.cols();
    for (int i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row(k);
            for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw invalid_input_error("matmul_tn: row count mismatch");
    Matrix c(a.cols(), b.cols());
    const int n = b.cols();
    for (int k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (int i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.row(i);
            for (int j = 0; j < n; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw invalid_input_error("matmul_nt: col count mismatch");
    Matrix c(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int j = 0; j < b.rows(); ++j) {
            ci[j] = dot({ai, static_cast<size_t>(a.cols())}, b.row_span(j));
        }
    }
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw invalid_input_error("hadamard: shape mismatch");
    Matrix c = a;
    for (int i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        const double* bi = b.row(i);
        for (int j = 0; j < a.cols(); ++j) ci[j] *= bi[j];
    }
    return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    const size_t n = a.size() < b.size() ? a.size() : b.size();
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

} // namespace klora
