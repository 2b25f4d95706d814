#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace klora {

// Dense real matrix, row-major, 64-bit entries. The workhorse container for
// second-moment and Koopman matrices; sizes here are small (k <= a few
// hundred), batches are tall and skinny.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {}
    Matrix(int rows, int cols, std::vector<double> data);

    static Matrix identity(int n);
    static Matrix diag(std::span<const double> d);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(std::span<const double> v);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(int i) { return data_.data() + static_cast<size_t>(i) * cols_; }
    const double* row(int i) const { return data_.data() + static_cast<size_t>(i) * cols_; }
    std::span<const double> row_span(int i) const { return {row(i), static_cast<size_t>(cols_)}; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

    Matrix transposed() const;
    Matrix col(int j) const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double c);

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double c) { return a *= c; }
    friend Matrix operator*(double c, Matrix a) { return a *= c; }

    double trace() const;
    double frobenius_norm() const;
    double max_abs() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a^T * b without forming the transpose
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// c = a * b^T without forming the transpose
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);

} // namespace klora
