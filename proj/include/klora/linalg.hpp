#pragma once

#include <complex>
#include <vector>

#include "klora/matrix.hpp"

namespace klora {

// Thin SVD a = u * diag(sigma) * v^T with r = min(rows, cols) columns.
// u and v have orthonormal columns; sigma is non-negative and non-increasing.
struct SvdFactors {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

// Eigenvalues (sorted: descending modulus, ties by descending real part then
// ascending imaginary part) with matching right eigenvectors as columns.
// Conjugate pairs are exact for real input.
struct ComplexSpectrum {
    std::vector<std::complex<double>> eigenvalues;
    std::vector<std::vector<std::complex<double>>> right_vectors; // right_vectors[j] = eigenvector j
};

struct SymEig {
    std::vector<double> eigenvalues; // descending
    Matrix eigenvectors;             // column i pairs with eigenvalues[i]
};

// One-sided Jacobi SVD. Accurate for the small matrices used here; throws
// invalid_input_error on non-finite entries.
SvdFactors svd(const Matrix& a);

// Cyclic Jacobi eigensolver for symmetric matrices. Throws invalid_input_error
// when the input is asymmetric beyond tolerance.
SymEig sym_eigh(const Matrix& s);

// Hessenberg reduction + Francis double-shift QR for the eigenvalues, inverse
// iteration on the Hessenberg form for the eigenvectors. Throws
// numerical_error carrying the eigenvalues found so far if QR stalls.
ComplexSpectrum eig_general(const Matrix& a);

// V * diag(max(lambda_i, eigen_floor))^{-1/2} * V^T for symmetric PSD input.
Matrix inv_sqrt_psd(const Matrix& m, double eigen_floor);
// Default floor used by the whitening steps: 1e-10 * trace(m) / k.
double default_eigen_floor(const Matrix& m);

// Symmetric PSD square root, V * diag(lambda)^{1/2} * V^T (negative dust clamped to 0).
Matrix sqrt_psd(const Matrix& m);

// Moore-Penrose pseudoinverse of a symmetric PSD matrix; eigenvalues below
// rtol * lambda_max are truncated to zero.
Matrix pinv_psd(const Matrix& m, double rtol = 1e-10);

// Eigenvalues (ascending) of a symmetric tridiagonal matrix via implicit-shift
// QL, plus inverse-iteration eigenvectors for the `n_vectors` largest
// eigenvalues. Used by the dense 1D generator discretizations, where the grid
// is too large for the dense Jacobi path.
struct TridiagEig {
    std::vector<double> eigenvalues;   // ascending
    std::vector<std::vector<double>> top_vectors; // for the n_vectors largest eigenvalues
};
TridiagEig tridiag_eigh(std::vector<double> diag, std::vector<double> off, int n_vectors);

// Dense complex linear solve (partial pivoting); used for eigenvector-basis
// matrix powers.
std::vector<std::complex<double>> complex_solve(std::vector<std::vector<std::complex<double>>> a,
                                                std::vector<std::complex<double>> b);

// K^t for integer t >= 0. Uses the eigendecomposition when the eigenvector
// matrix is well conditioned (cond < 1e8), otherwise iterated multiplication.
Matrix matrix_power(const Matrix& k, int t);

} // namespace klora
