#pragma once

#include <span>
#include <vector>

#include "klora/linalg.hpp"
#include "klora/matrix.hpp"
#include "klora/systems.hpp"

namespace klora {

// Midpoint quadrature on [0, 1) with per-node values of the marginal
// densities. For the single-long-trajectory setting both marginals are the
// stationary density.
struct QuadratureGrid {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::vector<double> rho0;
    std::vector<double> rho1;
    int size() const { return static_cast<int>(nodes.size()); }
};

QuadratureGrid uniform_grid_01(int n);

// Rank-(N+1) factorization of the noisy logistic map transition density,
// p(x'|x) = sum_i alpha_i(x) breve_beta_i(x').
struct FiniteRankKernel {
    double r = 4.0;
    int order = 20; // even
    int rank() const { return order + 1; }
};

// breve_beta_i(x) = sqrt(C_N binom(N,i)) cos^i(pi x) sin^{N-i}(pi x) and
// alpha_i(x) = breve_beta_i(F(x) mod 1); binomials and C_N via lgamma.
void logistic_features(int order, double r, double x, std::span<double> alpha,
                       std::span<double> beta_breve);

// Feature matrices over grid nodes (rows = nodes).
Matrix eval_alpha(const FiniteRankKernel& k, std::span<const double> nodes);
Matrix eval_beta_breve(const FiniteRankKernel& k, std::span<const double> nodes);

// p(x'|x) at a pair of points.
double kernel_density(const FiniteRankKernel& k, double x, double xp);

// Power iteration of the quadrature-discretized transfer operator to its
// fixed point (max-abs residual <= 1e-9).
std::vector<double> stationary_density(const FiniteRankKernel& k, const QuadratureGrid& grid);

// Fills rho0 = rho1 = stationary density on the grid.
QuadratureGrid stationary_grid(const FiniteRankKernel& k, int n_nodes);

// SVD of (M_rho0[alpha])^{1/2} (M_rho1[beta])^{1/2} with beta = breve_beta /
// rho1. Singular functions: phi(x) = coeff_phi alpha(x), psi(x') = coeff_psi
// beta(x').
struct FiniteRankSvd {
    SvdFactors factors;
    Matrix coeff_phi;
    Matrix coeff_psi;
};

FiniteRankSvd finite_rank_svd(const FiniteRankKernel& k, const QuadratureGrid& grid);

// Evaluate the ordered singular functions on arbitrary points (rows = points,
// cols = modes).
Matrix eval_singular_phi(const FiniteRankKernel& k, const FiniteRankSvd& s,
                         std::span<const double> xs);
Matrix eval_singular_psi(const FiniteRankKernel& k, const FiniteRankSvd& s,
                         std::span<const double> xs, const QuadratureGrid& grid);

// Right eigenpairs from M_rho1[beta, alpha] (eigenfunction w^T alpha) and left
// eigenpairs from M_rho0[beta, alpha]^T (eigenfunction z^T beta).
struct FiniteRankSpectrum {
    ComplexSpectrum right;
    ComplexSpectrum left;
};

FiniteRankSpectrum finite_rank_spectrum(const FiniteRankKernel& k, const QuadratureGrid& grid);

// Dense finite-difference reference for the 1D overdamped generator
// L f = (1/gamma)(-U' f' + kBT f'') on [lo, hi] with reflecting boundaries.
// The flux form (kBT/gamma) pi^{-1} (pi f')' is discretized by finite volumes
// and symmetrized by the sqrt(pi) similarity transform, so a symmetric
// tridiagonal eigensolver applies.
struct GeneratorReference {
    std::vector<double> nodes;
    double spacing = 0.0;
    std::vector<double> eigenvalues;  // descending, eigenvalue 0 first
    Matrix eigenfunctions;            // n_grid x n_modes, pi-orthonormal, sign-aligned
    std::vector<double> stationary;   // normalized pi on the grid
    std::vector<double> sym_diag;     // symmetrized tridiagonal matrix, for checks
    std::vector<double> sym_off;
};

GeneratorReference generator_reference(PotentialKind potential, double gamma, double kbt,
                                       double lo, double hi, int n_grid, int n_modes);

} // namespace klora
