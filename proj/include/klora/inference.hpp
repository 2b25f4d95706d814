#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "klora/linalg.hpp"
#include "klora/systems.hpp"

namespace klora {

// Feature evaluation over a batch of states (rows), producing rows of
// features. Captures an encoder + parameters, a one-hot map, or an oracle
// basis.
using FeatureMap = std::function<Matrix(const Matrix&)>;

// Pairs plus marginal sample sets with explicit probability weights. The
// sample-based path uses uniform weights; exact-enumeration tests and
// quadrature oracles supply their own.
struct WeightedData {
    Matrix x, xp;
    std::vector<double> pair_weights;
    Matrix rho0_states, rho1_states;
    std::vector<double> rho0_weights, rho1_weights;
};

WeightedData weighted_from_pairs(const PairDataset& pairs);

// CCA-aligned model: whitening of both feature sets, SVD of the whitened
// joint moment, aligned singular functions
//   phi~(x) = Sigma^{1/2} U^T f~(x),  psi~(x') = Sigma^{1/2} V^T g~(x').
struct CcaModel {
    FeatureMap f, g;
    Matrix whiten_f, whiten_g;
    SvdFactors svd;
    Matrix rho0_states, rho1_states;
    std::vector<double> rho0_weights, rho1_weights;
    bool degraded_rank = false;

    int rank() const { return static_cast<int>(svd.sigma.size()); }
    Matrix whitened_f(const Matrix& states) const;
    Matrix whitened_g(const Matrix& states) const;
    Matrix aligned_phi(const Matrix& states) const;
    Matrix aligned_psi(const Matrix& states) const;
};

CcaModel cca_fit(const WeightedData& data, FeatureMap f, FeatureMap g);
CcaModel cca_fit(const PairDataset& pairs, FeatureMap f, FeatureMap g);

// Approximate Koopman matrices over the aligned functions and their spectra;
// right eigenfunctions are w^T phi~, left eigenfunctions z^T psi~.
struct CcaSpectrum {
    Matrix k_right; // M_rho1[psi~, phi~]
    Matrix k_left;  // M_rho0[psi~, phi~]
    ComplexSpectrum right;
    ComplexSpectrum left;
};

CcaSpectrum cca_spectrum(const CcaModel& model);

struct ObservableCoeffs {
    std::vector<double> z;
    std::string basis; // "psi_aligned", "phi_aligned", or "b"
};

enum class Direction { forward, backward };

// Multi-step prediction through the aligned functions; t >= 1. Forward:
// phi~(x0)^T K_right^{t-1} <h, psi~>_rho1 with h = z^T psi~; backward swaps
// the roles and transposes K_left.
double cca_predict(const CcaModel& model, std::span<const double> x0, const ObservableCoeffs& h,
                   int t, Direction dir);

// Same prediction with <h, .> estimated directly from h sampled on the stored
// marginal states.
double cca_predict_samples(const CcaModel& model, std::span<const double> x0,
                           std::span<const double> h_samples, int t, Direction dir);

ObservableCoeffs project_observable_psi(const CcaModel& model, std::span<const double> h_on_rho1);
ObservableCoeffs project_observable_phi(const CcaModel& model, std::span<const double> h_on_rho0);

// Rank-k transition kernel value phi~(x)^T psi~(x').
double kernel_eval(const CcaModel& model, std::span<const double> x, std::span<const double> xp);

// Least-squares (EDMD) Koopman matrices over a single basis b:
//   forward (M_rho0[b])^+ T[b],  backward (M_rho1[b])^+ T[b]^T.
struct EdmdModel {
    FeatureMap b;
    Matrix k_forward, k_backward;
    Matrix m0_pinv, m1_pinv;
    Matrix rho0_states, rho1_states;
    std::vector<double> rho0_weights, rho1_weights;
};

EdmdModel edmd_fit(const WeightedData& data, FeatureMap b, double rtol = 1e-10);
EdmdModel edmd_fit(const PairDataset& pairs, FeatureMap b, double rtol = 1e-10);

// t >= 0 steps; h is given by its samples on the rho0 marginals (forward) or
// rho1 marginals (backward).
double edmd_predict(const EdmdModel& model, std::span<const double> x0,
                    std::span<const double> h_samples, int t, Direction dir);

// First `prefix` aligned functions as a feature map (basis for EDMD sweeps).
FeatureMap aligned_phi_map(const CcaModel& model, int prefix);
FeatureMap aligned_psi_map(const CcaModel& model, int prefix);

// Per-mode singular value estimates T_ii / sqrt((M_f)_ii (M_g)_ii) before any
// CCA correction; meaningful when training orders the modes.
std::vector<double> per_mode_sv_estimate(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g);

} // namespace klora
