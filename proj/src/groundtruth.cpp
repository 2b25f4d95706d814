#include "klora/groundtruth.hpp"

#include <cmath>

#include "klora/errors.hpp"
#include "klora/moments.hpp"

namespace klora {

namespace {

constexpr double kPi = 3.14159265358979323846;

double ipow(double base, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

} // namespace

QuadratureGrid uniform_grid_01(int n) {
    if (n < 2) throw invalid_input_error("uniform_grid_01: need at least 2 nodes");
    QuadratureGrid g;
    g.nodes.resize(n);
    g.weights.assign(n, 1.0 / n);
    for (int i = 0; i < n; ++i) g.nodes[i] = (i + 0.5) / n;
    return g;
}

void logistic_features(int order, double r, double x, std::span<double> alpha,
                       std::span<double> beta_breve) {
    const int rank = order + 1;
    if (static_cast<int>(alpha.size()) != rank || static_cast<int>(beta_breve.size()) != rank) {
        throw invalid_input_error("logistic_features: output spans must have length N+1");
    }
    const double log_cn = trig_noise_log_norm(order);
    double fx = std::fmod(r * x * (1.0 - x), 1.0);
    if (fx < 0.0) fx += 1.0;
    const double cb = std::cos(kPi * x), sb = std::sin(kPi * x);
    const double cf = std::cos(kPi * fx), sf = std::sin(kPi * fx);
    for (int i = 0; i < rank; ++i) {
        const double log_binom =
            std::lgamma(order + 1.0) - std::lgamma(i + 1.0) - std::lgamma(order - i + 1.0);
        const double coef = std::exp(0.5 * (log_cn + log_binom));
        beta_breve[i] = coef * ipow(cb, i) * ipow(sb, order - i);
        alpha[i] = coef * ipow(cf, i) * ipow(sf, order - i);
    }
}

Matrix eval_alpha(const FiniteRankKernel& k, std::span<const double> nodes) {
    const int rank = k.rank();
    Matrix a(static_cast<int>(nodes.size()), rank);
    std::vector<double> al(rank), bb(rank);
    for (size_t i = 0; i < nodes.size(); ++i) {
        logistic_features(k.order, k.r, nodes[i], al, bb);
        for (int j = 0; j < rank; ++j) a(static_cast<int>(i), j) = al[j];
    }
    return a;
}

Matrix eval_beta_breve(const FiniteRankKernel& k, std::span<const double> nodes) {
    const int rank = k.rank();
    Matrix b(static_cast<int>(nodes.size()), rank);
    std::vector<double> al(rank), bb(rank);
    for (size_t i = 0; i < nodes.size(); ++i) {
        logistic_features(k.order, k.r, nodes[i], al, bb);
        for (int j = 0; j < rank; ++j) b(static_cast<int>(i), j) = bb[j];
    }
    return b;
}

double kernel_density(const FiniteRankKernel& k, double x, double xp) {
    const int rank = k.rank();
    std::vector<double> ax(rank), bx(rank), ap(rank), bp(rank);
    logistic_features(k.order, k.r, x, ax, bx);
    logistic_features(k.order, k.r, xp, ap, bp);
    double s = 0.0;
    for (int i = 0; i < rank; ++i) s += ax[i] * bp[i];
    return s;
}

std::vector<double> stationary_density(const FiniteRankKernel& k, const QuadratureGrid& grid) {
    const int n = grid.size();
    if (n < 512) throw invalid_input_error("stationary_density: grid resolution must be >= 512");
    const int rank = k.rank();
    const Matrix a = eval_alpha(k, grid.nodes);
    const Matrix b = eval_beta_breve(k, grid.nodes);

    std::vector<double> pi(n, 1.0);
    std::vector<double> nxt(n);
    std::vector<double> proj(rank);
    for (int iter = 0; iter < 10000; ++iter) {
        // (pi P)(x') = sum_i (sum_x w pi(x) alpha_i(x)) breve_beta_i(x')
        for (int j = 0; j < rank; ++j) proj[j] = 0.0;
        for (int i = 0; i < n; ++i) {
            const double wpi = grid.weights[i] * pi[i];
            const double* ai = a.row(i);
            for (int j = 0; j < rank; ++j) proj[j] += wpi * ai[j];
        }
        double mass = 0.0;
        for (int i = 0; i < n; ++i) {
            const double* bi = b.row(i);
            double s = 0.0;
            for (int j = 0; j < rank; ++j) s += proj[j] * bi[j];
            nxt[i] = s;
            mass += grid.weights[i] * s;
        }
        double resid = 0.0;
        for (int i = 0; i < n; ++i) {
            nxt[i] /= mass;
            resid = std::max(resid, std::fabs(nxt[i] - pi[i]));
        }
        pi.swap(nxt);
        if (resid <= 1e-9) return pi;
    }
    throw numerical_error("stationary_density: power iteration did not converge");
}

QuadratureGrid stationary_grid(const FiniteRankKernel& k, int n_nodes) {
    QuadratureGrid g = uniform_grid_01(n_nodes);
    g.rho0 = stationary_density(k, g);
    g.rho1 = g.rho0;
    return g;
}

FiniteRankSvd finite_rank_svd(const FiniteRankKernel& k, const QuadratureGrid& grid) {
    const int n = grid.size();
    if (static_cast<int>(grid.rho0.size()) != n || static_cast<int>(grid.rho1.size()) != n) {
        throw invalid_input_error("finite_rank_svd: grid is missing density values");
    }
    const Matrix a = eval_alpha(k, grid.nodes);
    const Matrix bb = eval_beta_breve(k, grid.nodes);
    Matrix beta = bb;
    for (int i = 0; i < n; ++i) {
        double* r = beta.row(i);
        for (int j = 0; j < k.rank(); ++j) r[j] /= grid.rho1[i];
    }
    std::vector<double> w0(n), w1(n);
    for (int i = 0; i < n; ++i) {
        w0[i] = grid.weights[i] * grid.rho0[i];
        w1[i] = grid.weights[i] * grid.rho1[i];
    }
    const Matrix m_alpha = second_moment_weighted(a, w0);
    const Matrix m_beta = second_moment_weighted(beta, w1);

    FiniteRankSvd out;
    out.factors = svd(matmul(sqrt_psd(m_alpha), sqrt_psd(m_beta)));
    const Matrix wa = inv_sqrt_psd(m_alpha, 0.0);
    const Matrix wb = inv_sqrt_psd(m_beta, 0.0);
    out.coeff_phi = matmul_tn(out.factors.u, wa);
    out.coeff_psi = matmul_tn(out.factors.v, wb);
    return out;
}

Matrix eval_singular_phi(const FiniteRankKernel& k, const FiniteRankSvd& s,
                         std::span<const double> xs) {
    const Matrix a = eval_alpha(k, xs);
    return matmul_nt(a, s.coeff_phi);
}

Matrix eval_singular_psi(const FiniteRankKernel& k, const FiniteRankSvd& s,
                         std::span<const double> xs, const QuadratureGrid& grid) {
    // beta requires rho1; interpolate by nearest grid node (the grid is dense
    // and the density smooth)
    const Matrix bb = eval_beta_breve(k, xs);
    Matrix beta = bb;
    const int n = grid.size();
    for (size_t i = 0; i < xs.size(); ++i) {
        int idx = static_cast<int>(xs[i] * n);
        idx = std::min(std::max(idx, 0), n - 1);
        double* r = beta.row(static_cast<int>(i));
        for (int j = 0; j < k.rank(); ++j) r[j] /= grid.rho1[idx];
    }
    return matmul_nt(beta, s.coeff_psi);
}

FiniteRankSpectrum finite_rank_spectrum(const FiniteRankKernel& k, const QuadratureGrid& grid) {
    const int n = grid.size();
    if (static_cast<int>(grid.rho0.size()) != n || static_cast<int>(grid.rho1.size()) != n) {
        throw invalid_input_error("finite_rank_spectrum: grid is missing density values");
    }
    const Matrix a = eval_alpha(k, grid.nodes);
    const Matrix bb = eval_beta_breve(k, grid.nodes);
    // M_rho1[beta, alpha] = sum w rho1 (breve_beta / rho1) alpha^T; rho1 cancels
    const Matrix m1 = joint_moment_weighted(bb, a, grid.weights);
    // M_rho0[beta, alpha] = sum w (rho0 / rho1) breve_beta alpha^T
    std::vector<double> w01(n);
    for (int i = 0; i < n; ++i) w01[i] = grid.weights[i] * grid.rho0[i] / grid.rho1[i];
    const Matrix m0 = joint_moment_weighted(bb, a, w01);

    FiniteRankSpectrum out;
    out.right = eig_general(m1);
    out.left = eig_general(m0.transposed());
    return out;
}

GeneratorReference generator_reference(PotentialKind potential, double gamma, double kbt,
                                       double lo, double hi, int n_grid, int n_modes) {
    if (n_grid < 1024) throw invalid_input_error("generator_reference: n_grid must be >= 1024");
    if (hi <= lo) throw invalid_input_error("generator_reference: empty interval");
    GeneratorReference out;
    const double h = (hi - lo) / n_grid;
    out.spacing = h;
    out.nodes.resize(n_grid);
    std::vector<double> u(n_grid);
    for (int i = 0; i < n_grid; ++i) {
        out.nodes[i] = lo + (i + 0.5) * h;
        u[i] = potential_value(potential, out.nodes[i]);
    }

    // Symmetrized flux-form discretization, all weight ratios in log space.
    const double c = kbt / (gamma * h * h);
    out.sym_diag.assign(n_grid, 0.0);
    out.sym_off.assign(n_grid - 1, 0.0);
    for (int i = 0; i + 1 < n_grid; ++i) {
        const double u_half = potential_value(potential, lo + (i + 1.0) * h);
        out.sym_off[i] = c * std::exp((-u_half + 0.5 * (u[i] + u[i + 1])) / kbt);
        out.sym_diag[i] -= c * std::exp((u[i] - u_half) / kbt);
        out.sym_diag[i + 1] -= c * std::exp((u[i + 1] - u_half) / kbt);
    }

    TridiagEig eig = tridiag_eigh(out.sym_diag, out.sym_off, n_modes);
    out.eigenvalues.resize(n_modes);
    for (int m = 0; m < n_modes; ++m) out.eigenvalues[m] = eig.eigenvalues[n_grid - 1 - m];

    // stationary density, normalized against the largest value to avoid
    // underflow before scaling
    double umin = u[0];
    for (double uv : u) umin = std::min(umin, uv);
    out.stationary.resize(n_grid);
    double mass = 0.0;
    for (int i = 0; i < n_grid; ++i) {
        out.stationary[i] = std::exp(-(u[i] - umin) / kbt);
        mass += out.stationary[i] * h;
    }
    for (double& p : out.stationary) p /= mass;

    // map symmetric eigenvectors back: f = v / sqrt(pi), pi-normalized and
    // sign-aligned on the largest-magnitude entry
    out.eigenfunctions = Matrix(n_grid, n_modes);
    for (int m = 0; m < n_modes; ++m) {
        const auto& v = eig.top_vectors[m];
        double norm2 = 0.0;
        for (int i = 0; i < n_grid; ++i) {
            const double f = v[i] / std::sqrt(std::max(out.stationary[i], 1e-300));
            out.eigenfunctions(i, m) = f;
            norm2 += out.stationary[i] * f * f * h;
        }
        double scale = 1.0 / std::sqrt(norm2);
        int imax = 0;
        double vmax = 0.0;
        for (int i = 0; i < n_grid; ++i) {
            if (std::fabs(out.eigenfunctions(i, m)) > vmax) {
                vmax = std::fabs(out.eigenfunctions(i, m));
                imax = i;
            }
        }
        if (out.eigenfunctions(imax, m) < 0.0) scale = -scale;
        for (int i = 0; i < n_grid; ++i) out.eigenfunctions(i, m) *= scale;
    }
    return out;
}

} // namespace klora
