#include "klora/inference.hpp"

#include <cmath>

#include "klora/errors.hpp"
#include "klora/moments.hpp"

namespace klora {

namespace {

Matrix gather_rows(const Matrix& src, const std::vector<int>& idx) {
    Matrix out(static_cast<int>(idx.size()), src.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        for (int j = 0; j < src.cols(); ++j) out(static_cast<int>(i), j) = src(idx[i], j);
    }
    return out;
}

Matrix single_row(std::span<const double> x) {
    Matrix m(1, static_cast<int>(x.size()));
    for (size_t j = 0; j < x.size(); ++j) m(0, static_cast<size_t>(j)) = x[j];
    return m;
}

std::vector<double> weighted_inner(const Matrix& basis_rows, std::span<const double> h,
                                   std::span<const double> w) {
    std::vector<double> q(basis_rows.cols(), 0.0);
    for (int i = 0; i < basis_rows.rows(); ++i) {
        const double hw = h[i] * w[i];
        const double* r = basis_rows.row(i);
        for (int j = 0; j < basis_rows.cols(); ++j) q[j] += hw * r[j];
    }
    return q;
}

} // namespace

WeightedData weighted_from_pairs(const PairDataset& pairs) {
    WeightedData d;
    d.x = pairs.x;
    d.xp = pairs.xp;
    d.pair_weights.assign(pairs.size(), 1.0 / pairs.size());
    d.rho0_states = gather_rows(pairs.x, pairs.rho0_samples);
    d.rho1_states = gather_rows(pairs.xp, pairs.rho1_samples);
    d.rho0_weights.assign(pairs.rho0_samples.size(), 1.0 / pairs.rho0_samples.size());
    d.rho1_weights.assign(pairs.rho1_samples.size(), 1.0 / pairs.rho1_samples.size());
    return d;
}

Matrix CcaModel::whitened_f(const Matrix& states) const { return matmul_nt(f(states), whiten_f); }
Matrix CcaModel::whitened_g(const Matrix& states) const { return matmul_nt(g(states), whiten_g); }

Matrix CcaModel::aligned_phi(const Matrix& states) const {
    // rows phi~(x)^T = f~(x)^T U Sigma^{1/2}
    Matrix fu = matmul(whitened_f(states), svd.u);
    for (int i = 0; i < fu.rows(); ++i) {
        double* r = fu.row(i);
        for (int j = 0; j < fu.cols(); ++j) r[j] *= std::sqrt(std::max(svd.sigma[j], 0.0));
    }
    return fu;
}

Matrix CcaModel::aligned_psi(const Matrix& states) const {
    Matrix gv = matmul(whitened_g(states), svd.v);
    for (int i = 0; i < gv.rows(); ++i) {
        double* r = gv.row(i);
        for (int j = 0; j < gv.cols(); ++j) r[j] *= std::sqrt(std::max(svd.sigma[j], 0.0));
    }
    return gv;
}

CcaModel cca_fit(const WeightedData& data, FeatureMap f, FeatureMap g) {
    if (data.x.rows() == 0) throw invalid_input_error("cca_fit: empty pair set");
    CcaModel m;
    m.f = std::move(f);
    m.g = std::move(g);
    m.rho0_states = data.rho0_states;
    m.rho1_states = data.rho1_states;
    m.rho0_weights = data.rho0_weights;
    m.rho1_weights = data.rho1_weights;

    const Matrix f0 = m.f(data.rho0_states);
    const Matrix g1 = m.g(data.rho1_states);
    if (data.x.rows() < f0.cols()) throw invalid_input_error("cca_fit: need at least k pairs");
    const Matrix mf = second_moment_weighted(f0, data.rho0_weights);
    const Matrix mg = second_moment_weighted(g1, data.rho1_weights);

    const double floor_f = default_eigen_floor(mf);
    const double floor_g = default_eigen_floor(mg);
    for (const Matrix* mm : {&mf, &mg}) {
        SymEig e = sym_eigh(*mm);
        const double floor = mm == &mf ? floor_f : floor_g;
        if (e.eigenvalues.back() < floor) m.degraded_rank = true;
    }
    m.whiten_f = inv_sqrt_psd(mf, floor_f);
    m.whiten_g = inv_sqrt_psd(mg, floor_g);

    const Matrix ft = matmul_nt(m.f(data.x), m.whiten_f);
    const Matrix gt = matmul_nt(m.g(data.xp), m.whiten_g);
    m.svd = svd(joint_moment_weighted(ft, gt, data.pair_weights));
    return m;
}

CcaModel cca_fit(const PairDataset& pairs, FeatureMap f, FeatureMap g) {
    return cca_fit(weighted_from_pairs(pairs), std::move(f), std::move(g));
}

CcaSpectrum cca_spectrum(const CcaModel& model) {
    CcaSpectrum s;
    const Matrix phi1 = model.aligned_phi(model.rho1_states);
    const Matrix psi1 = model.aligned_psi(model.rho1_states);
    s.k_right = joint_moment_weighted(psi1, phi1, model.rho1_weights);
    const Matrix phi0 = model.aligned_phi(model.rho0_states);
    const Matrix psi0 = model.aligned_psi(model.rho0_states);
    s.k_left = joint_moment_weighted(psi0, phi0, model.rho0_weights);
    s.right = eig_general(s.k_right);
    s.left = eig_general(s.k_left.transposed());
    return s;
}

double cca_predict(const CcaModel& model, std::span<const double> x0, const ObservableCoeffs& h,
                   int t, Direction dir) {
    if (t < 1) throw invalid_input_error("cca_predict: t must be >= 1");
    const int r = model.rank();
    if (static_cast<int>(h.z.size()) != r) {
        throw invalid_input_error("cca_predict: coefficient length does not match rank");
    }
    const CcaSpectrum spec = cca_spectrum(model);
    if (dir == Direction::forward) {
        // q = <h, psi~>_rho1 = M_rho1[psi~] z
        const Matrix psi1 = model.aligned_psi(model.rho1_states);
        const Matrix mpsi = second_moment_weighted(psi1, model.rho1_weights);
        std::vector<double> q(r, 0.0);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < r; ++j) q[i] += mpsi(i, j) * h.z[j];
        }
        const Matrix kp = matrix_power(spec.k_right, t - 1);
        const Matrix phi0 = model.aligned_phi(single_row(x0));
        double out = 0.0;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < r; ++j) out += phi0(0, i) * kp(i, j) * q[j];
        }
        return out;
    }
    const Matrix phi0 = model.aligned_phi(model.rho0_states);
    const Matrix mphi = second_moment_weighted(phi0, model.rho0_weights);
    std::vector<double> q(r, 0.0);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) q[i] += mphi(i, j) * h.z[j];
    }
    const Matrix kp = matrix_power(spec.k_left.transposed(), t - 1);
    const Matrix psit = model.aligned_psi(single_row(x0));
    double out = 0.0;
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) out += psit(0, i) * kp(i, j) * q[j];
    }
    return out;
}

double cca_predict_samples(const CcaModel& model, std::span<const double> x0,
                           std::span<const double> h_samples, int t, Direction dir) {
    if (t < 1) throw invalid_input_error("cca_predict_samples: t must be >= 1");
    const CcaSpectrum spec = cca_spectrum(model);
    const int r = model.rank();
    if (dir == Direction::forward) {
        const Matrix psi1 = model.aligned_psi(model.rho1_states);
        const std::vector<double> q = weighted_inner(psi1, h_samples, model.rho1_weights);
        const Matrix kp = matrix_power(spec.k_right, t - 1);
        const Matrix phi0 = model.aligned_phi(single_row(x0));
        double out = 0.0;
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) out += phi0(0, i) * kp(i, j) * q[j];
        return out;
    }
    const Matrix phi0 = model.aligned_phi(model.rho0_states);
    const std::vector<double> q = weighted_inner(phi0, h_samples, model.rho0_weights);
    const Matrix kp = matrix_power(spec.k_left.transposed(), t - 1);
    const Matrix psit = model.aligned_psi(single_row(x0));
    double out = 0.0;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) out += psit(0, i) * kp(i, j) * q[j];
    return out;
}

ObservableCoeffs project_observable_psi(const CcaModel& model, std::span<const double> h_on_rho1) {
    const Matrix psi1 = model.aligned_psi(model.rho1_states);
    const Matrix mpsi = second_moment_weighted(psi1, model.rho1_weights);
    const std::vector<double> q = weighted_inner(psi1, h_on_rho1, model.rho1_weights);
    const Matrix pinv = pinv_psd(mpsi);
    ObservableCoeffs c;
    c.basis = "psi_aligned";
    c.z.assign(model.rank(), 0.0);
    for (int i = 0; i < model.rank(); ++i)
        for (int j = 0; j < model.rank(); ++j) c.z[i] += pinv(i, j) * q[j];
    return c;
}

ObservableCoeffs project_observable_phi(const CcaModel& model, std::span<const double> h_on_rho0) {
    const Matrix phi0 = model.aligned_phi(model.rho0_states);
    const Matrix mphi = second_moment_weighted(phi0, model.rho0_weights);
    const std::vector<double> q = weighted_inner(phi0, h_on_rho0, model.rho0_weights);
    const Matrix pinv = pinv_psd(mphi);
    ObservableCoeffs c;
    c.basis = "phi_aligned";
    c.z.assign(model.rank(), 0.0);
    for (int i = 0; i < model.rank(); ++i)
        for (int j = 0; j < model.rank(); ++j) c.z[i] += pinv(i, j) * q[j];
    return c;
}

double kernel_eval(const CcaModel& model, std::span<const double> x, std::span<const double> xp) {
    const Matrix phi = model.aligned_phi(single_row(x));
    const Matrix psi = model.aligned_psi(single_row(xp));
    double s = 0.0;
    for (int j = 0; j < model.rank(); ++j) s += phi(0, j) * psi(0, j);
    return s;
}

EdmdModel edmd_fit(const WeightedData& data, FeatureMap b, double rtol) {
    EdmdModel m;
    m.b = std::move(b);
    m.rho0_states = data.rho0_states;
    m.rho1_states = data.rho1_states;
    m.rho0_weights = data.rho0_weights;
    m.rho1_weights = data.rho1_weights;

    const Matrix b0 = m.b(data.rho0_states);
    const Matrix b1 = m.b(data.rho1_states);
    const Matrix m0 = second_moment_weighted(b0, data.rho0_weights);
    const Matrix m1 = second_moment_weighted(b1, data.rho1_weights);
    const Matrix t = joint_moment_weighted(m.b(data.x), m.b(data.xp), data.pair_weights);

    m.m0_pinv = pinv_psd(m0, rtol);
    m.m1_pinv = pinv_psd(m1, rtol);
    m.k_forward = matmul(m.m0_pinv, t);
    m.k_backward = matmul(m.m1_pinv, t.transposed());
    return m;
}

EdmdModel edmd_fit(const PairDataset& pairs, FeatureMap b, double rtol) {
    return edmd_fit(weighted_from_pairs(pairs), std::move(b), rtol);
}

double edmd_predict(const EdmdModel& model, std::span<const double> x0,
                    std::span<const double> h_samples, int t, Direction dir) {
    if (t < 0) throw invalid_input_error("edmd_predict: t must be >= 0");
    const Matrix bx = model.b(single_row(x0));
    const int k = bx.cols();
    const bool fwd = dir == Direction::forward;
    const Matrix& marg = fwd ? model.rho0_states : model.rho1_states;
    const std::vector<double>& w = fwd ? model.rho0_weights : model.rho1_weights;
    if (static_cast<int>(h_samples.size()) != marg.rows()) {
        throw invalid_input_error("edmd_predict: observable sample count does not match marginals");
    }
    const Matrix basis = model.b(marg);
    const std::vector<double> hb = weighted_inner(basis, h_samples, w);
    const Matrix& pinv = fwd ? model.m0_pinv : model.m1_pinv;
    std::vector<double> z(k, 0.0);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) z[i] += pinv(i, j) * hb[j];
    const Matrix kp = matrix_power(fwd ? model.k_forward : model.k_backward, t);
    double out = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) out += bx(0, i) * kp(i, j) * z[j];
    return out;
}

FeatureMap aligned_phi_map(const CcaModel& model, int prefix) {
    if (prefix < 1 || prefix > model.rank()) throw invalid_input_error("aligned_phi_map: bad prefix");
    CcaModel copy = model;
    return [copy, prefix](const Matrix& states) {
        Matrix full = copy.aligned_phi(states);
        Matrix out(full.rows(), prefix);
        for (int i = 0; i < full.rows(); ++i)
            for (int j = 0; j < prefix; ++j) out(i, j) = full(i, j);
        return out;
    };
}

FeatureMap aligned_psi_map(const CcaModel& model, int prefix) {
    if (prefix < 1 || prefix > model.rank()) throw invalid_input_error("aligned_psi_map: bad prefix");
    CcaModel copy = model;
    return [copy, prefix](const Matrix& states) {
        Matrix full = copy.aligned_psi(states);
        Matrix out(full.rows(), prefix);
        for (int i = 0; i < full.rows(); ++i)
            for (int j = 0; j < prefix; ++j) out(i, j) = full(i, j);
        return out;
    };
}

std::vector<double> per_mode_sv_estimate(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g) {
    const int k = t_fg.rows();
    std::vector<double> s(k, 0.0);
    for (int i = 0; i < k; ++i) {
        const double den = std::sqrt(m_f(i, i) * m_g(i, i));
        s[i] = den > 0.0 ? t_fg(i, i) / den : 0.0;
    }
    return s;
}

} // namespace klora
