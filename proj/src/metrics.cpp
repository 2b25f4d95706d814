#include "klora/metrics.hpp"

#include <cmath>

#include "klora/errors.hpp"
#include "klora/losses.hpp"
#include "klora/moments.hpp"

namespace klora {

std::vector<double> rel_sq_sv_error(std::span<const double> sigma_true,
                                    std::span<const double> sigma_hat) {
    if (sigma_true.size() != sigma_hat.size()) {
        throw invalid_input_error("rel_sq_sv_error: length mismatch");
    }
    std::vector<double> out(sigma_true.size());
    for (size_t i = 0; i < sigma_true.size(); ++i) {
        if (sigma_true[i] <= 0.0) throw invalid_input_error("rel_sq_sv_error: sigma_true must be > 0");
        const double s2 = sigma_true[i] * sigma_true[i];
        out[i] = (s2 - sigma_hat[i] * sigma_hat[i]) / s2;
    }
    return out;
}

double directed_hausdorff(std::span<const std::complex<double>> estimates,
                          std::span<const std::complex<double>> reference) {
    if (estimates.empty() || reference.empty()) {
        throw invalid_input_error("directed_hausdorff: empty set");
    }
    double worst = 0.0;
    for (const auto& e : estimates) {
        double best = HUGE_VAL;
        for (const auto& r : reference) best = std::min(best, std::abs(e - r));
        worst = std::max(worst, best);
    }
    return worst;
}

VampScores vamp_scores(const CcaModel& model, const WeightedData& eval_data) {
    VampScores s;
    const Matrix f0 = model.f(eval_data.rho0_states);
    const Matrix g1 = model.g(eval_data.rho1_states);
    const Matrix mf = second_moment_weighted(f0, eval_data.rho0_weights);
    const Matrix mg = second_moment_weighted(g1, eval_data.rho1_weights);
    const Matrix t =
        joint_moment_weighted(model.f(eval_data.x), model.g(eval_data.xp), eval_data.pair_weights);
    {
        SymEig ef = sym_eigh(mf);
        SymEig eg = sym_eigh(mg);
        if (ef.eigenvalues.back() < default_eigen_floor(mf) ||
            eg.eigenvalues.back() < default_eigen_floor(mg)) {
            s.degraded_rank = true;
        }
    }
    const Matrix wf = inv_sqrt_psd(mf, default_eigen_floor(mf));
    const Matrix wg = inv_sqrt_psd(mg, default_eigen_floor(mg));
    const double fn = matmul(matmul(wf, t), wg).frobenius_norm();
    s.vamp2 = fn * fn;

    const Matrix phi_x = model.aligned_phi(eval_data.x);
    const Matrix psi_xp = model.aligned_psi(eval_data.xp);
    const Matrix t_aligned = joint_moment_weighted(phi_x, psi_xp, eval_data.pair_weights);
    const Matrix m_phi = second_moment_weighted(model.aligned_phi(eval_data.rho0_states),
                                                eval_data.rho0_weights);
    const Matrix m_psi = second_moment_weighted(model.aligned_psi(eval_data.rho1_states),
                                                eval_data.rho1_weights);
    s.vamp_e = -lora_value(t_aligned, m_phi, m_psi);
    return s;
}

double prediction_rmse(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.size() != truths.size()) {
        throw invalid_input_error("prediction_rmse: length mismatch");
    }
    if (predictions.empty()) throw invalid_input_error("prediction_rmse: empty input");
    double s = 0.0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - truths[i];
        s += d * d;
    }
    return std::sqrt(s / predictions.size());
}

double relaxation_time(std::complex<double> lambda, double dt) {
    const double mod = std::abs(lambda);
    if (mod >= 1.0) return HUGE_VAL;
    if (mod == 0.0) return 0.0;
    return -dt / std::log(mod);
}

void MetricReport::add(const std::string& metric, const std::string& index, double value) {
    Entry e;
    e.metric = metric;
    e.index = index;
    e.value = value;
    e.diverged = !std::isfinite(value);
    entries.push_back(std::move(e));
}

} // namespace klora
