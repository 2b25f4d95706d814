#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "klora/inference.hpp"

namespace klora {

// Elementwise (sigma_i^2 - sigma_hat_i^2) / sigma_i^2; negative values signal
// overestimates.
std::vector<double> rel_sq_sv_error(std::span<const double> sigma_true,
                                    std::span<const double> sigma_hat);

// max over estimates of the distance to the nearest reference eigenvalue.
double directed_hausdorff(std::span<const std::complex<double>> estimates,
                          std::span<const std::complex<double>> reference);

// VAMP-2 on evaluation pairs and the VAMP-E operator-approximation score of
// the rank-k aligned model. In moment form the VAMP-E score is
//   2 tr(T[phi~, psi~]) - tr(M_rho0[phi~] M_rho1[psi~]),
// the negated low-rank objective of the aligned functions.
struct VampScores {
    double vamp2 = 0.0;
    double vamp_e = 0.0;
    bool degraded_rank = false;
};

VampScores vamp_scores(const CcaModel& model, const WeightedData& eval_data);

double prediction_rmse(std::span<const double> predictions, std::span<const double> truths);

// tau = -dt / ln|lambda|; infinity for |lambda| >= 1, zero at lambda = 0.
double relaxation_time(std::complex<double> lambda, double dt);

// One evaluation run's named metrics plus reproducibility metadata. Values
// are finite or explicitly tagged diverged. Wall time is tracked for logs but
// excluded from the serialized rows so identical configs produce identical
// CSV bytes.
struct MetricReport {
    struct Entry {
        std::string metric;
        std::string index; // mode, horizon, or empty
        double value = 0.0;
        bool diverged = false;
    };
    std::vector<Entry> entries;
    uint64_t seed = 0;
    std::string config_hash;
    double wall_seconds = 0.0;

    void add(const std::string& metric, const std::string& index, double value);
};

} // namespace klora
