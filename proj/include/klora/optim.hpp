#pragma once

#include <vector>

#include "klora/tape.hpp"

namespace klora {

struct AdamState {
    long step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState create(size_t n_params, double lr);
};

// Standard bias-corrected Adam update. Throws numerical_error naming the
// offending parameter block when a gradient is non-finite.
void adam_step(AdamState& state, ParamVector& params, const std::vector<double>& grads);

// shadow <- decay * shadow + (1 - decay) * params
void ema_update(std::vector<double>& shadow, const std::vector<double>& params, double decay);

} // namespace klora
