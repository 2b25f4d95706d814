#include "klora/optim.hpp"

#include <cmath>

#include "klora/errors.hpp"

namespace klora {

AdamState AdamState::create(size_t n_params, double lr_in) {
    AdamState s;
    s.m.assign(n_params, 0.0);
    s.v.assign(n_params, 0.0);
    s.lr = lr_in;
    return s;
}

void adam_step(AdamState& state, ParamVector& params, const std::vector<double>& grads) {
    if (grads.size() != params.size() || state.m.size() != params.size()) {
        throw invalid_input_error("adam_step: length mismatch");
    }
    for (const ParamBlock& b : params.layout) {
        for (size_t i = b.offset; i < b.offset + b.count(); ++i) {
            if (!std::isfinite(grads[i])) {
                throw numerical_error("adam_step: non-finite gradient in block " + b.name);
            }
        }
    }
    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

void ema_update(std::vector<double>& shadow, const std::vector<double>& params, double decay) {
    if (decay < 0.0 || decay >= 1.0) throw invalid_input_error("ema_update: decay must be in [0, 1)");
    if (shadow.size() != params.size()) throw invalid_input_error("ema_update: length mismatch");
    for (size_t i = 0; i < shadow.size(); ++i) {
        shadow[i] = decay * shadow[i] + (1.0 - decay) * params[i];
    }
}

} // namespace klora
