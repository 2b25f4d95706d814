#pragma once

#include <cstdint>
#include <string>

#include "klora/checkpoint.hpp"
#include "klora/encoder.hpp"
#include "klora/inference.hpp"
#include "klora/losses.hpp"
#include "klora/optim.hpp"
#include "klora/systems.hpp"

namespace klora {

struct TrainConfig {
    LossConfig loss;
    EncoderSpec enc_f;
    EncoderSpec enc_g;
    double lr = 1e-3;
    int batch = 128;
    int epochs = 100;
    long iterations = 0; // > 0 switches to iteration-based sampling
    uint64_t seed = 1;
    double ema_decay = 0.0; // 0 disables
    bool split_moments = false;
    // generator objective only
    double jet_step = kDefaultJetStep;
    PotentialKind potential = PotentialKind::schwantes;
    double gamma = 0.1;
    double kbt = 1.0;
    int log_every = 0; // iteration-based logging interval; 0 = auto
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<long> log_steps;
    std::vector<double> log_losses;
    bool diverged = false;
    std::string divergence_reason;
};

// Minibatch training of (f, g) encoders under any pair-based objective.
TrainResult train_pairs(const TrainConfig& cfg, const PairDataset& pairs);

// Training of a single encoder under the generator objective on 1D states.
TrainResult train_generator(const TrainConfig& cfg, const Matrix& states);

// Parameter blocks belonging to one encoder, by name prefix ("f" or "g").
std::vector<int> encoder_blocks(const ParamVector& params, const std::string& prefix);

// Feature map closure over an encoder and a parameter snapshot.
FeatureMap make_feature_map(const EncoderSpec& spec, const ParamVector& params,
                            const std::string& prefix);

// Fresh seeded parameter vector holding both encoders (or only f when
// `with_g` is false).
ParamVector init_params(const EncoderSpec& enc_f, const EncoderSpec& enc_g, bool with_g,
                        uint64_t seed);

} // namespace klora
