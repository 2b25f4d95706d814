#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "klora/encoder.hpp"
#include "klora/tape.hpp"

namespace klora {

// On-disk model state: a text header describing the encoders, layout, seed
// and step, followed by the flat parameter array (and optionally its EMA
// shadow) as little-endian 64-bit floats. Exact layout documented in the
// repository README.
struct Checkpoint {
    EncoderSpec spec_f;
    std::optional<EncoderSpec> spec_g; // absent for generator models
    ParamVector params;
    std::vector<double> ema; // empty when EMA disabled
    uint64_t seed = 0;
    long step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace klora
