#pragma once

#include "klora/config.hpp"
#include "klora/encoder.hpp"
#include "klora/losses.hpp"
#include "klora/systems.hpp"

namespace klora::detail {

// Internal runner plumbing shared with the CLI tests.
struct TrajectoryBundle {
    std::vector<Trajectory> trajectories;
    PairDataset pairs;
};

int env_threads();
SystemSpec system_from_config(const Config& cfg);
std::vector<double> default_x0(const SystemSpec& spec);
EncoderSpec encoder_from_config(const Config& cfg, int input_dim);
LossConfig loss_from_config(const Config& cfg);
TrajectoryBundle build_trajectories(const Config& cfg, const SystemSpec& spec, uint64_t seed);
void write_trajectory_csv(const std::string& dir, const Trajectory& traj, const SystemSpec& spec,
                          uint64_t seed);

} // namespace klora::detail
