#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "klora/matrix.hpp"
#include "klora/rng.hpp"

namespace klora {

// n_states x d states visited in order; dt = 1 for discrete maps.
struct Trajectory {
    Matrix states;
    double dt = 1.0;
    std::string system;
};

// Consecutive (x, x') pairs pooled from trajectories. rho0_samples /
// rho1_samples index rows of x and xp respectively and carry the marginal
// roles of current and lagged states.
struct PairDataset {
    Matrix x;
    Matrix xp;
    std::vector<int> rho0_samples;
    std::vector<int> rho1_samples;
    int size() const { return x.rows(); }
};

enum class SystemKind { logistic, langevin, finite_chain, cyclic_gaussian };

enum class PotentialKind { schwantes, harmonic };

struct SystemSpec {
    SystemKind kind = SystemKind::logistic;
    // logistic
    double r = 4.0;
    int noise_order = 20; // must be even
    // langevin
    PotentialKind potential = PotentialKind::schwantes;
    double gamma = 0.1;
    double kbt = 1.0;
    double dt = 1e-3;
    // finite chain
    Matrix transition; // row-stochastic
    // cyclic gaussian
    int n_clusters = 5;
    int emission_dim = 16;
    double spread = 0.3;

    int state_dim() const;
    void validate() const;
};

// One draw of the order-N trigonometric noise p(xi) = C_N cos^N(pi xi) on
// [-0.5, 0.5], by rejection from the uniform envelope.
double sample_trig_noise(int order, Rng& rng);

// log C_N with C_N = pi / B((N+1)/2, 1/2), via lgamma.
double trig_noise_log_norm(int order);
double trig_noise_density(int order, double xi);

// Schwantes potential and its closed-form derivative.
double schwantes_potential(double x);
double schwantes_dpotential(double x);

double potential_value(PotentialKind kind, double x);
double potential_derivative(PotentialKind kind, double x);

// Simulate n_steps transitions from x0 (so n_steps + 1 states). For the
// finite chain, states are the state indices; for the cyclic-Gaussian system
// they are the emissions.
Trajectory simulate(const SystemSpec& spec, std::span<const double> x0, int n_steps, Rng& rng);

// Convenience wrapper generating n_traj independent trajectories with seeds
// derived per trajectory; max_threads > 1 runs them on a small worker pool
// (results are identical either way).
std::vector<Trajectory> simulate_many(const SystemSpec& spec, std::span<const double> x0,
                                      int n_steps, uint64_t seed, int n_traj, int max_threads = 1);

// Pool consecutive pairs across trajectories at the given lag.
PairDataset make_pairs(const std::vector<Trajectory>& trajectories, int lag = 1);

// Cluster centers of the cyclic-Gaussian system (simplex vertices, pairwise
// distance 2) and the nearest-center label of an emission.
Matrix cyclic_gaussian_centers(int n_clusters, int emission_dim);
int cyclic_gaussian_label(const Matrix& centers, std::span<const double> x);

} // namespace klora
