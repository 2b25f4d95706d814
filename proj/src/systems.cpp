#include "klora/systems.hpp"

#include <cmath>
#include <thread>

#include "klora/errors.hpp"

namespace klora {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

int SystemSpec::state_dim() const {
    switch (kind) {
        case SystemKind::logistic: return 1;
        case SystemKind::langevin: return 1;
        case SystemKind::finite_chain: return 1;
        case SystemKind::cyclic_gaussian: return emission_dim;
    }
    return 1;
}

void SystemSpec::validate() const {
    switch (kind) {
        case SystemKind::logistic:
            if (r <= 0.0) throw invalid_input_error("logistic: r must be positive");
            if (noise_order < 0 || noise_order % 2 != 0) {
                throw invalid_input_error("logistic: noise order must be even and non-negative");
            }
            break;
        case SystemKind::langevin:
            if (gamma <= 0.0 || kbt <= 0.0 || dt <= 0.0) {
                throw invalid_input_error("langevin: gamma, kbt, dt must be positive");
            }
            break;
        case SystemKind::finite_chain: {
            if (transition.rows() == 0 || transition.rows() != transition.cols()) {
                throw invalid_input_error("finite_chain: transition matrix must be square");
            }
            for (int i = 0; i < transition.rows(); ++i) {
                double s = 0.0;
                for (int j = 0; j < transition.cols(); ++j) {
                    if (transition(i, j) < 0.0) {
                        throw invalid_input_error("finite_chain: negative transition probability");
                    }
                    s += transition(i, j);
                }
                if (std::fabs(s - 1.0) > 1e-12) {
                    throw invalid_input_error("finite_chain: transition rows must sum to 1");
                }
            }
            break;
        }
        case SystemKind::cyclic_gaussian:
            if (n_clusters < 2 || spread <= 0.0 || emission_dim < n_clusters) {
                throw invalid_input_error("cyclic_gaussian: need K >= 2, sigma > 0, d >= K");
            }
            break;
    }
}

double trig_noise_log_norm(int order) {
    // C_N = pi / B((N+1)/2, 1/2)
    const double a = 0.5 * (order + 1);
    const double lb = std::lgamma(a) + std::lgamma(0.5) - std::lgamma(a + 0.5);
    return std::log(kPi) - lb;
}

double trig_noise_density(int order, double xi) {
    if (xi < -0.5 || xi > 0.5) return 0.0;
    return std::exp(trig_noise_log_norm(order)) * std::pow(std::cos(kPi * xi), order);
}

double sample_trig_noise(int order, Rng& rng) {
    if (order < 0) throw invalid_input_error("sample_trig_noise: order must be >= 0");
    if (order == 0) return rng.uniform(-0.5, 0.5);
    // rejection from the uniform envelope; acceptance probability 1/C_N
    for (;;) {
        const double xi = rng.uniform(-0.5, 0.5);
        const double u = rng.uniform01();
        if (u <= std::pow(std::cos(kPi * xi), order)) return xi;
    }
}

double schwantes_potential(double x) {
    const double x2 = x * x;
    return 4.0 * (x2 * x2 * x2 * x2 + 0.8 * std::exp(-80.0 * x2) +
                  0.2 * std::exp(-80.0 * (x - 0.5) * (x - 0.5)) +
                  0.5 * std::exp(-40.0 * (x + 0.5) * (x + 0.5)));
}

double schwantes_dpotential(double x) {
    return 32.0 * std::pow(x, 7) - 512.0 * x * std::exp(-80.0 * x * x) -
           128.0 * (x - 0.5) * std::exp(-80.0 * (x - 0.5) * (x - 0.5)) -
           160.0 * (x + 0.5) * std::exp(-40.0 * (x + 0.5) * (x + 0.5));
}

double potential_value(PotentialKind kind, double x) {
    return kind == PotentialKind::schwantes ? schwantes_potential(x) : 0.5 * x * x;
}

double potential_derivative(PotentialKind kind, double x) {
    return kind == PotentialKind::schwantes ? schwantes_dpotential(x) : x;
}

Trajectory simulate(const SystemSpec& spec, std::span<const double> x0, int n_steps, Rng& rng) {
    spec.validate();
    if (n_steps < 1) throw invalid_input_error("simulate: n_steps must be >= 1");
    const int d = spec.state_dim();
    if (static_cast<int>(x0.size()) != d) {
        throw invalid_input_error("simulate: x0 dimension does not match system");
    }

    Trajectory traj;
    traj.states = Matrix(n_steps + 1, d);
    traj.dt = spec.kind == SystemKind::langevin ? spec.dt : 1.0;

    switch (spec.kind) {
        case SystemKind::logistic: {
            traj.system = "logistic";
            double x = x0[0];
            if (x < 0.0 || x >= 1.0) throw invalid_input_error("logistic: x0 must be in [0,1)");
            traj.states(0, 0) = x;
            for (int t = 1; t <= n_steps; ++t) {
                const double xi = sample_trig_noise(spec.noise_order, rng);
                double y = std::fmod(spec.r * x * (1.0 - x) + xi, 1.0);
                if (y < 0.0) y += 1.0;
                if (y >= 1.0) y = 0.0;
                if (y < 0.0 || y >= 1.0) throw numerical_error("logistic: state escaped [0,1)");
                x = y;
                traj.states(t, 0) = x;
            }
            break;
        }
        case SystemKind::langevin: {
            traj.system = "langevin";
            double x = x0[0];
            traj.states(0, 0) = x;
            const double drift = spec.dt / spec.gamma;
            const double noise = std::sqrt(2.0 * spec.kbt * spec.dt / spec.gamma);
            for (int t = 1; t <= n_steps; ++t) {
                x += -drift * potential_derivative(spec.potential, x) + noise * rng.normal();
                traj.states(t, 0) = x;
            }
            break;
        }
        case SystemKind::finite_chain: {
            traj.system = "finite_chain";
            int s = static_cast<int>(x0[0]);
            if (s < 0 || s >= spec.transition.rows()) {
                throw invalid_input_error("finite_chain: x0 out of range");
            }
            traj.states(0, 0) = s;
            for (int t = 1; t <= n_steps; ++t) {
                const double u = rng.uniform01();
                double acc = 0.0;
                int nxt = spec.transition.cols() - 1;
                for (int j = 0; j < spec.transition.cols(); ++j) {
                    acc += spec.transition(s, j);
                    if (u <= acc) {
                        nxt = j;
                        break;
                    }
                }
                s = nxt;
                traj.states(t, 0) = s;
            }
            break;
        }
        case SystemKind::cyclic_gaussian: {
            traj.system = "cyclic_gaussian";
            const Matrix centers = cyclic_gaussian_centers(spec.n_clusters, spec.emission_dim);
            int label = cyclic_gaussian_label(centers, x0);
            for (int j = 0; j < d; ++j) traj.states(0, j) = x0[j];
            for (int t = 1; t <= n_steps; ++t) {
                label = (label + 1) % spec.n_clusters;
                for (int j = 0; j < d; ++j) {
                    traj.states(t, j) = centers(label, j) + spec.spread * rng.normal();
                }
            }
            break;
        }
    }
    return traj;
}

std::vector<Trajectory> simulate_many(const SystemSpec& spec, std::span<const double> x0,
                                      int n_steps, uint64_t seed, int n_traj, int max_threads) {
    std::vector<Trajectory> out(n_traj);
    auto worker = [&](int begin, int stride) {
        for (int j = begin; j < n_traj; j += stride) {
            Rng rng(derive_seed(seed, static_cast<uint64_t>(j)));
            out[j] = simulate(spec, x0, n_steps, rng);
        }
    };
    const int threads = std::max(1, std::min(max_threads, n_traj));
    if (threads == 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t, threads);
        for (auto& th : pool) th.join();
    }
    return out;
}

PairDataset make_pairs(const std::vector<Trajectory>& trajectories, int lag) {
    if (lag < 1) throw invalid_input_error("make_pairs: lag must be >= 1");
    int total = 0;
    int d = 0;
    for (const Trajectory& t : trajectories) {
        if (t.states.rows() <= lag) {
            throw invalid_input_error("make_pairs: trajectory shorter than lag + 1");
        }
        total += t.states.rows() - lag;
        d = t.states.cols();
    }
    PairDataset ds;
    ds.x = Matrix(total, d);
    ds.xp = Matrix(total, d);
    int row = 0;
    for (const Trajectory& t : trajectories) {
        for (int i = 0; i + lag < t.states.rows(); ++i) {
            for (int j = 0; j < d; ++j) {
                ds.x(row, j) = t.states(i, j);
                ds.xp(row, j) = t.states(i + lag, j);
            }
            ++row;
        }
    }
    ds.rho0_samples.resize(total);
    ds.rho1_samples.resize(total);
    for (int i = 0; i < total; ++i) {
        ds.rho0_samples[i] = i;
        ds.rho1_samples[i] = i;
    }
    return ds;
}

Matrix cyclic_gaussian_centers(int n_clusters, int emission_dim) {
    // Vertices of a scaled standard simplex, centered, embedded in the first
    // n_clusters coordinates; pairwise distance 2.
    Matrix centers(n_clusters, emission_dim);
    const double s = std::sqrt(2.0);
    for (int y = 0; y < n_clusters; ++y) {
        for (int j = 0; j < n_clusters; ++j) {
            centers(y, j) = s * ((j == y ? 1.0 : 0.0) - 1.0 / n_clusters);
        }
    }
    return centers;
}

int cyclic_gaussian_label(const Matrix& centers, std::span<const double> x) {
    int best = 0;
    double best_d = HUGE_VAL;
    for (int y = 0; y < centers.rows(); ++y) {
        double dist = 0.0;
        for (int j = 0; j < centers.cols(); ++j) {
            const double diff = x[j] - centers(y, j);
            dist += diff * diff;
        }
        if (dist < best_d) {
            best_d = dist;
            best = y;
        }
    }
    return best;
}

} // namespace klora
