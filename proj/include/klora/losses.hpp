#pragma once

#include <vector>

#include "klora/moments.hpp"
#include "klora/tape.hpp"

namespace klora {

enum class LossKind { lora, lora_seq, lora_joint, lora_generator, vamp, dp, dp_relaxed };

struct LossConfig {
    LossKind kind = LossKind::lora;
    std::vector<double> nesting_weights; // joint nesting; empty = uniform
    int vamp_r = 2;                      // 1 or 2
    double lambda = 1e-6;                // moment regularizer for vamp/dp
    double gamma = 1.0;                  // distortion coefficient for dp variants
    bool generator_seq_nesting = true;

    void validate() const;
};

LossKind loss_kind_from_name(const std::string& name);
std::string loss_kind_name(LossKind kind);

// Feature nodes entering an objective: paired batches plus the marginal
// batches (which may alias the paired ones).
struct LossBatchNodes {
    NodeId f_x = -1;
    NodeId g_xp = -1;
    NodeId f_rho0 = -1;
    NodeId g_rho1 = -1;
};

// (1/n) F^T G as a graph node.
NodeId moment_node(Graph& g, NodeId f, NodeId gb);
// Same value, with the sequential-nesting stop-gradient pattern: strict lower
// triangle <f_i, sg[g_j]>, strict upper <sg[f_i], g_j>, diagonal untouched.
NodeId moment_node_seq(Graph& g, NodeId f, NodeId gb);

NodeId lora_loss(Graph& g, const LossBatchNodes& b);
NodeId lora_seq_loss(Graph& g, const LossBatchNodes& b);
NodeId lora_joint_loss(Graph& g, const LossBatchNodes& b, const NestingMasks& masks);

// Low-rank objective for the self-adjoint generator: the generator of an
// overdamped diffusion is negative semidefinite, so the decomposition targets
// its negation and the slow modes carry positive weight.
NodeId lora_generator_loss(Graph& g, NodeId f_x, NodeId lf_x, NodeId f_rho0, bool seq_nesting);

NodeId vamp_loss(Graph& g, const LossBatchNodes& b, int r, double lambda);
NodeId dp_loss(Graph& g, const LossBatchNodes& b, double gamma, double lambda);
NodeId dp_relaxed_loss(Graph& g, const LossBatchNodes& b, double gamma);

NodeId build_loss(Graph& g, const LossConfig& cfg, const LossBatchNodes& b);

// Value-only forms over plain moment matrices, shared by evaluation code and
// the exact-enumeration tests.
double lora_value(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g);
double metric_distortion(const Matrix& m);
double vamp_value(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g, int r, double lambda);
double dp_value(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g, double gamma,
                double lambda);
double dp_relaxed_value(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g, double gamma);

} // namespace klora
