#pragma once

#include <string>
#include <vector>

#include "klora/rng.hpp"
#include "klora/tape.hpp"

namespace klora {

// MLP feature map x -> f(x) in R^k. With prepend_constant the effective
// output is (k+1)-dimensional and coordinate 0 is identically one, which pins
// the trivial top mode of the operator.
struct EncoderSpec {
    int input_dim = 1;
    std::vector<int> hidden;
    int modes = 1; // learned output modes, excluding the optional constant
    Graph::Act activation = Graph::Act::leaky_relu;
    bool prepend_constant = false;

    int output_dim() const { return modes + (prepend_constant ? 1 : 0); }
};

Graph::Act activation_from_name(const std::string& name);
std::string activation_name(Graph::Act act);

// Registers weight/bias blocks named <prefix>.W<i> / <prefix>.b<i> and
// returns their block indices in layer order.
std::vector<int> encoder_register_params(const EncoderSpec& spec, ParamVector& params,
                                         const std::string& prefix);

// Glorot-uniform weights, zero biases.
void encoder_init_params(const EncoderSpec& spec, ParamVector& params,
                         const std::vector<int>& blocks, Rng& rng);

// Plain (no tape) forward: batch is n x input_dim, result n x output_dim().
Matrix encoder_apply(const EncoderSpec& spec, const ParamVector& params,
                     const std::vector<int>& blocks, const Matrix& batch);

// Tape forward for training.
NodeId encoder_forward(Graph& g, const EncoderSpec& spec, const ParamVector& params,
                       const std::vector<int>& blocks, NodeId batch);

// Value, first and second derivative of one feature with respect to a scalar
// input, from the three-point central stencil.
struct Jet2 {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

Jet2 jet_from_stencil(double f_plus, double f_mid, double f_minus, double h);

// Central finite-difference jets of every output mode at scalar input x.
// Computed from three plain forward passes; the training path builds the same
// stencil on the tape so parameter gradients flow through all three.
std::vector<Jet2> fd_jet(const EncoderSpec& spec, const ParamVector& params,
                         const std::vector<int>& blocks, double x, double h);

constexpr double kDefaultJetStep = 1e-3;

} // namespace klora
