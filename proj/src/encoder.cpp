#include "klora/encoder.hpp"

#include <cmath>

#include "klora/errors.hpp"

namespace klora {

Graph::Act activation_from_name(const std::string& name) {
    if (name == "leaky_relu") return Graph::Act::leaky_relu;
    if (name == "celu") return Graph::Act::celu;
    if (name == "tanh") return Graph::Act::tanh;
    if (name == "identity") return Graph::Act::identity;
    throw invalid_input_error("unknown activation: " + name);
}

std::string activation_name(Graph::Act act) {
    switch (act) {
        case Graph::Act::identity: return "identity";
        case Graph::Act::leaky_relu: return "leaky_relu";
        case Graph::Act::celu: return "celu";
        case Graph::Act::tanh: return "tanh";
    }
    return "identity";
}

std::vector<int> encoder_register_params(const EncoderSpec& spec, ParamVector& params,
                                         const std::string& prefix) {
    if (spec.modes < 1) throw invalid_input_error("EncoderSpec: modes must be >= 1");
    std::vector<int> blocks;
    int in = spec.input_dim;
    int layer = 0;
    for (int width : spec.hidden) {
        blocks.push_back(params.add_block(prefix + ".W" + std::to_string(layer), in, width));
        blocks.push_back(params.add_block(prefix + ".b" + std::to_string(layer), 1, width));
        in = width;
        ++layer;
    }
    blocks.push_back(params.add_block(prefix + ".W" + std::to_string(layer), in, spec.modes));
    blocks.push_back(params.add_block(prefix + ".b" + std::to_string(layer), 1, spec.modes));
    return blocks;
}

void encoder_init_params(const EncoderSpec& spec, ParamVector& params,
                         const std::vector<int>& blocks, Rng& rng) {
    (void)spec;
    for (size_t i = 0; i < blocks.size(); i += 2) {
        const ParamBlock& w = params.layout[blocks[i]];
        const double bound = std::sqrt(6.0 / (w.rows + w.cols));
        for (size_t j = 0; j < w.count(); ++j) {
            params.values[w.offset + j] = rng.uniform(-bound, bound);
        }
        // bias block stays zero
    }
}

Matrix encoder_apply(const EncoderSpec& spec, const ParamVector& params,
                     const std::vector<int>& blocks, const Matrix& batch) {
    if (batch.cols() != spec.input_dim) {
        throw invalid_input_error("encoder_apply: batch width does not match input_dim");
    }
    const int n_layers = static_cast<int>(blocks.size()) / 2;
    Matrix h = batch;
    for (int l = 0; l < n_layers; ++l) {
        const Matrix w = params.block_matrix(blocks[2 * l]);
        const Matrix b = params.block_matrix(blocks[2 * l + 1]);
        Matrix z = matmul(h, w);
        for (int i = 0; i < z.rows(); ++i) {
            double* r = z.row(i);
            for (int j = 0; j < z.cols(); ++j) r[j] += b(0, j);
        }
        if (l + 1 < n_layers) {
            for (int i = 0; i < z.rows(); ++i) {
                double* r = z.row(i);
                for (int j = 0; j < z.cols(); ++j) r[j] = act_forward(spec.activation, r[j]);
            }
        }
        h = std::move(z);
    }
    if (!spec.prepend_constant) return h;
    Matrix out(h.rows(), h.cols() + 1);
    for (int i = 0; i < h.rows(); ++i) {
        out(i, 0) = 1.0;
        for (int j = 0; j < h.cols(); ++j) out(i, j + 1) = h(i, j);
    }
    return out;
}

NodeId encoder_forward(Graph& g, const EncoderSpec& spec, const ParamVector& params,
                       const std::vector<int>& blocks, NodeId batch) {
    if (g.value(batch).cols() != spec.input_dim) {
        throw invalid_input_error("encoder_forward: batch width does not match input_dim");
    }
    const int n_layers = static_cast<int>(blocks.size()) / 2;
    NodeId h = batch;
    for (int l = 0; l < n_layers; ++l) {
        NodeId w = g.param(params, blocks[2 * l]);
        NodeId b = g.param(params, blocks[2 * l + 1]);
        NodeId z = g.add_row_broadcast(g.matmul(h, w), b);
        h = (l + 1 < n_layers) ? g.activation(z, spec.activation) : z;
    }
    return spec.prepend_constant ? g.prepend_ones_column(h) : h;
}

Jet2 jet_from_stencil(double f_plus, double f_mid, double f_minus, double h) {
    Jet2 j;
    j.value = f_mid;
    j.d1 = (f_plus - f_minus) / (2.0 * h);
    j.d2 = (f_plus - 2.0 * f_mid + f_minus) / (h * h);
    return j;
}

std::vector<Jet2> fd_jet(const EncoderSpec& spec, const ParamVector& params,
                         const std::vector<int>& blocks, double x, double h) {
    if (spec.input_dim != 1) throw invalid_input_error("fd_jet: input_dim must be 1");
    if (h <= 0.0) throw invalid_input_error("fd_jet: step must be positive");
    Matrix pts(3, 1);
    pts(0, 0) = x + h;
    pts(1, 0) = x;
    pts(2, 0) = x - h;
    const Matrix f = encoder_apply(spec, params, blocks, pts);
    std::vector<Jet2> jets(f.cols());
    for (int j = 0; j < f.cols(); ++j) {
        jets[j] = jet_from_stencil(f(0, j), f(1, j), f(2, j), h);
    }
    return jets;
}

} // namespace klora
