#pragma once

#include <functional>
#include <string>
#include <vector>

#include "klora/linalg.hpp"
#include "klora/matrix.hpp"

namespace klora {

// Flat parameter storage with a (name, shape) layout so gradients and
// checkpoints can address blocks by name.
struct ParamBlock {
    std::string name;
    int rows = 0;
    int cols = 0;
    size_t offset = 0;
    size_t count() const { return static_cast<size_t>(rows) * cols; }
};

struct ParamVector {
    std::vector<double> values;
    std::vector<ParamBlock> layout;

    size_t size() const { return values.size(); }
    int add_block(const std::string& name, int rows, int cols);
    Matrix block_matrix(int block) const;
    void set_block(int block, const Matrix& m);
    int find_block(const std::string& name) const; // -1 when absent
};

using NodeId = int;

// Single-use reverse-mode tape over Matrix-valued nodes. Nodes are created in
// topological order by construction; backward() walks them in reverse. Scalars
// are 1x1 matrices.
class Graph {
public:
    NodeId constant(Matrix value);
    NodeId param(const ParamVector& params, int block);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId matmul(NodeId a, NodeId b);
    NodeId matmul_tn(NodeId a, NodeId b); // a^T * b
    NodeId hadamard(NodeId a, NodeId b);
    NodeId mask(NodeId a, Matrix m); // elementwise multiply by a constant mask
    NodeId add_row_broadcast(NodeId x, NodeId bias); // (n x k) + (1 x k)
    NodeId scale_rows(NodeId x, std::vector<double> w); // diag(w) * x, w constant
    NodeId prepend_ones_column(NodeId x);
    NodeId stop_gradient(NodeId a);

    enum class Act { identity, leaky_relu, celu, tanh };
    NodeId activation(NodeId a, Act act);

    NodeId trace(NodeId a);        // scalar
    NodeId sum(NodeId a);          // scalar
    NodeId frobenius_sq(NodeId a); // scalar
    NodeId sdiv(NodeId a, NodeId b); // scalar division

    // linalg-backed nodes with analytic differentials (the operations the
    // baseline objectives must backprop through)
    NodeId inv_sqrt_spd(NodeId a);        // symmetric positive definite input
    NodeId metric_distortion(NodeId a);   // scalar tr(M^2 - M - ln M)
    NodeId operator_norm(NodeId a);       // scalar, largest eigenvalue of SPD input
    NodeId nuclear_norm(NodeId a);        // scalar, sum of singular values

    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    double scalar(NodeId id) const;

    // Reverse pass from a scalar loss node. Gradients of parameter leaves are
    // accumulated into `grad` (same layout as the ParamVector they came from).
    void backward(NodeId loss, std::vector<double>& grad);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        int param_block = -1;
        size_t param_offset = 0;
        std::function<void(Graph&, const Matrix&)> backprop; // upstream grad -> parents
    };

    NodeId push(Matrix value, bool needs_grad, std::function<void(Graph&, const Matrix&)> fn);
    void accumulate(NodeId id, const Matrix& g);
    bool wants(NodeId id) const { return nodes_[id].needs_grad; }

    std::vector<Node> nodes_;
};

// Central-difference activation helpers shared with the plain encoder path.
double act_forward(Graph::Act act, double x);
double act_derivative(Graph::Act act, double x);

} // namespace klora
