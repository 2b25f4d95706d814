#include "klora/tape.hpp"

#include <cmath>
#include <memory>

#include "klora/errors.hpp"

namespace klora {

int ParamVector::add_block(const std::string& name, int rows, int cols) {
    ParamBlock b{name, rows, cols, values.size()};
    layout.push_back(b);
    values.resize(values.size() + b.count(), 0.0);
    return static_cast<int>(layout.size()) - 1;
}

Matrix ParamVector::block_matrix(int block) const {
    const ParamBlock& b = layout[block];
    Matrix m(b.rows, b.cols);
    for (size_t i = 0; i < b.count(); ++i) m.data()[i] = values[b.offset + i];
    return m;
}

void ParamVector::set_block(int block, const Matrix& m) {
    const ParamBlock& b = layout[block];
    for (size_t i = 0; i < b.count(); ++i) values[b.offset + i] = m.data()[i];
}

int ParamVector::find_block(const std::string& name) const {
    for (size_t i = 0; i < layout.size(); ++i) {
        if (layout[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

double act_forward(Graph::Act act, double x) {
    switch (act) {
        case Graph::Act::identity: return x;
        case Graph::Act::leaky_relu: return x > 0.0 ? x : 0.01 * x;
        case Graph::Act::celu: return x > 0.0 ? x : std::expm1(x);
        case Graph::Act::tanh: return std::tanh(x);
    }
    return x;
}

double act_derivative(Graph::Act act, double x) {
    switch (act) {
        case Graph::Act::identity: return 1.0;
        case Graph::Act::leaky_relu: return x > 0.0 ? 1.0 : 0.01;
        case Graph::Act::celu: return x > 0.0 ? 1.0 : std::exp(x);
        case Graph::Act::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

NodeId Graph::push(Matrix value, bool needs_grad, std::function<void(Graph&, const Matrix&)> fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backprop = std::move(fn);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

void Graph::accumulate(NodeId id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.rows() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

NodeId Graph::constant(Matrix value) { return push(std::move(value), false, nullptr); }

NodeId Graph::param(const ParamVector& params, int block) {
    NodeId id = push(params.block_matrix(block), true, nullptr);
    nodes_[id].param_block = block;
    nodes_[id].param_offset = params.layout[block].offset;
    return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
    Matrix v = nodes_[a].value + nodes_[b].value;
    return push(std::move(v), wants(a) || wants(b), [a, b](Graph& g, const Matrix& up) {
        g.accumulate(a, up);
        g.accumulate(b, up);
    });
}

NodeId Graph::sub(NodeId a, NodeId b) {
    Matrix v = nodes_[a].value - nodes_[b].value;
    return push(std::move(v), wants(a) || wants(b), [a, b](Graph& g, const Matrix& up) {
        g.accumulate(a, up);
        if (g.wants(b)) g.accumulate(b, up * -1.0);
    });
}

NodeId Graph::scale(NodeId a, double c) {
    Matrix v = nodes_[a].value * c;
    return push(std::move(v), wants(a), [a, c](Graph& g, const Matrix& up) {
        g.accumulate(a, up * c);
    });
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    Matrix v = klora::matmul(nodes_[a].value, nodes_[b].value);
    return push(std::move(v), wants(a) || wants(b), [a, b](Graph& g, const Matrix& up) {
        if (g.wants(a)) g.accumulate(a, klora::matmul_nt(up, g.nodes_[b].value));
        if (g.wants(b)) g.accumulate(b, klora::matmul_tn(g.nodes_[a].value, up));
    });
}

NodeId Graph::matmul_tn(NodeId a, NodeId b) {
    Matrix v = klora::matmul_tn(nodes_[a].value, nodes_[b].value);
    return push(std::move(v), wants(a) || wants(b), [a, b](Graph& g, const Matrix& up) {
        // c = a^T b: da = b up^T, db = a up
        if (g.wants(a)) g.accumulate(a, klora::matmul_nt(g.nodes_[b].value, up));
        if (g.wants(b)) g.accumulate(b, klora::matmul(g.nodes_[a].value, up));
    });
}

NodeId Graph::hadamard(NodeId a, NodeId b) {
    Matrix v = klora::hadamard(nodes_[a].value, nodes_[b].value);
    return push(std::move(v), wants(a) || wants(b), [a, b](Graph& g, const Matrix& up) {
        if (g.wants(a)) g.accumulate(a, klora::hadamard(up, g.nodes_[b].value));
        if (g.wants(b)) g.accumulate(b, klora::hadamard(up, g.nodes_[a].value));
    });
}

NodeId Graph::mask(NodeId a, Matrix m) {
    Matrix v = klora::hadamard(nodes_[a].value, m);
    auto mp = std::make_shared<Matrix>(std::move(m));
    return push(std::move(v), wants(a), [a, mp](Graph& g, const Matrix& up) {
        g.accumulate(a, klora::hadamard(up, *mp));
    });
}

NodeId Graph::add_row_broadcast(NodeId x, NodeId bias) {
    const Matrix& xv = nodes_[x].value;
    const Matrix& bv = nodes_[bias].value;
    if (bv.rows() != 1 || bv.cols() != xv.cols()) {
        throw invalid_input_error("add_row_broadcast: bias must be 1 x cols");
    }
    Matrix v = xv;
    for (int i = 0; i < v.rows(); ++i) {
        double* r = v.row(i);
        for (int j = 0; j < v.cols(); ++j) r[j] += bv(0, j);
    }
    return push(std::move(v), wants(x) || wants(bias), [x, bias](Graph& g, const Matrix& up) {
        g.accumulate(x, up);
        if (g.wants(bias)) {
            Matrix db(1, up.cols());
            for (int i = 0; i < up.rows(); ++i) {
                const double* r = up.row(i);
                for (int j = 0; j < up.cols(); ++j) db(0, j) += r[j];
            }
            g.accumulate(bias, db);
        }
    });
}

NodeId Graph::scale_rows(NodeId x, std::vector<double> w) {
    const Matrix& xv = nodes_[x].value;
    if (static_cast<int>(w.size()) != xv.rows()) {
        throw invalid_input_error("scale_rows: weight length must equal row count");
    }
    Matrix v = xv;
    for (int i = 0; i < v.rows(); ++i) {
        double* r = v.row(i);
        for (int j = 0; j < v.cols(); ++j) r[j] *= w[i];
    }
    auto wp = std::make_shared<std::vector<double>>(std::move(w));
    return push(std::move(v), wants(x), [x, wp](Graph& g, const Matrix& up) {
        Matrix dx = up;
        for (int i = 0; i < dx.rows(); ++i) {
            double* r = dx.row(i);
            for (int j = 0; j < dx.cols(); ++j) r[j] *= (*wp)[i];
        }
        g.accumulate(x, dx);
    });
}

NodeId Graph::prepend_ones_column(NodeId x) {
    const Matrix& xv = nodes_[x].value;
    Matrix v(xv.rows(), xv.cols() + 1);
    for (int i = 0; i < xv.rows(); ++i) {
        v(i, 0) = 1.0;
        for (int j = 0; j < xv.cols(); ++j) v(i, j + 1) = xv(i, j);
    }
    return push(std::move(v), wants(x), [x](Graph& g, const Matrix& up) {
        Matrix dx(up.rows(), up.cols() - 1);
        for (int i = 0; i < up.rows(); ++i)
            for (int j = 1; j < up.cols(); ++j) dx(i, j - 1) = up(i, j);
        g.accumulate(x, dx);
    });
}

NodeId Graph::stop_gradient(NodeId a) {
    return push(nodes_[a].value, false, nullptr);
}

NodeId Graph::activation(NodeId a, Act act) {
    const Matrix& av = nodes_[a].value;
    Matrix v = av;
    for (int i = 0; i < v.rows(); ++i) {
        double* r = v.row(i);
        for (int j = 0; j < v.cols(); ++j) r[j] = act_forward(act, r[j]);
    }
    return push(std::move(v), wants(a), [a, act](Graph& g, const Matrix& up) {
        const Matrix& pre = g.nodes_[a].value;
        Matrix dx = up;
        for (int i = 0; i < dx.rows(); ++i) {
            double* r = dx.row(i);
            const double* pr = pre.row(i);
            for (int j = 0; j < dx.cols(); ++j) r[j] *= act_derivative(act, pr[j]);
        }
        g.accumulate(a, dx);
    });
}

NodeId Graph::trace(NodeId a) {
    Matrix v(1, 1);
    v(0, 0) = nodes_[a].value.trace();
    return push(std::move(v), wants(a), [a](Graph& g, const Matrix& up) {
        const Matrix& av = g.nodes_[a].value;
        Matrix da(av.rows(), av.cols());
        const int n = std::min(av.rows(), av.cols());
        for (int i = 0; i < n; ++i) da(i, i) = up(0, 0);
        g.accumulate(a, da);
    });
}

NodeId Graph::sum(NodeId a) {
    double s = 0.0;
    const Matrix& av = nodes_[a].value;
    for (size_t i = 0; i < av.size(); ++i) s += av.data()[i];
    Matrix v(1, 1);
    v(0, 0) = s;
    return push(std::move(v), wants(a), [a](Graph& g, const Matrix& up) {
        const Matrix& av = g.nodes_[a].value;
        Matrix da(av.rows(), av.cols());
        for (size_t i = 0; i < da.size(); ++i) da.data()[i] = up(0, 0);
        g.accumulate(a, da);
    });
}

NodeId Graph::frobenius_sq(NodeId a) {
    const Matrix& av = nodes_[a].value;
    double s = 0.0;
    for (size_t i = 0; i < av.size(); ++i) s += av.data()[i] * av.data()[i];
    Matrix v(1, 1);
    v(0, 0) = s;
    return push(std::move(v), wants(a), [a](Graph& g, const Matrix& up) {
        g.accumulate(a, g.nodes_[a].value * (2.0 * up(0, 0)));
    });
}

NodeId Graph::sdiv(NodeId a, NodeId b) {
    const double av = scalar(a), bv = scalar(b);
    if (bv == 0.0) throw invalid_input_error("sdiv: division by zero");
    Matrix v(1, 1);
    v(0, 0) = av / bv;
    return push(std::move(v), wants(a) || wants(b), [a, b, av, bv](Graph& g, const Matrix& up) {
        Matrix da(1, 1), db(1, 1);
        da(0, 0) = up(0, 0) / bv;
        db(0, 0) = -up(0, 0) * av / (bv * bv);
        g.accumulate(a, da);
        g.accumulate(b, db);
    });
}

double Graph::scalar(NodeId id) const {
    const Matrix& v = nodes_[id].value;
    if (v.rows() != 1 || v.cols() != 1) throw invalid_input_error("scalar: node is not 1x1");
    return v(0, 0);
}

NodeId Graph::inv_sqrt_spd(NodeId a) {
    SymEig e = sym_eigh(nodes_[a].value);
    const int n = nodes_[a].value.rows();
    for (double l : e.eigenvalues) {
        if (l <= 0.0) {
            throw numerical_error("inv_sqrt_spd: moment matrix is not positive definite");
        }
    }
    std::vector<double> f(n);
    for (int i = 0; i < n; ++i) f[i] = 1.0 / std::sqrt(e.eigenvalues[i]);
    Matrix v = klora::matmul(klora::matmul(e.eigenvectors, Matrix::diag(f)), e.eigenvectors.transposed());
    auto ep = std::make_shared<SymEig>(std::move(e));
    return push(std::move(v), wants(a), [a, ep, n](Graph& g, const Matrix& up) {
        // dY = V (F o (V^T dM V)) V^T with F_ij the divided difference of
        // lambda^{-1/2}; the adjoint is the same sandwich applied to the
        // upstream gradient.
        Matrix inner = klora::matmul_tn(ep->eigenvectors, klora::matmul(up, ep->eigenvectors));
        for (int i = 0; i < n; ++i) {
            const double li = ep->eigenvalues[i];
            for (int j = 0; j < n; ++j) {
                const double lj = ep->eigenvalues[j];
                double fij;
                if (std::fabs(li - lj) > 1e-12 * std::max(li, lj)) {
                    fij = (1.0 / std::sqrt(li) - 1.0 / std::sqrt(lj)) / (li - lj);
                } else {
                    fij = -0.5 * std::pow(0.5 * (li + lj), -1.5);
                }
                inner(i, j) *= fij;
            }
        }
        g.accumulate(a, klora::matmul(klora::matmul(ep->eigenvectors, inner), ep->eigenvectors.transposed()));
    });
}

NodeId Graph::metric_distortion(NodeId a) {
    SymEig e = sym_eigh(nodes_[a].value);
    const int n = nodes_[a].value.rows();
    double r = 0.0;
    for (double l : e.eigenvalues) {
        if (l <= 0.0) {
            throw invalid_input_error("metric_distortion: moment matrix has a non-positive eigenvalue");
        }
        r += l * l - l - std::log(l);
    }
    Matrix v(1, 1);
    v(0, 0) = r;
    auto ep = std::make_shared<SymEig>(std::move(e));
    return push(std::move(v), wants(a), [a, ep, n](Graph& g, const Matrix& up) {
        // d tr(M^2 - M - ln M) = tr((2M - I - M^{-1}) dM)
        std::vector<double> w(n);
        for (int i = 0; i < n; ++i) w[i] = 2.0 * ep->eigenvalues[i] - 1.0 - 1.0 / ep->eigenvalues[i];
        Matrix gmat = klora::matmul(klora::matmul(ep->eigenvectors, Matrix::diag(w)),
                                    ep->eigenvectors.transposed());
        g.accumulate(a, gmat * up(0, 0));
    });
}

NodeId Graph::operator_norm(NodeId a) {
    SymEig e = sym_eigh(nodes_[a].value);
    const int n = nodes_[a].value.rows();
    Matrix v(1, 1);
    v(0, 0) = e.eigenvalues[0];
    Matrix top = e.eigenvectors.col(0);
    auto tp = std::make_shared<Matrix>(std::move(top));
    return push(std::move(v), wants(a), [a, tp, n](Graph& g, const Matrix& up) {
        Matrix da(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) da(i, j) = up(0, 0) * (*tp)(i, 0) * (*tp)(j, 0);
        g.accumulate(a, da);
    });
}

NodeId Graph::nuclear_norm(NodeId a) {
    SvdFactors f = svd(nodes_[a].value);
    const int r = static_cast<int>(f.sigma.size());
    // The nuclear-norm differential d||X||_* = tr(U V^T dX) breaks down near
    // repeated or vanishing singular values; fail loudly instead of returning
    // a silently wrong gradient.
    double smax = f.sigma.empty() ? 0.0 : f.sigma[0];
    for (int i = 0; i + 1 < r; ++i) {
        if (f.sigma[i] - f.sigma[i + 1] < 1e-8 * std::max(smax, 1.0)) {
            throw numerical_error("nuclear_norm: singular-value gap below 1e-8, gradient undefined");
        }
    }
    if (r > 0 && f.sigma[r - 1] < 1e-8 * std::max(smax, 1.0)) {
        throw numerical_error("nuclear_norm: smallest singular value below 1e-8, gradient undefined");
    }
    double s = 0.0;
    for (double x : f.sigma) s += x;
    Matrix v(1, 1);
    v(0, 0) = s;
    Matrix uvt = klora::matmul_nt(f.u, f.v);
    auto up_ptr = std::make_shared<Matrix>(std::move(uvt));
    return push(std::move(v), wants(a), [a, up_ptr](Graph& g, const Matrix& up) {
        g.accumulate(a, *up_ptr * up(0, 0));
    });
}

void Graph::backward(NodeId loss, std::vector<double>& grad) {
    const Matrix& lv = nodes_[loss].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw invalid_input_error("backward: loss node must be scalar");
    }
    Matrix seed(1, 1);
    seed(0, 0) = 1.0;
    accumulate(loss, seed);
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.rows() == 0) continue;
        if (n.param_block >= 0) {
            for (size_t i = 0; i < n.grad.size(); ++i) grad[n.param_offset + i] += n.grad.data()[i];
        }
        if (n.backprop) n.backprop(*this, n.grad);
    }
}

} // namespace klora
