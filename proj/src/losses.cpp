#include "klora/losses.hpp"

#include <cmath>

#include "klora/errors.hpp"
#include "klora/linalg.hpp"

namespace klora {

void LossConfig::validate() const {
    if (vamp_r != 1 && vamp_r != 2) throw invalid_input_error("LossConfig: vamp r must be 1 or 2");
    if (lambda < 0.0) throw invalid_input_error("LossConfig: lambda must be >= 0");
    if (gamma < 0.0) throw invalid_input_error("LossConfig: gamma must be >= 0");
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "lora") return LossKind::lora;
    if (name == "lora_seq") return LossKind::lora_seq;
    if (name == "lora_joint") return LossKind::lora_joint;
    if (name == "lora_generator") return LossKind::lora_generator;
    if (name == "vamp") return LossKind::vamp;
    if (name == "dp") return LossKind::dp;
    if (name == "dp_relaxed") return LossKind::dp_relaxed;
    throw invalid_input_error("unknown loss kind: " + name);
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::lora: return "lora";
        case LossKind::lora_seq: return "lora_seq";
        case LossKind::lora_joint: return "lora_joint";
        case LossKind::lora_generator: return "lora_generator";
        case LossKind::vamp: return "vamp";
        case LossKind::dp: return "dp";
        case LossKind::dp_relaxed: return "dp_relaxed";
    }
    return "lora";
}

namespace {

void check_widths(Graph& g, const LossBatchNodes& b) {
    const int k = g.value(b.f_x).cols();
    if (g.value(b.g_xp).cols() != k || g.value(b.f_rho0).cols() != k ||
        g.value(b.g_rho1).cols() != k) {
        throw invalid_input_error("loss: encoder output widths do not match");
    }
    if (g.value(b.f_x).rows() != g.value(b.g_xp).rows()) {
        throw invalid_input_error("loss: paired batches misaligned");
    }
}

Matrix strict_lower_mask(int k) {
    Matrix m(k, k);
    for (int i = 1; i < k; ++i)
        for (int j = 0; j < i; ++j) m(i, j) = 1.0;
    return m;
}

} // namespace

NodeId moment_node(Graph& g, NodeId f, NodeId gb) {
    const int n = g.value(f).rows();
    return g.scale(g.matmul_tn(f, gb), 1.0 / n);
}

NodeId moment_node_seq(Graph& g, NodeId f, NodeId gb) {
    const int n = g.value(f).rows();
    const int k = g.value(f).cols();
    Matrix lower = strict_lower_mask(k);
    Matrix upper = lower.transposed();
    NodeId lo = g.mask(g.matmul_tn(f, g.stop_gradient(gb)), lower);
    NodeId up = g.mask(g.matmul_tn(g.stop_gradient(f), gb), upper);
    NodeId di = g.mask(g.matmul_tn(f, gb), Matrix::identity(k));
    return g.scale(g.add(g.add(lo, up), di), 1.0 / n);
}

NodeId lora_loss(Graph& g, const LossBatchNodes& b) {
    check_widths(g, b);
    NodeId t = moment_node(g, b.f_x, b.g_xp);
    NodeId mf = moment_node(g, b.f_rho0, b.f_rho0);
    NodeId mg = moment_node(g, b.g_rho1, b.g_rho1);
    return g.add(g.scale(g.trace(t), -2.0), g.trace(g.matmul(mf, mg)));
}

NodeId lora_seq_loss(Graph& g, const LossBatchNodes& b) {
    check_widths(g, b);
    // Only the diagonal of T enters the trace, and the stop-gradient pattern
    // leaves the diagonal untouched, so the correlation term is the plain one.
    NodeId t = moment_node(g, b.f_x, b.g_xp);
    NodeId mf = moment_node_seq(g, b.f_rho0, b.f_rho0);
    NodeId mg = moment_node_seq(g, b.g_rho1, b.g_rho1);
    return g.add(g.scale(g.trace(t), -2.0), g.trace(g.matmul(mf, mg)));
}

NodeId lora_joint_loss(Graph& g, const LossBatchNodes& b, const NestingMasks& masks) {
    check_widths(g, b);
    const int k = g.value(b.f_x).cols();
    if (static_cast<int>(masks.vector_mask.size()) != k) {
        throw invalid_input_error("lora_joint_loss: mask size does not match mode count");
    }
    NodeId t = moment_node(g, b.f_x, b.g_xp);
    NodeId mf = moment_node(g, b.f_rho0, b.f_rho0);
    NodeId mg = moment_node(g, b.g_rho1, b.g_rho1);
    Matrix diag_mask(k, k);
    for (int i = 0; i < k; ++i) diag_mask(i, i) = masks.vector_mask[i];
    NodeId corr = g.trace(g.mask(t, std::move(diag_mask)));
    NodeId metric = g.sum(g.mask(g.hadamard(mf, mg), masks.matrix_mask));
    return g.add(g.scale(corr, -2.0), metric);
}

NodeId lora_generator_loss(Graph& g, NodeId f_x, NodeId lf_x, NodeId f_rho0, bool seq_nesting) {
    if (g.value(f_x).cols() != g.value(lf_x).cols() ||
        g.value(f_x).rows() != g.value(lf_x).rows()) {
        throw invalid_input_error("lora_generator_loss: f and Lf shapes do not match");
    }
    NodeId t = moment_node(g, f_x, lf_x);
    NodeId mf = seq_nesting ? moment_node_seq(g, f_rho0, f_rho0) : moment_node(g, f_rho0, f_rho0);
    return g.add(g.scale(g.trace(t), 2.0), g.frobenius_sq(mf));
}

NodeId vamp_loss(Graph& g, const LossBatchNodes& b, int r, double lambda) {
    check_widths(g, b);
    if (r != 1 && r != 2) throw invalid_input_error("vamp_loss: r must be 1 or 2");
    const int k = g.value(b.f_x).cols();
    NodeId t = moment_node(g, b.f_x, b.g_xp);
    NodeId mf = moment_node(g, b.f_rho0, b.f_rho0);
    NodeId mg = moment_node(g, b.g_rho1, b.g_rho1);
    if (lambda > 0.0) {
        NodeId reg = g.constant(Matrix::identity(k) * lambda);
        mf = g.add(mf, reg);
        mg = g.add(mg, reg);
    }
    NodeId c = g.matmul(g.matmul(g.inv_sqrt_spd(mf), t), g.inv_sqrt_spd(mg));
    NodeId norm = r == 2 ? g.frobenius_sq(c) : g.nuclear_norm(c);
    return g.scale(norm, -1.0);
}

NodeId dp_loss(Graph& g, const LossBatchNodes& b, double gamma, double lambda) {
    NodeId base = vamp_loss(g, b, 2, lambda);
    if (gamma == 0.0) return base;
    NodeId mf = moment_node(g, b.f_rho0, b.f_rho0);
    NodeId mg = moment_node(g, b.g_rho1, b.g_rho1);
    NodeId reg = g.add(g.metric_distortion(mf), g.metric_distortion(mg));
    return g.add(base, g.scale(reg, gamma));
}

NodeId dp_relaxed_loss(Graph& g, const LossBatchNodes& b, double gamma) {
    check_widths(g, b);
    NodeId t = moment_node(g, b.f_x, b.g_xp);
    NodeId mf = moment_node(g, b.f_rho0, b.f_rho0);
    NodeId mg = moment_node(g, b.g_rho1, b.g_rho1);
    NodeId num = g.frobenius_sq(t);
    NodeId den = g.hadamard(g.operator_norm(mf), g.operator_norm(mg));
    if (g.scalar(den) == 0.0) throw invalid_input_error("dp_relaxed_loss: zero operator norm");
    NodeId base = g.scale(g.sdiv(num, den), -1.0);
    if (gamma == 0.0) return base;
    NodeId reg = g.add(g.metric_distortion(mf), g.metric_distortion(mg));
    return g.add(base, g.scale(reg, gamma));
}

NodeId build_loss(Graph& g, const LossConfig& cfg, const LossBatchNodes& b) {
    cfg.validate();
    switch (cfg.kind) {
        case LossKind::lora: return lora_loss(g, b);
        case LossKind::lora_seq: return lora_seq_loss(g, b);
        case LossKind::lora_joint: {
            const int k = g.value(b.f_x).cols();
            std::vector<double> w =
                cfg.nesting_weights.empty() ? uniform_nesting_weights(k) : cfg.nesting_weights;
            return lora_joint_loss(g, b, nesting_masks(w));
        }
        case LossKind::lora_generator:
            throw invalid_input_error("build_loss: generator loss needs jet batches");
        case LossKind::vamp: return vamp_loss(g, b, cfg.vamp_r, cfg.lambda);
        case LossKind::dp: return dp_loss(g, b, cfg.gamma, cfg.lambda);
        case LossKind::dp_relaxed: return dp_relaxed_loss(g, b, cfg.gamma);
    }
    throw invalid_input_error("build_loss: unknown loss kind");
}

double lora_value(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g) {
    return -2.0 * t_fg.trace() + matmul(m_f, m_g).trace();
}

double metric_distortion(const Matrix& m) {
    SymEig e = sym_eigh(m);
    double r = 0.0;
    for (double l : e.eigenvalues) {
        if (l <= 0.0) {
            throw invalid_input_error("metric_distortion: matrix has a non-positive eigenvalue");
        }
        r += l * l - l - std::log(l);
    }
    return r;
}

double vamp_value(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g, int r, double lambda) {
    const int k = m_f.rows();
    Matrix mf = m_f + Matrix::identity(k) * lambda;
    Matrix mg = m_g + Matrix::identity(k) * lambda;
    Matrix c = matmul(matmul(inv_sqrt_psd(mf, 0.0), t_fg), inv_sqrt_psd(mg, 0.0));
    if (r == 2) {
        const double f = c.frobenius_norm();
        return -f * f;
    }
    SvdFactors s = svd(c);
    double sum = 0.0;
    for (double x : s.sigma) sum += x;
    return -sum;
}

double dp_value(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g, double gamma,
                double lambda) {
    double v = vamp_value(t_fg, m_f, m_g, 2, lambda);
    if (gamma > 0.0) v += gamma * (metric_distortion(m_f) + metric_distortion(m_g));
    return v;
}

double dp_relaxed_value(const Matrix& t_fg, const Matrix& m_f, const Matrix& m_g, double gamma) {
    const double of = sym_eigh(m_f).eigenvalues[0];
    const double og = sym_eigh(m_g).eigenvalues[0];
    if (of == 0.0 || og == 0.0) throw invalid_input_error("dp_relaxed_value: zero operator norm");
    const double f = t_fg.frobenius_norm();
    double v = -(f * f) / (of * og);
    if (gamma > 0.0) v += gamma * (metric_distortion(m_f) + metric_distortion(m_g));
    return v;
}

} // namespace klora
