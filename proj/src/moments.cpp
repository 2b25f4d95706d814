#include "klora/moments.hpp"

#include "klora/errors.hpp"

namespace klora {

Matrix second_moment(const Matrix& f_batch, const Matrix* g_batch) {
    const Matrix& g = g_batch ? *g_batch : f_batch;
    if (f_batch.rows() == 0) throw invalid_input_error("second_moment: empty batch");
    if (g.rows() != f_batch.rows()) throw invalid_input_error("second_moment: row count mismatch");
    Matrix m = matmul_tn(f_batch, g);
    m *= 1.0 / f_batch.rows();
    return m;
}

Matrix joint_moment(const Matrix& f_x, const Matrix& g_xp) {
    if (f_x.rows() == 0) throw invalid_input_error("joint_moment: empty batch");
    if (f_x.rows() != g_xp.rows()) throw invalid_input_error("joint_moment: misaligned pair batches");
    Matrix m = matmul_tn(f_x, g_xp);
    m *= 1.0 / f_x.rows();
    return m;
}

Matrix second_moment_weighted(const Matrix& f_batch, std::span<const double> w,
                              const Matrix* g_batch) {
    const Matrix& g = g_batch ? *g_batch : f_batch;
    if (f_batch.rows() != static_cast<int>(w.size()) || g.rows() != f_batch.rows()) {
        throw invalid_input_error("second_moment_weighted: length mismatch");
    }
    Matrix m(f_batch.cols(), g.cols());
    for (int t = 0; t < f_batch.rows(); ++t) {
        const double wt = w[t];
        if (wt == 0.0) continue;
        const double* fr = f_batch.row(t);
        const double* gr = g.row(t);
        for (int i = 0; i < f_batch.cols(); ++i) {
            const double fi = wt * fr[i];
            double* mi = m.row(i);
            for (int j = 0; j < g.cols(); ++j) mi[j] += fi * gr[j];
        }
    }
    return m;
}

Matrix joint_moment_weighted(const Matrix& f_x, const Matrix& g_xp, std::span<const double> w) {
    return second_moment_weighted(f_x, w, &g_xp);
}

NestingMasks nesting_masks(std::span<const double> weights) {
    const int k = static_cast<int>(weights.size());
    if (k == 0) throw invalid_input_error("nesting_masks: empty weights");
    for (double w : weights) {
        if (w <= 0.0) throw invalid_input_error("nesting_masks: weights must be positive");
    }
    NestingMasks m;
    m.vector_mask.resize(k);
    double acc = 0.0;
    for (int i = k - 1; i >= 0; --i) {
        acc += weights[i];
        m.vector_mask[i] = acc;
    }
    m.matrix_mask = Matrix(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            m.matrix_mask(i, j) = m.vector_mask[std::max(i, j)];
        }
    }
    return m;
}

std::vector<double> uniform_nesting_weights(int k) {
    return std::vector<double>(k, 1.0 / k);
}

} // namespace klora
