#pragma once

#include <optional>
#include <span>
#include <vector>

#include "klora/matrix.hpp"

namespace klora {

// (1/n) F^T G over a feature batch; G = F when absent. All accumulation in
// 64-bit; every objective downstream is a polynomial in these matrices.
Matrix second_moment(const Matrix& f_batch, const Matrix* g_batch = nullptr);

// (1/n) F(x)^T G(x') over aligned pair rows.
Matrix joint_moment(const Matrix& f_x, const Matrix& g_xp);

// Weighted counterparts, sum_i w_i f_i g_i^T; used by quadrature oracles and
// exact-enumeration tests. Weights are not renormalized.
Matrix second_moment_weighted(const Matrix& f_batch, std::span<const double> w,
                              const Matrix* g_batch = nullptr);
Matrix joint_moment_weighted(const Matrix& f_x, const Matrix& g_xp, std::span<const double> w);

// Prefix-weight masks for joint nesting: vector_mask[i] = sum_{j >= i} w_j,
// matrix_mask[i][j] = vector_mask[max(i, j)].
struct NestingMasks {
    std::vector<double> vector_mask;
    Matrix matrix_mask;
};

NestingMasks nesting_masks(std::span<const double> weights);
std::vector<double> uniform_nesting_weights(int k);

} // namespace klora
