#pragma once

#include <vector>

#include "neurofuse/tensor.hpp"

namespace neurofuse {

/// Temperature-scaled cross-view cosine similarity matrix.
struct SimilarityMatrix {
    Tensor s;  // [B, B], S[i,j] = cos(p_img_i, p_roi_j) / tau
    double tau = 0.5;
};

/// Rows of p_img / p_roi are per-subject projections, both [B, d_p].
SimilarityMatrix similarity_matrix(const Tensor& p_img, const Tensor& p_roi, double tau);

/// Gradients of a scalar objective through the similarity matrix back to the
/// projection rows, given dL/dS.
struct SimilarityGrads {
    Tensor d_p_img;  // [B, d_p]
    Tensor d_p_roi;  // [B, d_p]
};

SimilarityGrads similarity_matrix_backward(const Tensor& p_img, const Tensor& p_roi, double tau,
                                           const Tensor& d_s);

struct InfoNceResult {
    double loss = 0.0;
    Tensor d_s;  // analytic gradient wrt S, [B, B]
};

/// Bidirectional InfoNCE: mean over subjects of the row- and column-softmax
/// negative log likelihood of the diagonal, log-sum-exp stabilized.
InfoNceResult info_nce(const SimilarityMatrix& sim);

/// [z_img; z_roi], imaging block first.
Tensor fuse_concat(const Tensor& z_img, const Tensor& z_roi);

struct LossBreakdown {
    double cls = 0.0;
    double con = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

LossBreakdown joint_loss(double l_cls, double l_con, double lambda);

}  // namespace neurofuse
