#include "neurofuse/objective.hpp"

#include <cmath>

#include "neurofuse/cohort.hpp"
#include "neurofuse/ops.hpp"

namespace neurofuse {

namespace O = ops;

namespace {

Tensor row_of(const Tensor& m, std::size_t i) {
    const std::size_t d = m.extent(1);
    Tensor r({d});
    for (std::size_t j = 0; j < d; ++j) r[j] = m.at(i, j);
    return r;
}

}  // namespace

SimilarityMatrix similarity_matrix(const Tensor& p_img, const Tensor& p_roi, double tau) {
    if (tau <= 0.0) throw ConfigError("temperature must be positive");
    if (p_img.rank() != 2 || p_roi.rank() != 2 || !p_img.same_shape(p_roi))
        throw DimensionError("projection batches must share shape [B, d_p]");
    const std::size_t b = p_img.extent(0);
    if (b < 1) throw DimensionError("similarity_matrix needs B >= 1");
    SimilarityMatrix sim;
    sim.tau = tau;
    sim.s = Tensor({b, b});
    for (std::size_t i = 0; i < b; ++i) {
        const Tensor pi = row_of(p_img, i);
        for (std::size_t j = 0; j < b; ++j)
            sim.s.at(i, j) = O::cosine_sim(pi, row_of(p_roi, j)).value / tau;
    }
    return sim;
}

SimilarityGrads similarity_matrix_backward(const Tensor& p_img, const Tensor& p_roi, double tau,
                                           const Tensor& d_s) {
    const std::size_t b = p_img.extent(0), d = p_img.extent(1);
    SimilarityGrads g{Tensor({b, d}), Tensor({b, d})};
    for (std::size_t i = 0; i < b; ++i) {
        const Tensor pi = row_of(p_img, i);
        for (std::size_t j = 0; j < b; ++j) {
            const double dv = d_s.at(i, j) / tau;
            if (dv == 0.0) continue;
            auto cg = O::cosine_sim_backward(pi, row_of(p_roi, j), dv);
            for (std::size_t k = 0; k < d; ++k) {
                g.d_p_img.at(i, k) += cg.d_u[k];
                g.d_p_roi.at(j, k) += cg.d_v[k];
            }
        }
    }
    return g;
}

InfoNceResult info_nce(const SimilarityMatrix& sim) {
    const Tensor& s = sim.s;
    const std::size_t b = s.extent(0);
    s.require_finite("info_nce similarities");
    InfoNceResult r;
    r.d_s = Tensor({b, b});

    // Row term: -log softmax_row(S)_ii; column term likewise on S^T.
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double mx = s.at(i, 0);
        for (std::size_t j = 1; j < b; ++j) mx = std::max(mx, s.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < b; ++j) z += std::exp(s.at(i, j) - mx);
        loss += mx + std::log(z) - s.at(i, i);
        for (std::size_t j = 0; j < b; ++j) r.d_s.at(i, j) += std::exp(s.at(i, j) - mx) / z;
        r.d_s.at(i, i) -= 1.0;
    }
    for (std::size_t j = 0; j < b; ++j) {
        double mx = s.at(0, j);
        for (std::size_t i = 1; i < b; ++i) mx = std::max(mx, s.at(i, j));
        double z = 0.0;
        for (std::size_t i = 0; i < b; ++i) z += std::exp(s.at(i, j) - mx);
        loss += mx + std::log(z) - s.at(j, j);
        for (std::size_t i = 0; i < b; ++i) r.d_s.at(i, j) += std::exp(s.at(i, j) - mx) / z;
        r.d_s.at(j, j) -= 1.0;
    }
    const double scale = 1.0 / (2.0 * static_cast<double>(b));
    r.loss = loss * scale;
    for (std::size_t i = 0; i < r.d_s.size(); ++i) r.d_s[i] *= scale;
    return r;
}

Tensor fuse_concat(const Tensor& z_img, const Tensor& z_roi) {
    Tensor out({z_img.size() + z_roi.size()});
    for (std::size_t i = 0; i < z_img.size(); ++i) out[i] = z_img[i];
    for (std::size_t i = 0; i < z_roi.size(); ++i) out[z_img.size() + i] = z_roi[i];
    return out;
}

LossBreakdown joint_loss(double l_cls, double l_con, double lambda) {
    if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    return {l_cls, l_con, lambda, l_cls + lambda * l_con};
}

}  // namespace neurofuse
