#pragma once

#include <functional>
#include <string>
#include <utility>

#include "neurofuse/tensor.hpp"

namespace neurofuse::ops {

// ---------------------------------------------------------------------------
// Matrix multiply
// ---------------------------------------------------------------------------

/// C[i,j] = sum_l A[i,l] * B[l,j]. A is [m,k], B is [k,n].
Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
    Tensor d_a;
    Tensor d_b;
};

/// dA = dC * B^T, dB = A^T * dC.
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& d_c);

// ---------------------------------------------------------------------------
// 3-D convolution (cross-correlation), "same" zero padding, odd kernel.
// input [C,D,H,W], kernels [F,C,k,k,k], output [F,ceil(D/s),ceil(H/s),ceil(W/s)].
// ---------------------------------------------------------------------------

Tensor conv3d(const Tensor& input, const Tensor& kernels, int stride);

struct Conv3dGrads {
    Tensor d_input;
    Tensor d_kernels;
};

Conv3dGrads conv3d_backward(const Tensor& input, const Tensor& kernels, int stride,
                            const Tensor& d_output);

// ---------------------------------------------------------------------------
// Elementwise ReLU; subgradient at 0 is 0.
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& d_y);

// ---------------------------------------------------------------------------
// Global mean pool over all spatial axes of [F, spatial...] -> [F].
// ---------------------------------------------------------------------------

Tensor global_mean_pool(const Tensor& x);
Tensor global_mean_pool_backward(const Tensor& x, const Tensor& d_y);

// ---------------------------------------------------------------------------
// Cosine similarity with degenerate (zero-norm) handling.
// ---------------------------------------------------------------------------

struct CosineResult {
    double value = 0.0;
    bool degenerate = false;  // true when either argument has zero norm
};

CosineResult cosine_sim(const Tensor& u, const Tensor& v);

struct CosineGrads {
    Tensor d_u;
    Tensor d_v;
};

/// Gradient of d_out * cosine_sim(u, v). Zero gradients on degenerate input.
CosineGrads cosine_sim_backward(const Tensor& u, const Tensor& v, double d_out);

// ---------------------------------------------------------------------------
// Softmax cross-entropy over a logit vector, log-sum-exp stabilized.
// ---------------------------------------------------------------------------

struct XentResult {
    double loss = 0.0;
    Tensor grad;  // softmax(logits) - onehot(label)
};

XentResult softmax_xent(const Tensor& logits, std::size_t label);

/// Softmax probabilities of a logit vector (max-shifted).
Tensor softmax(const Tensor& logits);

// ---------------------------------------------------------------------------
// Central finite-difference gradient checker.
// ---------------------------------------------------------------------------

struct GradCheckReport {
    std::string op_name;
    double max_rel_error = 0.0;
    double eps = 0.0;
};

/// Compares an analytic gradient against central differences of f at x.
/// Relative error per coordinate: |analytic - central| / max(1, |analytic|, |central|).
GradCheckReport finite_diff_check(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, const Tensor& analytic_grad,
                                  double eps = 1e-3, const std::string& op_name = "");

}  // namespace neurofuse::ops
