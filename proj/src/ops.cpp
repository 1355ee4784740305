#include "neurofuse/ops.hpp"

#include <algorithm>
#include <cmath>

namespace neurofuse::ops {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank)
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                             ", got shape " + t.shape_string());
}

std::size_t out_extent(std::size_t in, int stride) {
    return (in + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.extent(1) != b.extent(0))
        throw DimensionError("matmul inner extents differ: " + a.shape_string() + " vs " +
                             b.shape_string());
    a.require_finite("matmul lhs");
    b.require_finite("matmul rhs");
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a.at(i, l);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) c.at(i, j) += av * b.at(l, j);
        }
    }
    return c;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& d_c) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (d_c.rank() != 2 || d_c.extent(0) != m || d_c.extent(1) != n)
        throw DimensionError("matmul_backward: dC shape " + d_c.shape_string() +
                             " does not match output");
    MatmulGrads g{Tensor({m, k}), Tensor({k, n})};
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = d_c.at(i, j);
            if (d == 0.0) continue;
            for (std::size_t l = 0; l < k; ++l) {
                g.d_a.at(i, l) += d * b.at(l, j);
                g.d_b.at(l, j) += a.at(i, l) * d;
            }
        }
    return g;
}

Tensor conv3d(const Tensor& input, const Tensor& kernels, int stride) {
    require_rank(input, 4, "conv3d input");
    require_rank(kernels, 5, "conv3d kernels");
    input.require_finite("conv3d input");
    kernels.require_finite("conv3d kernels");
    const std::size_t c = input.extent(0), d = input.extent(1), h = input.extent(2),
                      w = input.extent(3);
    const std::size_t f = kernels.extent(0), kc = kernels.extent(1), k = kernels.extent(2);
    if (kc != c)
        throw DimensionError("conv3d channel mismatch: input " + input.shape_string() +
                             " vs kernels " + kernels.shape_string());
    if (kernels.extent(3) != k || kernels.extent(4) != k || k % 2 == 0)
        throw DimensionError("conv3d kernels must be cubic with odd extent, got " +
                             kernels.shape_string());
    const std::size_t pad = (k - 1) / 2;
    if (k > d + 2 * pad || k > h + 2 * pad || k > w + 2 * pad)
        throw DimensionError("conv3d kernel larger than padded input");
    if (stride < 1) throw DimensionError("conv3d stride must be >= 1");
    const std::size_t od = out_extent(d, stride), oh = out_extent(h, stride),
                      ow = out_extent(w, stride);
    Tensor out({f, od, oh, ow});

    const auto in_at = [&](std::size_t ci, long zi, long yi, long xi) -> double {
        if (zi < 0 || yi < 0 || xi < 0 || zi >= static_cast<long>(d) ||
            yi >= static_cast<long>(h) || xi >= static_cast<long>(w))
            return 0.0;
        return input[((ci * d + static_cast<std::size_t>(zi)) * h + static_cast<std::size_t>(yi)) * w +
                     static_cast<std::size_t>(xi)];
    };

    for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t oz = 0; oz < od; ++oz)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t kz = 0; kz < k; ++kz)
                            for (std::size_t ky = 0; ky < k; ++ky)
                                for (std::size_t kx = 0; kx < k; ++kx) {
                                    const long zi = static_cast<long>(oz) * stride +
                                                    static_cast<long>(kz) - static_cast<long>(pad);
                                    const long yi = static_cast<long>(oy) * stride +
                                                    static_cast<long>(ky) - static_cast<long>(pad);
                                    const long xi = static_cast<long>(ox) * stride +
                                                    static_cast<long>(kx) - static_cast<long>(pad);
                                    acc += in_at(ci, zi, yi, xi) *
                                           kernels[(((fi * c + ci) * k + kz) * k + ky) * k + kx];
                                }
                    out[((fi * od + oz) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

Conv3dGrads conv3d_backward(const Tensor& input, const Tensor& kernels, int stride,
                            const Tensor& d_output) {
    const std::size_t c = input.extent(0), d = input.extent(1), h = input.extent(2),
                      w = input.extent(3);
    const std::size_t f = kernels.extent(0), k = kernels.extent(2);
    const std::size_t pad = (k - 1) / 2;
    const std::size_t od = out_extent(d, stride), oh = out_extent(h, stride),
                      ow = out_extent(w, stride);
    if (d_output.rank() != 4 || d_output.extent(0) != f || d_output.extent(1) != od ||
        d_output.extent(2) != oh || d_output.extent(3) != ow)
        throw DimensionError("conv3d_backward: dOut shape " + d_output.shape_string() +
                             " does not match forward output");

    Conv3dGrads g{Tensor(input.shape()), Tensor(kernels.shape())};
    for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t oz = 0; oz < od; ++oz)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double dv = d_output[((fi * od + oz) * oh + oy) * ow + ox];
                    if (dv == 0.0) continue;
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t kz = 0; kz < k; ++kz)
                            for (std::size_t ky = 0; ky < k; ++ky)
                                for (std::size_t kx = 0; kx < k; ++kx) {
                                    const long zi = static_cast<long>(oz) * stride +
                                                    static_cast<long>(kz) - static_cast<long>(pad);
                                    const long yi = static_cast<long>(oy) * stride +
                                                    static_cast<long>(ky) - static_cast<long>(pad);
                                    const long xi = static_cast<long>(ox) * stride +
                                                    static_cast<long>(kx) - static_cast<long>(pad);
                                    if (zi < 0 || yi < 0 || xi < 0 ||
                                        zi >= static_cast<long>(d) || yi >= static_cast<long>(h) ||
                                        xi >= static_cast<long>(w))
                                        continue;
                                    const std::size_t in_idx =
                                        ((ci * d + static_cast<std::size_t>(zi)) * h +
                                         static_cast<std::size_t>(yi)) *
                                            w +
                                        static_cast<std::size_t>(xi);
                                    const std::size_t k_idx =
                                        (((fi * c + ci) * k + kz) * k + ky) * k + kx;
                                    g.d_input[in_idx] += dv * kernels[k_idx];
                                    g.d_kernels[k_idx] += dv * input[in_idx];
                                }
                }
    return g;
}

Tensor relu(const Tensor& x) {
    x.require_finite("relu input");
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& d_y) {
    if (!x.same_shape(d_y)) throw DimensionError("relu_backward shape mismatch");
    Tensor d_x(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) d_x[i] = x[i] > 0.0 ? d_y[i] : 0.0;
    return d_x;
}

Tensor global_mean_pool(const Tensor& x) {
    if (x.rank() < 2) throw DimensionError("global_mean_pool needs [F, spatial...] input");
    const std::size_t f = x.extent(0);
    std::size_t spatial = 1;
    for (std::size_t a = 1; a < x.rank(); ++a) spatial *= x.extent(a);
    if (spatial == 0) throw DimensionError("global_mean_pool: empty spatial volume");
    x.require_finite("global_mean_pool input");
    Tensor y({f});
    for (std::size_t fi = 0; fi < f; ++fi) {
        double acc = 0.0;
        for (std::size_t s = 0; s < spatial; ++s) acc += x[fi * spatial + s];
        y[fi] = acc / static_cast<double>(spatial);
    }
    return y;
}

Tensor global_mean_pool_backward(const Tensor& x, const Tensor& d_y) {
    const std::size_t f = x.extent(0);
    if (d_y.rank() != 1 || d_y.extent(0) != f)
        throw DimensionError("global_mean_pool_backward: dY must be [F]");
    std::size_t spatial = 1;
    for (std::size_t a = 1; a < x.rank(); ++a) spatial *= x.extent(a);
    Tensor d_x(x.shape());
    const double inv = 1.0 / static_cast<double>(spatial);
    for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t s = 0; s < spatial; ++s) d_x[fi * spatial + s] = d_y[fi] * inv;
    return d_x;
}

CosineResult cosine_sim(const Tensor& u, const Tensor& v) {
    if (!u.same_shape(v))
        throw DimensionError("cosine_sim shape mismatch: " + u.shape_string() + " vs " +
                             v.shape_string());
    u.require_finite("cosine_sim lhs");
    v.require_finite("cosine_sim rhs");
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uu += u[i] * u[i];
        vv += v[i] * v[i];
        uv += u[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) return {0.0, true};
    return {uv / (std::sqrt(uu) * std::sqrt(vv)), false};
}

CosineGrads cosine_sim_backward(const Tensor& u, const Tensor& v, double d_out) {
    CosineGrads g{Tensor(u.shape()), Tensor(v.shape())};
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uu += u[i] * u[i];
        vv += v[i] * v[i];
        uv += u[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) return g;  // degenerate: flat zero gradient
    const double nu = std::sqrt(uu), nv = std::sqrt(vv);
    const double cos = uv / (nu * nv);
    for (std::size_t i = 0; i < u.size(); ++i) {
        g.d_u[i] = d_out * (v[i] / (nu * nv) - cos * u[i] / uu);
        g.d_v[i] = d_out * (u[i] / (nu * nv) - cos * v[i] / vv);
    }
    return g;
}

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 1, "softmax");
    logits.require_finite("softmax logits");
    double mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    Tensor p(logits.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) p[i] /= z;
    return p;
}

XentResult softmax_xent(const Tensor& logits, std::size_t label) {
    require_rank(logits, 1, "softmax_xent");
    if (label >= logits.size())
        throw std::out_of_range("softmax_xent: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) + " classes");
    logits.require_finite("softmax_xent logits");
    double mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
    XentResult r;
    r.loss = mx + std::log(z) - logits[label];
    r.grad = Tensor(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) r.grad[i] = std::exp(logits[i] - mx) / z;
    r.grad[label] -= 1.0;
    return r;
}

GradCheckReport finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  const Tensor& analytic_grad, double eps,
                                  const std::string& op_name) {
    if (!x.same_shape(analytic_grad))
        throw DimensionError("finite_diff_check: gradient shape mismatch");
    GradCheckReport report{op_name, 0.0, eps};
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double fp = f(probe);
        probe[i] = orig - eps;
        const double fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_check: non-finite function value");
        const double central = (fp - fm) / (2.0 * eps);
        const double a = analytic_grad[i];
        const double rel =
            std::abs(a - central) / std::max({1.0, std::abs(a), std::abs(central)});
        report.max_rel_error = std::max(report.max_rel_error, rel);
    }
    return report;
}

}  // namespace neurofuse::ops
