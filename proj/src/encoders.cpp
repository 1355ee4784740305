#include "neurofuse/encoders.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "neurofuse/ops.hpp"
#include "neurofuse/rng.hpp"

namespace neurofuse {

using nlohmann::json;
namespace O = ops;

RoiEncoderKind parse_roi_encoder(const std::string& name) {
    if (name == "gcn") return RoiEncoderKind::Gcn;
    if (name == "mlp") return RoiEncoderKind::Mlp;
    throw ConfigError("unknown roi encoder '" + name + "' (valid: gcn, mlp)");
}

BranchMode parse_branch_mode(const std::string& name) {
    if (name == "img") return BranchMode::Img;
    if (name == "roi") return BranchMode::Roi;
    if (name == "joint") return BranchMode::Joint;
    throw ConfigError("unknown branch mode '" + name + "' (valid: img, roi, joint)");
}

FusionKind parse_fusion_kind(const std::string& name) {
    if (name == "concat") return FusionKind::Concat;
    if (name == "contra") return FusionKind::Contra;
    throw ConfigError("unknown fusion '" + name + "' (valid: concat, contra)");
}

std::string roi_encoder_name(RoiEncoderKind k) {
    return k == RoiEncoderKind::Gcn ? "gcn" : "mlp";
}
std::string branch_mode_name(BranchMode m) {
    switch (m) {
        case BranchMode::Img: return "img";
        case BranchMode::Roi: return "roi";
        case BranchMode::Joint: return "joint";
    }
    return "joint";
}
std::string fusion_kind_name(FusionKind k) {
    return k == FusionKind::Concat ? "concat" : "contra";
}

Tensor& ParamSet::at(const std::string& name) {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return values_[i];
    throw ConfigError("no parameter named '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return values_[i];
    throw ConfigError("no parameter named '" + name + "'");
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i)
        out.add(names_[i], Tensor(values_[i].shape()));
    return out;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

namespace {

constexpr std::size_t kConv1Filters = 8;
constexpr std::size_t kConv2Filters = 16;
constexpr std::size_t kKernel = 3;

Tensor xavier(const std::vector<std::size_t>& shape, std::size_t fan_in, std::size_t fan_out,
              Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
    return t;
}

void add_dense(ParamSet& p, const std::string& prefix, std::size_t in, std::size_t out,
               Rng& rng) {
    p.add(prefix + ".w", xavier({in, out}, in, out, rng));
    p.add(prefix + ".b", Tensor({out}));
}

// y[1,out] = x[1,in] * W + b, caching nothing; backward via matmul rules.
Tensor dense(const Tensor& x_row, const Tensor& w, const Tensor& b) {
    Tensor y = O::matmul(x_row, w);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += b[j];
    return y;
}

Tensor as_row(const Tensor& v) {
    return Tensor({1, v.size()}, v.values());
}

Tensor as_vec(const Tensor& row) {
    return Tensor({row.size()}, row.values());
}

void dense_backward(const Tensor& x_row, const Tensor& w, const Tensor& d_y_row, Tensor& d_w,
                    Tensor& d_b, Tensor& d_x_row) {
    auto g = O::matmul_backward(x_row, w, d_y_row);
    axpy(d_w, 1.0, g.d_b);
    d_x_row = std::move(g.d_a);
    for (std::size_t j = 0; j < d_b.size(); ++j) d_b[j] += d_y_row[j];
}

}  // namespace

ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    ParamSet p;
    const std::size_t k3 = kKernel * kKernel * kKernel;
    if (cfg.branches != BranchMode::Roi) {
        p.add("img.conv1.w",
              xavier({kConv1Filters, 1, kKernel, kKernel, kKernel}, 1 * k3, kConv1Filters * k3,
                     rng));
        p.add("img.conv1.b", Tensor({kConv1Filters}));
        p.add("img.conv2.w", xavier({kConv2Filters, kConv1Filters, kKernel, kKernel, kKernel},
                                    kConv1Filters * k3, kConv2Filters * k3, rng));
        p.add("img.conv2.b", Tensor({kConv2Filters}));
        add_dense(p, "img.head", kConv2Filters, cfg.d_img, rng);
    }
    if (cfg.branches != BranchMode::Img) {
        if (cfg.roi_encoder == RoiEncoderKind::Gcn) {
            add_dense(p, "gcn.layer1", 1, cfg.gcn_hidden, rng);
            add_dense(p, "gcn.layer2", cfg.gcn_hidden, cfg.gcn_hidden, rng);
            add_dense(p, "gcn.head", cfg.gcn_hidden, cfg.d_roi, rng);
        } else {
            add_dense(p, "mlp.layer1", cfg.roi_count, cfg.mlp_hidden, rng);
            add_dense(p, "mlp.layer2", cfg.mlp_hidden, cfg.d_roi, rng);
        }
    }
    if (cfg.branches == BranchMode::Joint) {
        add_dense(p, "proj_img.layer1", cfg.d_img, cfg.proj_hidden, rng);
        add_dense(p, "proj_img.layer2", cfg.proj_hidden, cfg.d_p, rng);
        add_dense(p, "proj_roi.layer1", cfg.d_roi, cfg.proj_hidden, rng);
        add_dense(p, "proj_roi.layer2", cfg.proj_hidden, cfg.d_p, rng);
    }
    add_dense(p, "cls", cfg.fused_dim(), 2, rng);
    return p;
}

void save_params(const std::string& path, const ParamSet& params) {
    json manifest = json::array();
    for (std::size_t i = 0; i < params.count(); ++i) {
        manifest.push_back({{"name", params.name(i)}, {"shape", params.value(i).shape()}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    const std::string line = json{{"layers", manifest}}.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    for (std::size_t i = 0; i < params.count(); ++i) {
        const auto& v = params.value(i).values();
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw FormatError("write failed: " + path);
}

ParamSet load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("missing checkpoint manifest: " + path);
    json manifest;
    try {
        manifest = json::parse(line);
    } catch (const json::exception& e) {
        throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
    }
    ParamSet p;
    for (const auto& layer : manifest.at("layers")) {
        std::vector<std::size_t> shape = layer.at("shape").get<std::vector<std::size_t>>();
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != t.size() * sizeof(double))
            throw FormatError("truncated checkpoint payload in " + path);
        p.add(layer.at("name").get<std::string>(), std::move(t));
    }
    return p;
}

Tensor volume_to_tensor(const Volume& v) {
    Tensor t({1, v.dims[2], v.dims[1], v.dims[0]});
    for (std::size_t i = 0; i < v.values.size(); ++i) t[i] = static_cast<double>(v.values[i]);
    return t;
}

ImagingCache encode_image(const Volume& volume, const ParamSet& params, const ModelConfig& cfg) {
    ImagingCache c;
    c.input = volume_to_tensor(volume);
    c.pre1 = O::conv3d(c.input, params.at("img.conv1.w"), 2);
    {
        const Tensor& b = params.at("img.conv1.b");
        const std::size_t spatial = c.pre1.size() / kConv1Filters;
        for (std::size_t f = 0; f < kConv1Filters; ++f)
            for (std::size_t s = 0; s < spatial; ++s) c.pre1[f * spatial + s] += b[f];
    }
    c.act1 = O::relu(c.pre1);
    c.pre2 = O::conv3d(c.act1, params.at("img.conv2.w"), 2);
    {
        const Tensor& b = params.at("img.conv2.b");
        const std::size_t spatial = c.pre2.size() / kConv2Filters;
        for (std::size_t f = 0; f < kConv2Filters; ++f)
            for (std::size_t s = 0; s < spatial; ++s) c.pre2[f * spatial + s] += b[f];
    }
    c.act2 = O::relu(c.pre2);
    c.pooled = O::global_mean_pool(c.act2);
    c.embedding =
        as_vec(dense(as_row(c.pooled), params.at("img.head.w"), params.at("img.head.b")));
    if (c.embedding.size() != cfg.d_img)
        throw ConfigError("imaging head output does not match configured d_img");
    return c;
}

Tensor encode_image_backward(const ImagingCache& cache, const ParamSet& params,
                             const ModelConfig& cfg, const Tensor& d_embedding, ParamSet& grads) {
    (void)cfg;
    Tensor d_pooled_row;
    dense_backward(as_row(cache.pooled), params.at("img.head.w"), as_row(d_embedding),
                   grads.at("img.head.w"), grads.at("img.head.b"), d_pooled_row);
    Tensor d_act2 = O::global_mean_pool_backward(cache.act2, as_vec(d_pooled_row));
    Tensor d_pre2 = O::relu_backward(cache.pre2, d_act2);
    {
        Tensor& d_b = grads.at("img.conv2.b");
        const std::size_t spatial = d_pre2.size() / kConv2Filters;
        for (std::size_t f = 0; f < kConv2Filters; ++f)
            for (std::size_t s = 0; s < spatial; ++s) d_b[f] += d_pre2[f * spatial + s];
    }
    auto g2 = O::conv3d_backward(cache.act1, params.at("img.conv2.w"), 2, d_pre2);
    axpy(grads.at("img.conv2.w"), 1.0, g2.d_kernels);
    Tensor d_pre1 = O::relu_backward(cache.pre1, g2.d_input);
    {
        Tensor& d_b = grads.at("img.conv1.b");
        const std::size_t spatial = d_pre1.size() / kConv1Filters;
        for (std::size_t f = 0; f < kConv1Filters; ++f)
            for (std::size_t s = 0; s < spatial; ++s) d_b[f] += d_pre1[f * spatial + s];
    }
    auto g1 = O::conv3d_backward(cache.input, params.at("img.conv1.w"), 2, d_pre1);
    axpy(grads.at("img.conv1.w"), 1.0, g1.d_kernels);
    return std::move(g1.d_input);
}

RoiCache encode_roi_gcn(const RoiGraph& graph, const ParamSet& params, const ModelConfig& cfg) {
    RoiCache c;
    c.node_features = graph.node_features;
    c.prop = graph.prop_matrix;
    const std::size_t r = graph.roi_count();

    // H1 = relu(P X W1 + b1)
    Tensor px = O::matmul(c.prop, c.node_features);       // [R,1]
    Tensor pre1 = O::matmul(px, params.at("gcn.layer1.w"));  // [R,h]
    const Tensor& b1 = params.at("gcn.layer1.b");
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cfg.gcn_hidden; ++j) pre1.at(i, j) += b1[j];
    c.pre1 = std::move(pre1);
    c.act1 = O::relu(c.pre1);

    // H2 = relu(P H1 W2 + b2)
    Tensor ph1 = O::matmul(c.prop, c.act1);
    Tensor pre2 = O::matmul(ph1, params.at("gcn.layer2.w"));
    const Tensor& b2 = params.at("gcn.layer2.b");
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cfg.gcn_hidden; ++j) pre2.at(i, j) += b2[j];
    c.pre2 = std::move(pre2);
    c.act2 = O::relu(c.pre2);

    // node-mean pool then linear head
    c.pooled = Tensor({cfg.gcn_hidden});
    for (std::size_t j = 0; j < cfg.gcn_hidden; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < r; ++i) acc += c.act2.at(i, j);
        c.pooled[j] = acc / static_cast<double>(r);
    }
    c.embedding = as_vec(dense(as_row(c.pooled), params.at("gcn.head.w"), params.at("gcn.head.b")));
    return c;
}

Tensor encode_roi_gcn_backward(const RoiCache& cache, const ParamSet& params,
                               const ModelConfig& cfg, const Tensor& d_embedding,
                               ParamSet& grads) {
    const std::size_t r = cache.node_features.extent(0);
    Tensor d_pooled_row;
    dense_backward(as_row(cache.pooled), params.at("gcn.head.w"), as_row(d_embedding),
                   grads.at("gcn.head.w"), grads.at("gcn.head.b"), d_pooled_row);

    Tensor d_act2({r, cfg.gcn_hidden});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cfg.gcn_hidden; ++j)
            d_act2.at(i, j) = d_pooled_row[j] / static_cast<double>(r);
    Tensor d_pre2 = O::relu_backward(cache.pre2, d_act2);
    {
        Tensor& d_b = grads.at("gcn.layer2.b");
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < cfg.gcn_hidden; ++j) d_b[j] += d_pre2.at(i, j);
    }
    Tensor ph1 = O::matmul(cache.prop, cache.act1);
    auto g2 = O::matmul_backward(ph1, params.at("gcn.layer2.w"), d_pre2);
    axpy(grads.at("gcn.layer2.w"), 1.0, g2.d_b);
    // d(act1) = P^T * d(ph1); P is symmetric but keep the transpose explicit
    auto gp1 = O::matmul_backward(cache.prop, cache.act1, g2.d_a);
    Tensor d_act1 = std::move(gp1.d_b);

    Tensor d_pre1 = O::relu_backward(cache.pre1, d_act1);
    {
        Tensor& d_b = grads.at("gcn.layer1.b");
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < cfg.gcn_hidden; ++j) d_b[j] += d_pre1.at(i, j);
    }
    Tensor px = O::matmul(cache.prop, cache.node_features);
    auto g1 = O::matmul_backward(px, params.at("gcn.layer1.w"), d_pre1);
    axpy(grads.at("gcn.layer1.w"), 1.0, g1.d_b);
    auto gp0 = O::matmul_backward(cache.prop, cache.node_features, g1.d_a);
    return std::move(gp0.d_b);  // d(node_features), [R,1]
}

RoiCache encode_roi_mlp(const RoiGraph& graph, const ParamSet& params, const ModelConfig& cfg) {
    RoiCache c;
    c.node_features = graph.node_features;
    const std::size_t r = graph.roi_count();
    if (r != cfg.roi_count)
        throw ConfigError("graph has " + std::to_string(r) + " ROIs but model expects " +
                          std::to_string(cfg.roi_count));
    Tensor x({1, r}, c.node_features.values());
    c.pre1 = dense(x, params.at("mlp.layer1.w"), params.at("mlp.layer1.b"));
    c.act1 = O::relu(c.pre1);
    c.embedding =
        as_vec(dense(c.act1, params.at("mlp.layer2.w"), params.at("mlp.layer2.b")));
    return c;
}

Tensor encode_roi_mlp_backward(const RoiCache& cache, const ParamSet& params,
                               const ModelConfig& cfg, const Tensor& d_embedding,
                               ParamSet& grads) {
    (void)cfg;
    Tensor d_act1;
    dense_backward(cache.act1, params.at("mlp.layer2.w"), as_row(d_embedding),
                   grads.at("mlp.layer2.w"), grads.at("mlp.layer2.b"), d_act1);
    Tensor d_pre1 = O::relu_backward(cache.pre1, d_act1);
    Tensor x({1, cache.node_features.size()}, cache.node_features.values());
    Tensor d_x;
    dense_backward(x, params.at("mlp.layer1.w"), d_pre1, grads.at("mlp.layer1.w"),
                   grads.at("mlp.layer1.b"), d_x);
    return Tensor({cache.node_features.size(), 1}, d_x.values());
}

RoiCache encode_roi(const RoiGraph& graph, const ParamSet& params, const ModelConfig& cfg) {
    return cfg.roi_encoder == RoiEncoderKind::Gcn ? encode_roi_gcn(graph, params, cfg)
                                                  : encode_roi_mlp(graph, params, cfg);
}

Tensor encode_roi_backward(const RoiCache& cache, const ParamSet& params, const ModelConfig& cfg,
                           const Tensor& d_embedding, ParamSet& grads) {
    return cfg.roi_encoder == RoiEncoderKind::Gcn
               ? encode_roi_gcn_backward(cache, params, cfg, d_embedding, grads)
               : encode_roi_mlp_backward(cache, params, cfg, d_embedding, grads);
}

ProjectionCache project(const Tensor& z, const std::string& prefix, const ParamSet& params) {
    ProjectionCache c;
    c.input = z;
    c.pre1 = dense(as_row(z), params.at(prefix + ".layer1.w"), params.at(prefix + ".layer1.b"));
    c.act1 = O::relu(c.pre1);
    c.projection =
        as_vec(dense(c.act1, params.at(prefix + ".layer2.w"), params.at(prefix + ".layer2.b")));
    return c;
}

Tensor project_backward(const ProjectionCache& cache, const std::string& prefix,
                        const ParamSet& params, const Tensor& d_projection, ParamSet& grads) {
    Tensor d_act1;
    dense_backward(cache.act1, params.at(prefix + ".layer2.w"), as_row(d_projection),
                   grads.at(prefix + ".layer2.w"), grads.at(prefix + ".layer2.b"), d_act1);
    Tensor d_pre1 = O::relu_backward(cache.pre1, d_act1);
    Tensor d_z;
    dense_backward(as_row(cache.input), params.at(prefix + ".layer1.w"), d_pre1,
                   grads.at(prefix + ".layer1.w"), grads.at(prefix + ".layer1.b"), d_z);
    return as_vec(d_z);
}

Tensor classify(const Tensor& fused, const ParamSet& params) {
    return as_vec(dense(as_row(fused), params.at("cls.w"), params.at("cls.b")));
}

Tensor classify_backward(const Tensor& fused, const ParamSet& params, const Tensor& d_logits,
                         ParamSet& grads) {
    Tensor d_fused;
    dense_backward(as_row(fused), params.at("cls.w"), as_row(d_logits), grads.at("cls.w"),
                   grads.at("cls.b"), d_fused);
    return as_vec(d_fused);
}

}  // namespace neurofuse
