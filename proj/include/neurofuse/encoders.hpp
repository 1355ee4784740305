#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "neurofuse/cohort.hpp"
#include "neurofuse/roigraph.hpp"
#include "neurofuse/tensor.hpp"

namespace neurofuse {

enum class RoiEncoderKind { Gcn, Mlp };
enum class BranchMode { Img, Roi, Joint };
enum class FusionKind { Concat, Contra };

RoiEncoderKind parse_roi_encoder(const std::string& name);
BranchMode parse_branch_mode(const std::string& name);
FusionKind parse_fusion_kind(const std::string& name);
std::string roi_encoder_name(RoiEncoderKind k);
std::string branch_mode_name(BranchMode m);
std::string fusion_kind_name(FusionKind k);

/// Architecture sizes. The conv stack (1->8->16 filters, k=3, stride 2) is fixed.
struct ModelConfig {
    std::size_t d_img = 32;
    std::size_t d_roi = 32;
    std::size_t d_p = 16;
    std::size_t gcn_hidden = 16;
    std::size_t mlp_hidden = 32;
    std::size_t proj_hidden = 32;
    std::size_t roi_count = 16;  // R, fixes MLP input width
    RoiEncoderKind roi_encoder = RoiEncoderKind::Gcn;
    BranchMode branches = BranchMode::Joint;

    std::size_t fused_dim() const {
        switch (branches) {
            case BranchMode::Img: return d_img;
            case BranchMode::Roi: return d_roi;
            case BranchMode::Joint: return d_img + d_roi;
        }
        return d_img + d_roi;
    }
};

/// Ordered, named collection of parameter tensors. Order is the checkpoint
/// manifest order and the Adam state layout.
class ParamSet {
public:
    void add(std::string name, Tensor t) {
        names_.push_back(std::move(name));
        values_.push_back(std::move(t));
    }

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    std::size_t count() const { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& value(std::size_t i) { return values_[i]; }
    const Tensor& value(std::size_t i) const { return values_[i]; }

    /// Same names and shapes, all values zero. Used for gradient accumulators.
    ParamSet zeros_like() const;

    std::size_t scalar_count() const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

/// Deterministic uniform(-a, a) initialization with a = sqrt(6/(fan_in+fan_out)).
ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed);

// Checkpoint: JSON manifest line (names + shapes) followed by the raw
// little-endian float64 payloads concatenated in manifest order.
void save_params(const std::string& path, const ParamSet& params);
ParamSet load_params(const std::string& path);

// --- imaging encoder ---------------------------------------------------------

struct ImagingCache {
    Tensor input;    // [1,D,H,W]
    Tensor pre1;     // conv1 + bias, pre-relu
    Tensor act1;     // relu
    Tensor pre2;     // conv2 + bias, pre-relu
    Tensor act2;     // relu (the Grad-CAM target activation)
    Tensor pooled;   // [16]
    Tensor embedding;  // [d_img]
};

ImagingCache encode_image(const Volume& volume, const ParamSet& params, const ModelConfig& cfg);

/// Accumulates parameter gradients into `grads`; returns d(input volume).
Tensor encode_image_backward(const ImagingCache& cache, const ParamSet& params,
                             const ModelConfig& cfg, const Tensor& d_embedding, ParamSet& grads);

// --- ROI encoders --------------------------------------------------------------

struct RoiCache {
    Tensor node_features;  // [R,1]
    Tensor prop;           // [R,R] (unused by the MLP)
    Tensor pre1, act1;     // layer 1
    Tensor pre2, act2;     // layer 2 (GCN node activations / MLP hidden)
    Tensor pooled;         // GCN only
    Tensor embedding;      // [d_roi]
};

RoiCache encode_roi_gcn(const RoiGraph& graph, const ParamSet& params, const ModelConfig& cfg);
Tensor encode_roi_gcn_backward(const RoiCache& cache, const ParamSet& params,
                               const ModelConfig& cfg, const Tensor& d_embedding,
                               ParamSet& grads);

RoiCache encode_roi_mlp(const RoiGraph& graph, const ParamSet& params, const ModelConfig& cfg);
Tensor encode_roi_mlp_backward(const RoiCache& cache, const ParamSet& params,
                               const ModelConfig& cfg, const Tensor& d_embedding,
                               ParamSet& grads);

RoiCache encode_roi(const RoiGraph& graph, const ParamSet& params, const ModelConfig& cfg);
Tensor encode_roi_backward(const RoiCache& cache, const ParamSet& params, const ModelConfig& cfg,
                           const Tensor& d_embedding, ParamSet& grads);

// --- projection heads -----------------------------------------------------------

struct ProjectionCache {
    Tensor input;
    Tensor pre1, act1;
    Tensor projection;  // [d_p]
};

/// `prefix` selects the head ("proj_img" or "proj_roi").
ProjectionCache project(const Tensor& z, const std::string& prefix, const ParamSet& params);
Tensor project_backward(const ProjectionCache& cache, const std::string& prefix,
                        const ParamSet& params, const Tensor& d_projection, ParamSet& grads);

// --- classifier -----------------------------------------------------------------

Tensor classify(const Tensor& fused, const ParamSet& params);
Tensor classify_backward(const Tensor& fused, const ParamSet& params, const Tensor& d_logits,
                         ParamSet& grads);

/// [1,D,H,W] double tensor view of a volume (D=z, H=y, W=x).
Tensor volume_to_tensor(const Volume& v);

}  // namespace neurofuse
