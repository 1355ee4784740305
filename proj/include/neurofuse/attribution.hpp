#pragma once

#include <string>
#include <vector>

#include "neurofuse/cohort.hpp"
#include "neurofuse/encoders.hpp"
#include "neurofuse/roigraph.hpp"

namespace neurofuse {

/// Per-ROI contribution scores in [0,1]. After min-max normalization the map
/// attains 0 and 1 unless the raw map was constant, in which case it is all
/// zeros.
struct ContributionMap {
    std::vector<double> scores;  // length R
    std::string branch;          // "imaging", "roi", or "joint"
    std::string class_tag;       // "disorder" or "control"
};

/// Min-max normalization with the constant-map-to-zeros convention.
std::vector<double> min_max_normalize(const std::vector<double>& raw);

/// Grad-CAM on the imaging branch: channel weights are the spatial mean of
/// d(logit_target)/d(last conv activation); the CAM is the ReLU of the
/// weighted activation sum, nearest-neighbor upsampled to volume dims, then
/// averaged per ROI and min-max normalized.
ContributionMap gradcam_imaging(const ParamSet& params, const ModelConfig& cfg,
                                const Volume& volume, const AtlasLabelMap& atlas,
                                int target_class);

/// Graph-branch analog: node relevance = sum over hidden channels of
/// relu(gradient * activation) at the last message-passing layer.
ContributionMap gradcam_roi(const ParamSet& params, const ModelConfig& cfg, const RoiGraph& graph,
                            int target_class);

/// Region-wise mean over the given maps, then re-normalized.
ContributionMap class_average_map(const std::vector<ContributionMap>& maps,
                                  const std::string& class_tag);

/// Jaccard overlap of the top-ceil(top_fraction*R) ROI sets; ties broken by
/// ROI index.
double branch_overlap(const ContributionMap& a, const ContributionMap& b, double top_fraction);

/// CSV dump: header `roi_id,score`, 4 decimals.
void write_map_csv(const std::string& path, const ContributionMap& map);

}  // namespace neurofuse
