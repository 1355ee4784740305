#pragma once

#include <string>

#include "neurofuse/cohort.hpp"
#include "neurofuse/tensor.hpp"

namespace neurofuse {

struct ParcellationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Subject-specific ROI graph: node features, quantile descriptors, Pearson
/// adjacency, and the symmetric-normalized propagation matrix.
struct RoiGraph {
    Tensor node_features;  // [R, 1] mean intensity per ROI
    Tensor descriptors;    // [R, Q] nearest-rank quantile vectors
    Tensor adjacency;      // [R, R] Pearson, symmetric, unit diagonal
    Tensor prop_matrix;    // [R, R] D^{-1/2} (A+1)/2 D^{-1/2}

    std::size_t roi_count() const { return node_features.extent(0); }
};

/// Mean voxel intensity per ROI, background (label 0) excluded. [R, 1].
Tensor roi_mean_features(const Volume& volume, const AtlasLabelMap& atlas);

/// Nearest-rank quantiles of each ROI's intensities at levels (k-0.5)/Q. [R, Q].
Tensor roi_descriptor(const Volume& volume, const AtlasLabelMap& atlas, std::size_t q);

struct PearsonResult {
    double value = 0.0;
    bool degenerate = false;  // zero variance in either input
};

PearsonResult pearson(const Tensor& u, const Tensor& v);

/// Maps a Pearson adjacency to [0,1] via (A+1)/2 and applies symmetric
/// degree normalization D^{-1/2} W D^{-1/2}.
Tensor normalize_adjacency(const Tensor& a);

RoiGraph build_graph(const Volume& volume, const AtlasLabelMap& atlas, std::size_t q);

/// CSV dump of the adjacency: R rows of R comma-separated values, 9 significant digits.
void write_adjacency_csv(const std::string& path, const Tensor& adjacency);

}  // namespace neurofuse
