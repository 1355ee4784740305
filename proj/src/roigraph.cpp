#include "neurofuse/roigraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

namespace neurofuse {

namespace {

std::vector<std::vector<double>> roi_values(const Volume& volume, const AtlasLabelMap& atlas) {
    if (volume.dims != atlas.dims)
        throw DimensionError("volume dims do not match atlas dims");
    std::vector<std::vector<double>> vals(atlas.roi_count);
    for (std::size_t i = 0; i < atlas.labels.size(); ++i) {
        const std::int32_t lab = atlas.labels[i];
        if (lab > 0) vals[static_cast<std::size_t>(lab - 1)].push_back(volume.values[i]);
    }
    for (std::size_t r = 0; r < vals.size(); ++r)
        if (vals[r].empty())
            throw ParcellationError("ROI " + std::to_string(r + 1) + " has no voxels");
    return vals;
}

}  // namespace

Tensor roi_mean_features(const Volume& volume, const AtlasLabelMap& atlas) {
    auto vals = roi_values(volume, atlas);
    Tensor feats({vals.size(), 1});
    for (std::size_t r = 0; r < vals.size(); ++r) {
        // summing in sorted order makes the mean independent of voxel order,
        // so within-ROI permutations leave the graph bitwise unchanged
        std::sort(vals[r].begin(), vals[r].end());
        double acc = 0.0;
        for (double v : vals[r]) acc += v;
        feats.at(r, 0) = acc / static_cast<double>(vals[r].size());
    }
    return feats;
}

Tensor roi_descriptor(const Volume& volume, const AtlasLabelMap& atlas, std::size_t q) {
    if (q < 2) throw ConfigError("descriptor quantile count must be >= 2");
    auto vals = roi_values(volume, atlas);
    Tensor desc({vals.size(), q});
    for (std::size_t r = 0; r < vals.size(); ++r) {
        std::sort(vals[r].begin(), vals[r].end());
        const std::size_t n = vals[r].size();
        for (std::size_t k = 0; k < q; ++k) {
            // nearest-rank: value at index ceil(p*n) of the 1-based sorted list
            const double p = (static_cast<double>(k) + 0.5) / static_cast<double>(q);
            std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
            rank = std::min(std::max<std::size_t>(rank, 1), n);
            desc.at(r, k) = vals[r][rank - 1];
        }
    }
    return desc;
}

PearsonResult pearson(const Tensor& u, const Tensor& v) {
    if (!u.same_shape(v) || u.rank() != 1)
        throw DimensionError("pearson expects equal-length vectors");
    const std::size_t n = u.size();
    if (n < 2) throw DimensionError("pearson needs length >= 2");
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mu += u[i];
        mv += v[i];
    }
    mu /= static_cast<double>(n);
    mv /= static_cast<double>(n);
    double suu = 0.0, svv = 0.0, suv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double du = u[i] - mu, dv = v[i] - mv;
        suu += du * du;
        svv += dv * dv;
        suv += du * dv;
    }
    if (suu == 0.0 || svv == 0.0) return {0.0, true};
    return {suv / std::sqrt(suu * svv), false};
}

Tensor normalize_adjacency(const Tensor& a) {
    if (a.rank() != 2 || a.extent(0) != a.extent(1))
        throw DimensionError("normalize_adjacency expects a square matrix");
    const std::size_t r = a.extent(0);
    Tensor w({r, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) w.at(i, j) = (a.at(i, j) + 1.0) / 2.0;
    std::vector<double> deg(r, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) deg[i] += w.at(i, j);
    for (std::size_t i = 0; i < r; ++i)
        if (!(deg[i] > 0.0))
            throw NumericError("zero row sum in mapped adjacency; unit diagonal expected");
    Tensor p({r, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
            p.at(i, j) = w.at(i, j) / std::sqrt(deg[i] * deg[j]);
    return p;
}

RoiGraph build_graph(const Volume& volume, const AtlasLabelMap& atlas, std::size_t q) {
    RoiGraph g;
    g.node_features = roi_mean_features(volume, atlas);
    g.descriptors = roi_descriptor(volume, atlas, q);
    const std::size_t r = g.node_features.extent(0);
    g.adjacency = Tensor({r, r});
    for (std::size_t i = 0; i < r; ++i) {
        g.adjacency.at(i, i) = 1.0;
        Tensor di({q});
        for (std::size_t k = 0; k < q; ++k) di[k] = g.descriptors.at(i, k);
        for (std::size_t j = i + 1; j < r; ++j) {
            Tensor dj({q});
            for (std::size_t k = 0; k < q; ++k) dj[k] = g.descriptors.at(j, k);
            const double c = pearson(di, dj).value;
            g.adjacency.at(i, j) = c;
            g.adjacency.at(j, i) = c;
        }
    }
    g.prop_matrix = normalize_adjacency(g.adjacency);
    return g;
}

void write_adjacency_csv(const std::string& path, const Tensor& adjacency) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path);
    const std::size_t r = adjacency.extent(0);
    char buf[32];
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", adjacency.at(i, j));
            if (j) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace neurofuse
