#include "neurofuse/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "neurofuse/ops.hpp"

namespace neurofuse {

std::vector<double> min_max_normalize(const std::vector<double>& raw) {
    if (raw.empty()) return {};
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    std::vector<double> out(raw.size(), 0.0);
    if (hi == lo) return out;  // constant map -> all zeros
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / (hi - lo);
    return out;
}

namespace {

// d(logit_target)/d(z_branch): the classifier is linear, so this is a slice
// of its weight column.
Tensor classifier_slice(const ParamSet& params, const ModelConfig& cfg, bool imaging,
                        int target_class) {
    const Tensor& w = params.at("cls.w");
    const std::size_t offset =
        (cfg.branches == BranchMode::Joint && !imaging) ? cfg.d_img : 0;
    const std::size_t dim = imaging ? cfg.d_img : cfg.d_roi;
    Tensor dz({dim});
    for (std::size_t j = 0; j < dim; ++j)
        dz[j] = w.at(offset + j, static_cast<std::size_t>(target_class));
    return dz;
}

}  // namespace

ContributionMap gradcam_imaging(const ParamSet& params, const ModelConfig& cfg,
                                const Volume& volume, const AtlasLabelMap& atlas,
                                int target_class) {
    if (cfg.branches == BranchMode::Roi)
        throw ConfigError("gradcam_imaging requires a model with an imaging branch");
    if (volume.dims != atlas.dims) throw ConfigError("volume dims do not match atlas dims");
    if (target_class < 0 || target_class > 1) throw ConfigError("target class must be 0 or 1");

    const ImagingCache cache = encode_image(volume, params, cfg);
    const Tensor dz = classifier_slice(params, cfg, /*imaging=*/true, target_class);

    // d(pooled)/d(logit) through the linear head, then spread over space.
    const Tensor& head_w = params.at("img.head.w");
    const std::size_t channels = cache.act2.extent(0);
    const std::size_t d2 = cache.act2.extent(1), h2 = cache.act2.extent(2),
                      w2 = cache.act2.extent(3);
    const std::size_t spatial = d2 * h2 * w2;
    std::vector<double> alpha(channels, 0.0);  // spatial mean of the gradient
    for (std::size_t f = 0; f < channels; ++f) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dz.size(); ++j) acc += head_w.at(f, j) * dz[j];
        alpha[f] = acc / static_cast<double>(spatial);
    }

    std::vector<double> cam(spatial, 0.0);
    for (std::size_t s = 0; s < spatial; ++s) {
        double acc = 0.0;
        for (std::size_t f = 0; f < channels; ++f) acc += alpha[f] * cache.act2[f * spatial + s];
        cam[s] = acc > 0.0 ? acc : 0.0;
    }

    // nearest-neighbor upsample to volume dims, then region means
    const std::size_t dx = volume.dims[0], dy = volume.dims[1], dzv = volume.dims[2];
    std::vector<double> region_sum(atlas.roi_count, 0.0);
    std::vector<std::size_t> region_count(atlas.roi_count, 0);
    for (std::size_t z = 0; z < dzv; ++z)
        for (std::size_t y = 0; y < dy; ++y)
            for (std::size_t x = 0; x < dx; ++x) {
                const std::int32_t lab = atlas.labels[x + dx * (y + dy * z)];
                if (lab <= 0) continue;
                const std::size_t cz = z * d2 / dzv, cy = y * h2 / dy, cx = x * w2 / dx;
                const double v = cam[(cz * h2 + cy) * w2 + cx];
                region_sum[static_cast<std::size_t>(lab - 1)] += v;
                region_count[static_cast<std::size_t>(lab - 1)] += 1;
            }
    std::vector<double> raw(atlas.roi_count, 0.0);
    for (std::size_t r = 0; r < atlas.roi_count; ++r)
        raw[r] = region_sum[r] / static_cast<double>(region_count[r]);

    ContributionMap map;
    map.scores = min_max_normalize(raw);
    map.branch = "imaging";
    map.class_tag = target_class == 1 ? "disorder" : "control";
    return map;
}

ContributionMap gradcam_roi(const ParamSet& params, const ModelConfig& cfg, const RoiGraph& graph,
                            int target_class) {
    if (cfg.branches == BranchMode::Img)
        throw ConfigError("gradcam_roi requires a model with an ROI branch");
    if (cfg.roi_encoder != RoiEncoderKind::Gcn)
        throw ConfigError("gradcam_roi is defined for the gcn encoder");
    if (target_class < 0 || target_class > 1) throw ConfigError("target class must be 0 or 1");

    const RoiCache cache = encode_roi_gcn(graph, params, cfg);
    const Tensor dz = classifier_slice(params, cfg, /*imaging=*/false, target_class);
    const Tensor& head_w = params.at("gcn.head.w");
    const std::size_t r = graph.roi_count();

    std::vector<double> raw(r, 0.0);
    for (std::size_t node = 0; node < r; ++node) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < cfg.gcn_hidden; ++ch) {
            double grad = 0.0;
            for (std::size_t j = 0; j < dz.size(); ++j) grad += head_w.at(ch, j) * dz[j];
            grad /= static_cast<double>(r);  // node-mean pooling
            const double ga = grad * cache.act2.at(node, ch);
            if (ga > 0.0) acc += ga;
        }
        raw[node] = acc;
    }

    ContributionMap map;
    map.scores = min_max_normalize(raw);
    map.branch = "roi";
    map.class_tag = target_class == 1 ? "disorder" : "control";
    return map;
}

ContributionMap class_average_map(const std::vector<ContributionMap>& maps,
                                  const std::string& class_tag) {
    std::vector<const ContributionMap*> selected;
    for (const auto& m : maps)
        if (m.class_tag == class_tag) selected.push_back(&m);
    if (selected.empty())
        throw std::invalid_argument("class_average_map: no maps for class " + class_tag);
    const std::size_t r = selected.front()->scores.size();
    for (const auto* m : selected) {
        if (m->scores.size() != r)
            throw std::invalid_argument("class_average_map: ROI counts differ");
        if (m->branch != selected.front()->branch)
            throw std::invalid_argument("class_average_map: branches differ");
    }
    std::vector<double> raw(r, 0.0);
    for (const auto* m : selected)
        for (std::size_t i = 0; i < r; ++i) raw[i] += m->scores[i];
    for (double& v : raw) v /= static_cast<double>(selected.size());

    ContributionMap out;
    out.scores = min_max_normalize(raw);
    out.branch = selected.front()->branch;
    out.class_tag = class_tag;
    return out;
}

double branch_overlap(const ContributionMap& a, const ContributionMap& b, double top_fraction) {
    if (a.scores.size() != b.scores.size())
        throw std::invalid_argument("branch_overlap: ROI counts differ");
    if (top_fraction <= 0.0 || top_fraction > 1.0)
        throw std::invalid_argument("branch_overlap: top_fraction must be in (0, 1]");
    const std::size_t r = a.scores.size();
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(top_fraction * static_cast<double>(r)));

    const auto top_set = [&](const ContributionMap& m) {
        std::vector<std::size_t> order(r);
        for (std::size_t i = 0; i < r; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            if (m.scores[x] != m.scores[y]) return m.scores[x] > m.scores[y];
            return x < y;
        });
        return std::set<std::size_t>(order.begin(), order.begin() + static_cast<long>(k));
    };

    const auto sa = top_set(a), sb = top_set(b);
    std::size_t inter = 0;
    for (std::size_t id : sa)
        if (sb.count(id)) ++inter;
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void write_map_csv(const std::string& path, const ContributionMap& map) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path);
    out << "roi_id,score\n";
    char buf[32];
    for (std::size_t i = 0; i < map.scores.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.4f", map.scores[i]);
        out << (i + 1) << ',' << buf << '\n';
    }
}

}  // namespace neurofuse
