#include "neurofuse/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "neurofuse/rng.hpp"

namespace neurofuse {

namespace {

using nlohmann::json;

struct TileGrid {
    std::array<std::size_t, 3> counts{};  // tiles per axis
};

// Picks an exact factorization r = gx*gy*gz with gi <= dims_i, preferring
// even gx (needed for ROI pairing) and near-cubic tiles.
TileGrid choose_grid(std::size_t r, const std::array<std::size_t, 3>& dims) {
    if (r > dims[0] * dims[1] * dims[2])
        throw ConfigError("roi count " + std::to_string(r) + " exceeds voxel capacity");
    TileGrid best{};
    double best_score = -1.0;
    for (std::size_t a = 1; a <= r && a <= dims[0]; ++a) {
        if (r % a) continue;
        const std::size_t rest = r / a;
        for (std::size_t b = 1; b <= rest && b <= dims[1]; ++b) {
            if (rest % b) continue;
            const std::size_t c = rest / b;
            if (c > dims[2]) continue;
            const double ex = double(dims[0]) / double(a), ey = double(dims[1]) / double(b),
                         ez = double(dims[2]) / double(c);
            const double aspect = std::max({ex, ey, ez}) / std::min({ex, ey, ez});
            double score = 1.0 / aspect;
            if (a % 2 == 0) score += 10.0;  // even x tiling enables pairing modes
            if (score > best_score) {
                best_score = score;
                best = TileGrid{{a, b, c}};
            }
        }
    }
    if (best_score < 0.0)
        throw ConfigError("roi count " + std::to_string(r) +
                          " exceeds the number of rectangular tiles for dims");
    return best;
}

AtlasLabelMap make_atlas(std::size_t r, const std::array<std::size_t, 3>& dims,
                         const TileGrid& grid) {
    AtlasLabelMap atlas;
    atlas.dims = dims;
    atlas.roi_count = r;
    atlas.labels.resize(dims[0] * dims[1] * dims[2]);
    const auto [gx, gy, gz] = grid.counts;
    for (std::size_t z = 0; z < dims[2]; ++z)
        for (std::size_t y = 0; y < dims[1]; ++y)
            for (std::size_t x = 0; x < dims[0]; ++x) {
                const std::size_t tx = x * gx / dims[0];
                const std::size_t ty = y * gy / dims[1];
                const std::size_t tz = z * gz / dims[2];
                const std::size_t tile = tx + gx * (ty + gy * tz);
                atlas.labels[x + dims[0] * (y + dims[1] * z)] =
                    static_cast<std::int32_t>(tile + 1);
            }
    return atlas;
}

// Voxel indices of each ROI in x-fastest raster order (lowest z first).
std::vector<std::vector<std::size_t>> roi_voxel_lists(const AtlasLabelMap& atlas) {
    std::vector<std::vector<std::size_t>> lists(atlas.roi_count);
    for (std::size_t i = 0; i < atlas.labels.size(); ++i) {
        const std::int32_t lab = atlas.labels[i];
        if (lab > 0) lists[static_cast<std::size_t>(lab - 1)].push_back(i);
    }
    return lists;
}

// Pairs of ROI indices (0-based), adjacent or separated along the x tiling.
std::vector<std::pair<std::size_t, std::size_t>> roi_pairs(const TileGrid& grid, bool adjacent) {
    const auto [gx, gy, gz] = grid.counts;
    if (gx % 2 != 0)
        throw ConfigError("pairing modes need an even tile count along x; got " +
                          std::to_string(gx));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t tz = 0; tz < gz; ++tz)
        for (std::size_t ty = 0; ty < gy; ++ty) {
            if (adjacent) {
                for (std::size_t tx = 0; tx < gx; tx += 2) {
                    const std::size_t a = tx + gx * (ty + gy * tz);
                    const std::size_t b = (tx + 1) + gx * (ty + gy * tz);
                    pairs.emplace_back(a, b);
                }
            } else {
                for (std::size_t tx = 0; tx < gx / 2; ++tx) {
                    const std::size_t a = tx + gx * (ty + gy * tz);
                    const std::size_t b = (tx + gx / 2) + gx * (ty + gy * tz);
                    pairs.emplace_back(a, b);
                }
            }
        }
    return pairs;
}

constexpr double kBaseline = 0.5;
constexpr double kEasyShift = 0.5;
constexpr double kEasyOffsetRange = 0.2;
constexpr double kImgRampAmplitude = 1.0;
constexpr double kRoiLevelAmplitude = 0.25;
constexpr double kRoiBaselineSpread = 0.5;   // fixed per-ROI identity offsets
constexpr double kSplitLo = 0.3;             // two-level split fraction range
constexpr double kSplitHi = 0.7;
constexpr double kSplitMinGap = 0.15;        // distinct splits stay this far apart
constexpr double kCompRampAmplitude = 0.5;   // orientation ramps in complementary mode

double draw_split_fraction(Rng& rng) { return rng.uniform(kSplitLo, kSplitHi); }

// Second split far enough from the first that the pair's descriptor
// correlation stays bounded away from 1.
double draw_distinct_split_fraction(Rng& rng, double first) {
    for (;;) {
        const double t = draw_split_fraction(rng);
        if (std::abs(t - first) >= kSplitMinGap) return t;
    }
}

// Writes a two-level multiset into one ROI: fraction `frac` of the listed
// voxels at the low level, the rest high; exactly zero mean and `amplitude`
// standard deviation over the ROI by construction.
void fill_two_level(Volume& vol, const std::vector<std::size_t>& ordered_voxels, double frac,
                    double amplitude) {
    const std::size_t n = ordered_voxels.size();
    std::size_t count = static_cast<std::size_t>(std::llround(frac * double(n)));
    count = std::min(std::max<std::size_t>(count, 1), n - 1);
    const double p = double(count) / double(n);
    const double low = -std::sqrt((1.0 - p) / p);
    const double high = std::sqrt(p / (1.0 - p));
    for (std::size_t i = 0; i < n; ++i) {
        const double offset = (i < count) ? low : high;
        vol.values[ordered_voxels[i]] += static_cast<float>(amplitude * offset);
    }
}

// Linear ramp along one coordinate axis inside an ROI, zero-centered over the
// ROI's extent on that axis. Flipping the direction is an axis mirror, i.e. a
// within-ROI voxel permutation for box-shaped ROIs, so the value multiset is
// orientation-invariant.
void fill_axis_ramp(Volume& vol, const std::vector<std::size_t>& voxels,
                    const std::array<std::size_t, 3>& dims, bool descending, double amplitude) {
    std::size_t lo = dims[0], hi = 0;
    for (std::size_t idx : voxels) {
        const std::size_t x = idx % dims[0];
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi > lo ? double(hi - lo) : 1.0;
    for (std::size_t idx : voxels) {
        const std::size_t x = idx % dims[0];
        double t = (double(x) - double(lo)) / span;
        if (descending) t = 1.0 - t;
        vol.values[idx] += static_cast<float>(amplitude * (t - 0.5));
    }
}

void fill_ramp(Volume& vol, const std::vector<std::size_t>& voxels, bool descending,
               double amplitude) {
    const std::size_t n = voxels.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double t = n > 1 ? double(i) / double(n - 1) : 0.5;
        const double v = amplitude * (t - 0.5);
        const std::size_t idx = descending ? voxels[n - 1 - i] : voxels[i];
        vol.values[idx] += static_cast<float>(v);
    }
}

// Fixed per-ROI intensity baselines, identical for every subject and class.
// Centered on zero so the graph's node-feature vector has no dominant
// constant component; the propagation changes then act on real contrasts.
void add_roi_baselines(Volume& vol, const std::vector<std::vector<std::size_t>>& rois,
                       std::size_t r) {
    for (std::size_t ri = 0; ri < r; ++ri) {
        const double base = kRoiBaselineSpread * (double(ri) / double(r - 1) - 0.5);
        for (std::size_t idx : rois[ri]) vol.values[idx] += static_cast<float>(base);
    }
}

std::vector<int> balanced_labels(std::size_t n, Rng& rng) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
    rng.shuffle(labels);
    return labels;
}

}  // namespace

CohortMode parse_cohort_mode(const std::string& name) {
    if (name == "easy") return CohortMode::Easy;
    if (name == "img_only") return CohortMode::ImgOnly;
    if (name == "roi_only") return CohortMode::RoiOnly;
    if (name == "complementary") return CohortMode::Complementary;
    throw ConfigError("unknown cohort mode '" + name +
                      "' (valid: easy, img_only, roi_only, complementary)");
}

std::string cohort_mode_name(CohortMode mode) {
    switch (mode) {
        case CohortMode::Easy: return "easy";
        case CohortMode::ImgOnly: return "img_only";
        case CohortMode::RoiOnly: return "roi_only";
        case CohortMode::Complementary: return "complementary";
    }
    return "easy";
}

Cohort generate_cohort(std::size_t n, std::size_t r, std::array<std::size_t, 3> dims,
                       CohortMode mode, double noise, std::uint64_t seed) {
    if (n < 2) throw ConfigError("cohort size must be >= 2");
    if (r < 2) throw ConfigError("roi count must be >= 2");
    for (std::size_t d : dims)
        if (d < 8) throw ConfigError("volume dims must be >= 8 per axis");
    if (noise < 0.0 || noise >= 0.5) throw ConfigError("noise must be in [0, 0.5)");

    const TileGrid grid = choose_grid(r, dims);
    Cohort cohort;
    cohort.mode = mode;
    cohort.seed = seed;
    cohort.atlas = make_atlas(r, dims, grid);
    const auto rois = roi_voxel_lists(cohort.atlas);
    for (std::size_t ri = 0; ri < r; ++ri)
        if (rois[ri].empty())
            throw ConfigError("tiling produced an empty ROI " + std::to_string(ri + 1));

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (mode == CohortMode::Complementary) pairs = roi_pairs(grid, /*adjacent=*/true);

    Rng rng(seed);
    const std::vector<int> labels = balanced_labels(n, rng);

    cohort.subjects.reserve(n);
    for (std::size_t si = 0; si < n; ++si) {
        Rng srng = rng.fork(si);
        SubjectRecord rec;
        char buf[16];
        std::snprintf(buf, sizeof buf, "s%04zu", si);
        rec.id = buf;
        rec.label = labels[si];
        rec.volume.dims = dims;
        // Correlation-structure modes build volumes around zero so ROI mean
        // features are zero-mean; the other modes sit on a positive baseline.
        const bool zero_centered =
            mode == CohortMode::RoiOnly || mode == CohortMode::Complementary;
        rec.volume.values.assign(dims[0] * dims[1] * dims[2],
                                 zero_centered ? 0.0f : static_cast<float>(kBaseline));

        switch (mode) {
            case CohortMode::Easy: {
                // Per-subject ROI offsets give both views a shared subject
                // fingerprint; the class shifts the global mean.
                for (std::size_t ri = 0; ri < r; ++ri) {
                    const double off =
                        srng.uniform(-kEasyOffsetRange, kEasyOffsetRange) + kEasyShift * rec.label;
                    for (std::size_t idx : rois[ri])
                        rec.volume.values[idx] += static_cast<float>(off);
                }
                break;
            }
            case CohortMode::ImgOnly: {
                // Fixed ramp multiset per ROI; class only flips its orientation.
                for (std::size_t ri = 0; ri < r; ++ri)
                    fill_ramp(rec.volume, rois[ri], rec.label == 1, kImgRampAmplitude);
                break;
            }
            case CohortMode::RoiOnly: {
                // One designated separated pair carries the class bit: class 1
                // shares the two-level split fraction, class 0 draws two
                // fractions at least kSplitMinGap apart, so the pair's
                // descriptor correlation is exactly 1 vs bounded below 1.
                // All other ROIs are flat fixed baselines (degenerate
                // descriptors, zero Pearson), so the adjacency is a function
                // of the pair correlation alone. Voxel placement is shuffled
                // so the imaging view sees only class-matched local
                // statistics.
                const std::size_t a = 0, b = r - 1;  // opposite corners
                add_roi_baselines(rec.volume, rois, r);
                const double ta = draw_split_fraction(srng);
                const double tb =
                    rec.label == 1 ? ta : draw_distinct_split_fraction(srng, ta);
                std::vector<std::size_t> va = rois[a], vb = rois[b];
                srng.shuffle(va);
                srng.shuffle(vb);
                fill_two_level(rec.volume, va, ta, kRoiLevelAmplitude);
                fill_two_level(rec.volume, vb, tb, kRoiLevelAmplitude);
                break;
            }
            case CohortMode::Complementary: {
                // label = b_img XOR b_roi, each bit realized by its own
                // single-view construction. b_roi is the shared-vs-distinct
                // split bit on one adjacent ROI pair, filled in raster order
                // so the split surfaces are axis-aligned z-planes; b_img flips
                // the direction of an x-axis ramp in every ROI. The flip is an
                // x-mirror, a within-ROI permutation, so every multiset (and
                // hence the graph) is blind to it, while the conv branch reads
                // the slope sign directly. Because the ramps run perpendicular
                // to the split planes and live inside the pair too, windows
                // near the pair's shared face see the split mismatch and the
                // orientation together, so the imaging branch can represent
                // the interaction; the graph reads the split bit exactly.
                const auto& [a, b] = pairs.front();
                add_roi_baselines(rec.volume, rois, r);
                const int b_img = static_cast<int>(srng.below(2));
                const int b_roi = rec.label ^ b_img;
                const double ta = draw_split_fraction(srng);
                const double tb = b_roi == 1 ? ta : draw_distinct_split_fraction(srng, ta);
                fill_two_level(rec.volume, rois[a], ta, kRoiLevelAmplitude);
                fill_two_level(rec.volume, rois[b], tb, kRoiLevelAmplitude);
                for (std::size_t ri = 0; ri < r; ++ri)
                    fill_axis_ramp(rec.volume, rois[ri], dims, b_img == 1, kCompRampAmplitude);
                break;
            }
        }

        if (noise > 0.0) {
            for (auto& v : rec.volume.values) v += static_cast<float>(noise * srng.normal());
        }
        cohort.subjects.push_back(std::move(rec));
    }
    return cohort;
}

// --- file I/O ---------------------------------------------------------------

namespace {

void write_header_and_payload(const std::string& path, const std::array<std::size_t, 3>& dims,
                              const char* dtype, const void* payload, std::size_t bytes) {
    json header;
    header["dims"] = {dims[0], dims[1], dims[2]};
    header["dtype"] = dtype;
    header["order"] = "x-fastest";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    const std::string line = header.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
    if (!out) throw FormatError("write failed: " + path);
}

struct ParsedHeader {
    std::array<std::size_t, 3> dims{};
    std::string dtype;
};

ParsedHeader read_header(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("missing header line: " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw FormatError("unparseable header in " + path + ": " + e.what());
    }
    ParsedHeader ph;
    const auto dims = header.at("dims");
    if (!dims.is_array() || dims.size() != 3) throw FormatError("header dims must be 3 ints");
    for (std::size_t i = 0; i < 3; ++i) {
        const long long d = dims[i].get<long long>();
        if (d <= 0) throw FormatError("non-positive dim in header of " + path);
        ph.dims[i] = static_cast<std::size_t>(d);
    }
    ph.dtype = header.at("dtype").get<std::string>();
    return ph;
}

void read_payload(std::ifstream& in, const std::string& path, void* dst, std::size_t bytes) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    const std::size_t got = static_cast<std::size_t>(in.gcount());
    if (got != bytes)
        throw FormatError("truncated payload in " + path + ": expected " + std::to_string(bytes) +
                          " bytes, got " + std::to_string(got));
}

}  // namespace

void write_volume(const std::string& path, const Volume& v) {
    write_header_and_payload(path, v.dims, "f32", v.values.data(), v.values.size() * 4);
}

Volume read_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    const ParsedHeader ph = read_header(in, path);
    if (ph.dtype != "f32") throw FormatError("expected dtype f32 in " + path);
    Volume v;
    v.dims = ph.dims;
    v.values.resize(v.voxel_count());
    read_payload(in, path, v.values.data(), v.values.size() * 4);
    for (float f : v.values)
        if (!std::isfinite(f)) throw FormatError("non-finite voxel value in " + path);
    return v;
}

void write_atlas(const std::string& path, const AtlasLabelMap& atlas) {
    write_header_and_payload(path, atlas.dims, "i32", atlas.labels.data(),
                             atlas.labels.size() * 4);
}

AtlasLabelMap read_atlas(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    const ParsedHeader ph = read_header(in, path);
    if (ph.dtype != "i32") throw FormatError("expected dtype i32 in " + path);
    AtlasLabelMap atlas;
    atlas.dims = ph.dims;
    atlas.labels.resize(atlas.voxel_count());
    read_payload(in, path, atlas.labels.data(), atlas.labels.size() * 4);
    std::int32_t max_label = 0;
    for (std::int32_t l : atlas.labels) {
        if (l < 0) throw FormatError("negative atlas label in " + path);
        max_label = std::max(max_label, l);
    }
    atlas.roi_count = static_cast<std::size_t>(max_label);
    // labels must be contiguous 1..R with every ROI nonempty
    std::vector<bool> seen(atlas.roi_count, false);
    for (std::int32_t l : atlas.labels)
        if (l > 0) seen[static_cast<std::size_t>(l - 1)] = true;
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw FormatError("atlas ROI " + std::to_string(i + 1) + " is empty");
    return atlas;
}

void write_cohort(const std::string& dir, const Cohort& cohort) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_atlas(dir + "/atlas.vol", cohort.atlas);
    json manifest = json::array();
    for (const auto& s : cohort.subjects) {
        const std::string rel = s.id + ".vol";
        write_volume(dir + "/" + rel, s.volume);
        manifest.push_back({{"id", s.id}, {"volume_path", rel}, {"label", s.label}});
    }
    {
        std::ofstream out(dir + "/manifest.json");
        out << manifest.dump(2) << "\n";
    }
    {
        json meta{{"mode", cohort_mode_name(cohort.mode)}, {"seed", cohort.seed}};
        std::ofstream out(dir + "/meta.json");
        out << meta.dump(2) << "\n";
    }
}

Cohort read_cohort(const std::string& dir) {
    Cohort cohort;
    cohort.atlas = read_atlas(dir + "/atlas.vol");
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw FormatError("cannot open manifest: " + dir + "/manifest.json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad manifest: ") + e.what());
    }
    if (!manifest.is_array()) throw FormatError("manifest must be a JSON list");
    for (const auto& entry : manifest) {
        SubjectRecord rec;
        rec.id = entry.at("id").get<std::string>();
        rec.label = entry.at("label").get<int>();
        if (rec.label != 0 && rec.label != 1) throw FormatError("label must be 0 or 1");
        rec.volume = read_volume(dir + "/" + entry.at("volume_path").get<std::string>());
        if (rec.volume.dims != cohort.atlas.dims)
            throw FormatError("volume dims disagree with atlas for subject " + rec.id);
        cohort.subjects.push_back(std::move(rec));
    }
    std::ifstream meta(dir + "/meta.json");
    if (meta) {
        json m;
        meta >> m;
        cohort.mode = parse_cohort_mode(m.value("mode", "easy"));
        cohort.seed = m.value("seed", std::uint64_t{0});
    }
    return cohort;
}

std::vector<FoldSplit> stratified_folds(const Cohort& cohort, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("stratified_folds needs k >= 2");
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
        by_class[cohort.subjects[i].label].push_back(i);
    for (int c = 0; c < 2; ++c)
        if (by_class[c].size() < k)
            throw ConfigError("class " + std::to_string(c) + " has " +
                              std::to_string(by_class[c].size()) + " members, fewer than k=" +
                              std::to_string(k));
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> fold_members(k);
    for (int c = 0; c < 2; ++c) {
        auto ids = by_class[c];
        rng.shuffle(ids);
        for (std::size_t i = 0; i < ids.size(); ++i) fold_members[i % k].push_back(ids[i]);
    }
    std::vector<FoldSplit> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        folds[f].test_ids = fold_members[f];
        std::sort(folds[f].test_ids.begin(), folds[f].test_ids.end());
        for (std::size_t g = 0; g < k; ++g)
            if (g != f)
                folds[f].train_ids.insert(folds[f].train_ids.end(), fold_members[g].begin(),
                                          fold_members[g].end());
        std::sort(folds[f].train_ids.begin(), folds[f].train_ids.end());
    }
    return folds;
}

}  // namespace neurofuse
