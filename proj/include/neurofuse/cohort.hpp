#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace neurofuse {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Subject-level 3-D intensity array. Values are stored as float32 to match
/// the on-disk payload exactly; x is the fastest-varying axis.
struct Volume {
    std::array<std::size_t, 3> dims{};  // x, y, z extents
    std::vector<float> values;

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + dims[0] * (y + dims[1] * z);
    }
    float at(std::size_t x, std::size_t y, std::size_t z) const { return values[index(x, y, z)]; }
};

/// Integer parcellation over the same grid: 0 = background, 1..R = ROI ids.
struct AtlasLabelMap {
    std::array<std::size_t, 3> dims{};
    std::vector<std::int32_t> labels;
    std::size_t roi_count = 0;

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
};

struct SubjectRecord {
    std::string id;
    Volume volume;
    int label = 0;  // 0 = control/TDC, 1 = disorder
};

enum class CohortMode { Easy, ImgOnly, RoiOnly, Complementary };

CohortMode parse_cohort_mode(const std::string& name);
std::string cohort_mode_name(CohortMode mode);

struct Cohort {
    std::vector<SubjectRecord> subjects;
    AtlasLabelMap atlas;
    CohortMode mode = CohortMode::Easy;
    std::uint64_t seed = 0;
};

/// Generates a synthetic cohort with controllable per-view class signal.
///
/// Modes:
///   easy          — class shifts the global mean intensity; both views see it.
///   img_only      — class flips the orientation of a within-ROI intensity ramp;
///                   every ROI's value multiset is class-independent, so the
///                   graph view is provably blind.
///   roi_only      — class decides whether paired ROIs share a two-level
///                   intensity offset pattern or draw independent ones; per-ROI
///                   mean and variance are class-independent, so the imaging
///                   view carries no first-order signal. Pairs are spatially
///                   separated.
///   complementary — label = img-bit XOR roi-bit, with both constructions
///                   active and pairs spatially adjacent.
Cohort generate_cohort(std::size_t n, std::size_t r, std::array<std::size_t, 3> dims,
                       CohortMode mode, double noise, std::uint64_t seed);

// --- file I/O -------------------------------------------------------------
// Format: one UTF-8 JSON header line {"dims":[x,y,z],"dtype":...,"order":"x-fastest"}
// terminated by '\n', followed by the raw little-endian payload.

void write_volume(const std::string& path, const Volume& v);
Volume read_volume(const std::string& path);

void write_atlas(const std::string& path, const AtlasLabelMap& atlas);
AtlasLabelMap read_atlas(const std::string& path);

/// Writes manifest.json, atlas.vol and one volume file per subject.
void write_cohort(const std::string& dir, const Cohort& cohort);
Cohort read_cohort(const std::string& dir);

// --- cross-validation splitting --------------------------------------------

struct FoldSplit {
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> test_ids;
};

/// Stratified k-fold split: each class is shuffled independently and dealt
/// round-robin, so per-fold class counts are within +-1 of n_class/k.
std::vector<FoldSplit> stratified_folds(const Cohort& cohort, std::size_t k, std::uint64_t seed);

}  // namespace neurofuse
