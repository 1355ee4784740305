#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "neurofuse/cohort.hpp"

using namespace neurofuse;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

double global_mean(const Volume& v) {
    double s = 0.0;
    for (float f : v.values) s += f;
    return s / static_cast<double>(v.values.size());
}

// Best accuracy of a single threshold on per-subject global mean intensity.
double threshold_sweep_accuracy(const Cohort& cohort) {
    std::vector<std::pair<double, int>> pts;
    for (const auto& s : cohort.subjects) pts.emplace_back(global_mean(s.volume), s.label);
    std::sort(pts.begin(), pts.end());
    std::size_t best = 0;
    for (std::size_t cut = 0; cut <= pts.size(); ++cut) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const int pred = i < cut ? 0 : 1;
            if (pred == pts[i].second) ++correct;
        }
        best = std::max(best, correct);
    }
    return static_cast<double>(best) / static_cast<double>(pts.size());
}

}  // namespace

TEST_CASE("generate_cohort is deterministic in the seed") {
    const auto a = generate_cohort(10, 8, {8, 8, 8}, CohortMode::Easy, 0.1, 7);
    const auto b = generate_cohort(10, 8, {8, 8, 8}, CohortMode::Easy, 0.1, 7);
    REQUIRE(a.subjects.size() == b.subjects.size());
    for (std::size_t i = 0; i < a.subjects.size(); ++i) {
        CHECK(a.subjects[i].label == b.subjects[i].label);
        CHECK(a.subjects[i].volume.values == b.subjects[i].volume.values);
    }
    const auto c = generate_cohort(10, 8, {8, 8, 8}, CohortMode::Easy, 0.1, 8);
    CHECK(a.subjects[0].volume.values != c.subjects[0].volume.values);
}

TEST_CASE("labels are balanced for every n") {
    for (std::size_t n : {2, 5, 10, 33}) {
        const auto c = generate_cohort(n, 4, {8, 8, 8}, CohortMode::Easy, 0.0, 3);
        long pos = 0, neg = 0;
        for (const auto& s : c.subjects) (s.label == 1 ? pos : neg)++;
        CHECK(std::abs(pos - neg) <= 1);
    }
}

TEST_CASE("atlas tiles cover the volume with contiguous labels") {
    const auto c = generate_cohort(4, 16, {16, 16, 16}, CohortMode::Easy, 0.0, 1);
    std::set<std::int32_t> seen(c.atlas.labels.begin(), c.atlas.labels.end());
    CHECK(seen.size() == 16);
    CHECK(*seen.begin() == 1);
    CHECK(*seen.rbegin() == 16);
}

TEST_CASE("easy mode with zero noise is linearly separable on global mean") {
    const auto c = generate_cohort(40, 16, {16, 16, 16}, CohortMode::Easy, 0.0, 11);
    CHECK(threshold_sweep_accuracy(c) == 1.0);
}

TEST_CASE("img_only mode: ROI value multisets are identical across classes") {
    const auto c = generate_cohort(6, 16, {16, 16, 16}, CohortMode::ImgOnly, 0.0, 5);
    // group sorted within-ROI values per subject; all subjects must agree
    std::vector<std::vector<float>> reference;
    for (const auto& s : c.subjects) {
        std::map<std::int32_t, std::vector<float>> per_roi;
        for (std::size_t i = 0; i < s.volume.values.size(); ++i)
            per_roi[c.atlas.labels[i]].push_back(s.volume.values[i]);
        std::vector<std::vector<float>> sorted;
        for (auto& [lab, vals] : per_roi) {
            std::sort(vals.begin(), vals.end());
            sorted.push_back(vals);
        }
        if (reference.empty())
            reference = sorted;
        else
            CHECK(reference == sorted);
    }
}

TEST_CASE("img_only classes differ in arrangement, not content") {
    const auto c = generate_cohort(8, 16, {16, 16, 16}, CohortMode::ImgOnly, 0.0, 5);
    const Volume* v0 = nullptr;
    const Volume* v1 = nullptr;
    for (const auto& s : c.subjects) (s.label == 0 ? v0 : v1) = &s.volume;
    REQUIRE(v0);
    REQUIRE(v1);
    CHECK(v0->values != v1->values);
}

TEST_CASE("roi_only mode: per-ROI mean and variance are class independent") {
    const auto c = generate_cohort(12, 16, {16, 16, 16}, CohortMode::RoiOnly, 0.0, 9);
    // per-ROI means are fixed baselines shared by all subjects; exactly one
    // ROI pair carries a zero-mean two-level pattern (same pair for every
    // subject), so neither first nor second moment leaks the class
    std::map<std::int32_t, double> baseline;
    std::vector<std::int32_t> patterned;
    for (const auto& s : c.subjects) {
        std::map<std::int32_t, std::vector<float>> per_roi;
        for (std::size_t i = 0; i < s.volume.values.size(); ++i)
            per_roi[c.atlas.labels[i]].push_back(s.volume.values[i]);
        std::vector<std::int32_t> active;
        for (auto& [lab, vals] : per_roi) {
            double mean = 0.0;
            for (float f : vals) mean += f;
            mean /= static_cast<double>(vals.size());
            double var = 0.0;
            for (float f : vals) var += (f - mean) * (f - mean);
            var /= static_cast<double>(vals.size());
            if (auto it = baseline.find(lab); it == baseline.end())
                baseline[lab] = mean;
            else
                CHECK(mean == doctest::Approx(it->second).epsilon(1e-5));
            if (var > 1e-8) {
                CHECK(var == doctest::Approx(0.25 * 0.25).epsilon(1e-3));
                active.push_back(lab);
            }
        }
        REQUIRE(active.size() == 2);
        if (patterned.empty())
            patterned = active;
        else
            CHECK(active == patterned);
    }
}

TEST_CASE("roi_only mode: class 1 pairs share the value multiset, class 0 never does") {
    const auto c = generate_cohort(30, 16, {16, 16, 16}, CohortMode::RoiOnly, 0.0, 3);
    // centered sorted per-ROI multisets; background ROIs have a fixed shape
    // across subjects, only the signal pair varies
    const auto centered_rois = [&](const SubjectRecord& s) {
        std::map<std::int32_t, std::vector<float>> per_roi;
        for (std::size_t i = 0; i < s.volume.values.size(); ++i)
            if (c.atlas.labels[i] > 0) per_roi[c.atlas.labels[i]].push_back(s.volume.values[i]);
        std::map<std::int32_t, std::vector<double>> out;
        for (auto& [lab, vals] : per_roi) {
            std::sort(vals.begin(), vals.end());
            double mean = 0.0;
            for (float f : vals) mean += f;
            mean /= static_cast<double>(vals.size());
            auto& cvec = out[lab];
            cvec.resize(vals.size());
            for (std::size_t i = 0; i < vals.size(); ++i) cvec[i] = vals[i] - mean;
        }
        return out;
    };
    const auto close = [](const std::vector<double>& u, const std::vector<double>& v) {
        if (u.size() != v.size()) return false;
        for (std::size_t i = 0; i < u.size(); ++i)
            if (std::abs(u[i] - v[i]) > 1e-6) return false;
        return true;
    };

    const auto first = centered_rois(c.subjects.front());
    std::set<std::int32_t> varying;
    std::vector<std::map<std::int32_t, std::vector<double>>> all;
    for (const auto& s : c.subjects) {
        all.push_back(centered_rois(s));
        for (const auto& [lab, vec] : all.back())
            if (!close(vec, first.at(lab))) varying.insert(lab);
    }
    REQUIRE(varying.size() == 2);
    const std::int32_t pa = *varying.begin(), pb = *std::next(varying.begin());
    for (std::size_t si = 0; si < c.subjects.size(); ++si) {
        const bool shared = close(all[si].at(pa), all[si].at(pb));
        CHECK(shared == (c.subjects[si].label == 1));
    }
}

TEST_CASE("complementary mode: pair sharing alone does not determine the class") {
    const auto c = generate_cohort(60, 16, {16, 16, 16}, CohortMode::Complementary, 0.0, 13);
    // centered sorted per-ROI multisets: the ramp orientation bit is a
    // within-ROI mirror, so only the split pair's multisets vary across
    // subjects (with the split fraction), and everything outside the pair
    // keeps one fixed ramp-plus-baseline shape
    const auto centered_rois = [&](const SubjectRecord& s) {
        std::map<std::int32_t, std::vector<float>> per_roi;
        for (std::size_t i = 0; i < s.volume.values.size(); ++i)
            if (c.atlas.labels[i] > 0) per_roi[c.atlas.labels[i]].push_back(s.volume.values[i]);
        std::map<std::int32_t, std::vector<double>> out;
        for (auto& [lab, vals] : per_roi) {
            std::sort(vals.begin(), vals.end());
            double mean = 0.0;
            for (float f : vals) mean += f;
            mean /= static_cast<double>(vals.size());
            auto& cvec = out[lab];
            cvec.resize(vals.size());
            for (std::size_t i = 0; i < vals.size(); ++i) cvec[i] = vals[i] - mean;
        }
        return out;
    };
    const auto close = [](const std::vector<double>& u, const std::vector<double>& v) {
        if (u.size() != v.size()) return false;
        for (std::size_t i = 0; i < u.size(); ++i)
            if (std::abs(u[i] - v[i]) > 1e-6) return false;
        return true;
    };

    const auto first = centered_rois(c.subjects.front());
    std::set<std::int32_t> varying;
    std::vector<std::map<std::int32_t, std::vector<double>>> all;
    for (const auto& s : c.subjects) {
        all.push_back(centered_rois(s));
        for (const auto& [lab, vec] : all.back())
            if (!close(vec, first.at(lab))) varying.insert(lab);
    }
    REQUIRE(varying.size() == 2);
    const std::int32_t pa = *varying.begin(), pb = *std::next(varying.begin());
    // the label is the XOR of the sharing bit with a hidden orientation bit,
    // so sharing by itself is uninformative: all four (shared, label) cells
    // must be populated
    int cell[2][2] = {};
    for (std::size_t si = 0; si < c.subjects.size(); ++si) {
        const bool shared = close(all[si].at(pa), all[si].at(pb));
        ++cell[shared ? 1 : 0][c.subjects[si].label];
    }
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(cell[i][j] > 0);
}

TEST_CASE("volume file round trip is bitwise identical") {
    const auto c = generate_cohort(2, 4, {8, 8, 8}, CohortMode::Easy, 0.2, 21);
    const std::string path = temp_path("nf_test_vol.vol");
    write_volume(path, c.subjects[0].volume);
    const Volume back = read_volume(path);
    CHECK(back.dims == c.subjects[0].volume.dims);
    CHECK(back.values == c.subjects[0].volume.values);
    std::filesystem::remove(path);
}

TEST_CASE("volume payload layout is little-endian f32 in x-fastest order") {
    Volume v;
    v.dims = {2, 2, 2};
    v.values = {0, 1, 2, 3, 4, 5, 6, 7};
    const std::string path = temp_path("nf_test_layout.vol");
    write_volume(path, v);
    std::ifstream in(path, std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("\"dims\":[2,2,2]") != std::string::npos);
    CHECK(header.find("\"dtype\":\"f32\"") != std::string::npos);
    CHECK(header.find("\"order\":\"x-fastest\"") != std::string::npos);
    for (int i = 0; i < 8; ++i) {
        unsigned char bytes[4];
        in.read(reinterpret_cast<char*>(bytes), 4);
        float f;
        std::memcpy(&f, bytes, 4);  // little-endian host
        CHECK(f == static_cast<float>(i));
    }
    CHECK(in.peek() == EOF);
    std::filesystem::remove(path);
}

TEST_CASE("truncated payload raises a format error with byte counts") {
    Volume v;
    v.dims = {2, 2, 2};
    v.values.assign(8, 1.0f);
    const std::string path = temp_path("nf_test_trunc.vol");
    write_volume(path, v);
    // chop one byte
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
    CHECK_THROWS_WITH_AS(read_volume(path), doctest::Contains("expected 32"), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("cohort directory round trip") {
    const auto c = generate_cohort(4, 4, {8, 8, 8}, CohortMode::RoiOnly, 0.05, 2);
    const std::string dir = temp_path("nf_test_cohort");
    write_cohort(dir, c);
    const Cohort back = read_cohort(dir);
    REQUIRE(back.subjects.size() == c.subjects.size());
    CHECK(back.mode == c.mode);
    CHECK(back.seed == c.seed);
    for (std::size_t i = 0; i < c.subjects.size(); ++i) {
        CHECK(back.subjects[i].id == c.subjects[i].id);
        CHECK(back.subjects[i].label == c.subjects[i].label);
        CHECK(back.subjects[i].volume.values == c.subjects[i].volume.values);
    }
    CHECK(back.atlas.labels == c.atlas.labels);
    std::filesystem::remove_all(dir);
}

TEST_CASE("stratified folds partition with balanced class counts") {
    const auto c = generate_cohort(10, 4, {8, 8, 8}, CohortMode::Easy, 0.0, 17);
    const auto folds = stratified_folds(c, 5, 3);
    REQUIRE(folds.size() == 5);
    std::set<std::size_t> all_test;
    for (const auto& f : folds) {
        REQUIRE(f.test_ids.size() == 2);
        int pos = 0;
        for (std::size_t id : f.test_ids) {
            CHECK(all_test.insert(id).second);  // pairwise disjoint
            if (c.subjects[id].label == 1) ++pos;
        }
        CHECK(pos == 1);  // 5 per class, k=5: one of each per fold
        // train/test disjoint and complete
        CHECK(f.train_ids.size() == 8);
        for (std::size_t id : f.test_ids)
            CHECK(std::find(f.train_ids.begin(), f.train_ids.end(), id) == f.train_ids.end());
    }
    CHECK(all_test.size() == c.subjects.size());
    // uneven per-class counts spill over round-robin: 6+6 over 5 folds
    const auto c12 = generate_cohort(12, 4, {8, 8, 8}, CohortMode::Easy, 0.0, 17);
    const auto folds12 = stratified_folds(c12, 5, 3);
    std::size_t total = 0;
    for (const auto& f : folds12) {
        CHECK(f.test_ids.size() >= 2);
        CHECK(f.test_ids.size() <= 4);
        total += f.test_ids.size();
    }
    CHECK(total == 12);
}

TEST_CASE("stratified folds are seed deterministic") {
    const auto c = generate_cohort(10, 4, {8, 8, 8}, CohortMode::Easy, 0.0, 17);
    const auto a = stratified_folds(c, 5, 3);
    const auto b = stratified_folds(c, 5, 3);
    for (std::size_t f = 0; f < a.size(); ++f) {
        CHECK(a[f].test_ids == b[f].test_ids);
        CHECK(a[f].train_ids == b[f].train_ids);
    }
}

TEST_CASE("stratified folds error paths") {
    const auto c = generate_cohort(6, 4, {8, 8, 8}, CohortMode::Easy, 0.0, 1);
    CHECK_THROWS_AS(stratified_folds(c, 1, 0), ConfigError);
    CHECK_THROWS_AS(stratified_folds(c, 4, 0), ConfigError);  // 3 per class < k
}

TEST_CASE("generator precondition errors") {
    CHECK_THROWS_AS(generate_cohort(1, 4, {8, 8, 8}, CohortMode::Easy, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(generate_cohort(4, 1, {8, 8, 8}, CohortMode::Easy, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(generate_cohort(4, 4, {4, 8, 8}, CohortMode::Easy, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(generate_cohort(4, 4, {8, 8, 8}, CohortMode::Easy, 0.7, 1), ConfigError);
    // more regions than voxels
    CHECK_THROWS_AS(generate_cohort(4, 100000, {8, 8, 8}, CohortMode::Easy, 0.0, 1), ConfigError);
}
