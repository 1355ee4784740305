// End-to-end checks of the command-line binary: output shapes, exit codes,
// and byte-level determinism. The binary path comes in via --cli.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

static std::string g_cli;
static fs::path g_work;

static int run(const std::string& args) {
    const int rc = std::system((g_cli + " " + args + " 2>/dev/null").c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
}

static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

static std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    for (std::string line; std::getline(ss, line);) out.push_back(line);
    return out;
}

// A small shared cohort keeps the suite fast; graph/trainer math is covered
// by the unit suites, so these runs use few epochs.
static const char* kFast = " --set epochs=3 --set quantiles=4 --set batch_size=8";

TEST_CASE("gen writes a complete cohort directory") {
    const fs::path dir = g_work / "coh";
    REQUIRE(run("gen --mode easy --n 12 --r 8 --dim 8 --seed 5 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "atlas.vol"));
    CHECK(fs::exists(dir / "meta.json"));
    const json manifest = json::parse(slurp(dir / "manifest.json"));
    REQUIRE(manifest.is_array());
    REQUIRE(manifest.size() == 12);
    CHECK(manifest[0].contains("id"));
    CHECK(manifest[0].contains("label"));
    std::size_t vols = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename().string().starts_with("s")) ++vols;
    CHECK(vols == 12);
}

TEST_CASE("gen rejects an unknown mode with exit 2") {
    CHECK(run("gen --mode bogus --out " + (g_work / "nope").string()) == 2);
    CHECK(!fs::exists(g_work / "nope"));
}

TEST_CASE("gen is deterministic for a fixed seed") {
    const fs::path a = g_work / "gen_a", b = g_work / "gen_b";
    REQUIRE(run("gen --mode roi_only --n 6 --r 8 --dim 8 --seed 11 --out " + a.string()) == 0);
    REQUIRE(run("gen --mode roi_only --n 6 --r 8 --dim 8 --seed 11 --out " + b.string()) == 0);
    for (const auto& e : fs::directory_iterator(a))
        CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
}

TEST_CASE("cv emits metrics.csv with per-fold, mean and std rows") {
    const fs::path coh = g_work / "coh", out = g_work / "cv1";
    REQUIRE(run("cv --cohort " + coh.string() + " --out " + out.string() + kFast) == 0);
    const auto rows = lines_of(slurp(out / "metrics.csv"));
    REQUIRE(rows.size() == 8);  // header + 5 folds + mean + std
    CHECK(rows[0] == "fold,acc,auc,f1");
    CHECK(rows[1].starts_with("0,"));
    CHECK(rows[6].starts_with("mean,"));
    CHECK(rows[7].starts_with("std,"));
    // every numeric cell uses exactly four decimals
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::istringstream ss(rows[i]);
        std::string cell;
        std::getline(ss, cell, ',');
        while (std::getline(ss, cell, ',')) {
            const auto dot = cell.find('.');
            REQUIRE(dot != std::string::npos);
            CHECK(cell.size() - dot - 1 == 4);
        }
    }
    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary["folds"].size() == 5);
    CHECK(summary["config"]["folds"] == 5);
    CHECK(summary["aggregate"].contains("acc"));
    CHECK(summary["folds"][0].contains("alignment_gap"));
}

TEST_CASE("cv reruns are byte-identical") {
    const fs::path coh = g_work / "coh", a = g_work / "cv_a", b = g_work / "cv_b";
    const std::string args = " --cohort " + coh.string() + kFast;
    REQUIRE(run("cv" + args + " --out " + a.string()) == 0);
    REQUIRE(run("cv" + args + " --out " + b.string()) == 0);
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
}

TEST_CASE("cv convenience flags and --set reach the config echo") {
    const fs::path coh = g_work / "coh", out = g_work / "cv_img";
    REQUIRE(run("cv --cohort " + coh.string() + " --out " + out.string() +
                " --branches img --set tau=0.25" + kFast) == 0);
    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary["config"]["model"]["branches"] == "img");
    CHECK(summary["config"]["tau"] == 0.25);
}

TEST_CASE("NEUROFUSE_SEED overrides the configured seed") {
    const fs::path coh = g_work / "coh", out = g_work / "cv_env";
    const int rc = std::system(("NEUROFUSE_SEED=99 " + g_cli + " cv --cohort " + coh.string() +
                                " --out " + out.string() + kFast + " 2>/dev/null")
                                   .c_str());
    REQUIRE(WEXITSTATUS(rc) == 0);
    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary["config"]["seed"] == 99);
}

TEST_CASE("unknown --set key fails with exit 2") {
    CHECK(run("cv --cohort " + (g_work / "coh").string() + " --out " + (g_work / "e1").string() +
              " --set not_a_key=1") == 2);
}

TEST_CASE("invalid config value fails with exit 2") {
    CHECK(run("cv --cohort " + (g_work / "coh").string() + " --out " + (g_work / "e2").string() +
              " --set tau=0" + std::string(kFast)) == 2);
}

TEST_CASE("missing cohort directory fails with exit 2") {
    CHECK(run("cv --cohort " + (g_work / "does_not_exist").string() + " --out " +
              (g_work / "e3").string()) == 2);
}

TEST_CASE("ablate emits the four-cell grid") {
    const fs::path coh = g_work / "coh", out = g_work / "ab";
    REQUIRE(run("ablate --cohort " + coh.string() + " --out " + out.string() + kFast) == 0);
    const auto rows = lines_of(slurp(out / "table.csv"));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == "roi_encoder,fusion,acc_mean,acc_std,auc_mean,auc_std,f1_mean,f1_std");
    CHECK(rows[1].starts_with("mlp,concat,"));
    CHECK(rows[2].starts_with("mlp,contra,"));
    CHECK(rows[3].starts_with("gcn,concat,"));
    CHECK(rows[4].starts_with("gcn,contra,"));
}

TEST_CASE("ablate cells match cv runs with the same overrides") {
    const fs::path coh = g_work / "coh", out = g_work / "ab_cv";
    REQUIRE(run("cv --cohort " + coh.string() + " --out " + out.string() +
                " --set model.roi_encoder=mlp --set fusion=concat" + kFast) == 0);
    const auto cv_rows = lines_of(slurp(out / "metrics.csv"));
    const auto ab_rows = lines_of(slurp(g_work / "ab" / "table.csv"));
    // metrics.csv mean/std rows carry the same numbers as the grid cell
    std::istringstream mean_ss(cv_rows[6]), std_ss(cv_rows[7]);
    std::string tag, acc_m, auc_m, f1_m, acc_s, auc_s, f1_s;
    std::getline(mean_ss, tag, ',');
    std::getline(mean_ss, acc_m, ',');
    std::getline(mean_ss, auc_m, ',');
    std::getline(mean_ss, f1_m, ',');
    std::getline(std_ss, tag, ',');
    std::getline(std_ss, acc_s, ',');
    std::getline(std_ss, auc_s, ',');
    std::getline(std_ss, f1_s, ',');
    CHECK(ab_rows[1] == "mlp,concat," + acc_m + "," + acc_s + "," + auc_m + "," + auc_s + "," +
                            f1_m + "," + f1_s);
}

TEST_CASE("missing emits eight curve rows and a two-series svg") {
    const fs::path coh = g_work / "coh", out = g_work / "mi";
    REQUIRE(run("missing --cohort " + coh.string() + " --out " + out.string() + kFast) == 0);
    const auto rows = lines_of(slurp(out / "curve.csv"));
    REQUIRE(rows.size() == 9);
    CHECK(rows[0] == "branch,rate,acc_mean,acc_std");
    const char* expected[] = {"img,0.0000", "img,0.1000", "img,0.3000", "img,0.5000",
                              "roi,0.0000", "roi,0.1000", "roi,0.3000", "roi,0.5000"};
    for (int i = 0; i < 8; ++i) CHECK(rows[i + 1].starts_with(expected[i]));

    const std::string svg = slurp(out / "curve.svg");
    CHECK(svg.starts_with("<?xml"));
    std::size_t polylines = 0, polygons = 0;
    for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos)
        ++polylines;
    for (std::size_t pos = 0; (pos = svg.find("<polygon", pos)) != std::string::npos; ++pos)
        ++polygons;
    CHECK(polylines == 2);
    CHECK(polygons == 2);  // one +-1 std band per series
}

TEST_CASE("missing rate-0 rows match the unmasked cv result") {
    const fs::path coh = g_work / "coh", out = g_work / "mi_cv";
    REQUIRE(run("cv --cohort " + coh.string() + " --out " + out.string() + kFast) == 0);
    const auto cv_rows = lines_of(slurp(out / "metrics.csv"));
    std::istringstream mean_ss(cv_rows[6]), std_ss(cv_rows[7]);
    std::string tag, acc_m, acc_s;
    std::getline(mean_ss, tag, ',');
    std::getline(mean_ss, acc_m, ',');
    std::getline(std_ss, tag, ',');
    std::getline(std_ss, acc_s, ',');
    const auto curve = lines_of(slurp(g_work / "mi" / "curve.csv"));
    CHECK(curve[1] == "img,0.0000," + acc_m + "," + acc_s);
    CHECK(curve[5] == "roi,0.0000," + acc_m + "," + acc_s);
}

TEST_CASE("missing reruns are byte-identical including the svg") {
    const fs::path coh = g_work / "coh", b = g_work / "mi_b";
    REQUIRE(run("missing --cohort " + coh.string() + " --out " + b.string() + kFast) == 0);
    CHECK(slurp(g_work / "mi" / "curve.csv") == slurp(b / "curve.csv"));
    CHECK(slurp(g_work / "mi" / "curve.svg") == slurp(b / "curve.svg"));
}

TEST_CASE("attribute emits six class-average maps and pairwise overlaps") {
    const fs::path coh = g_work / "coh", out = g_work / "at";
    REQUIRE(run("attribute --cohort " + coh.string() + " --out " + out.string() + kFast) == 0);
    for (const char* name : {"map_joint_disorder.csv", "map_joint_control.csv",
                             "map_img_disorder.csv", "map_img_control.csv",
                             "map_roi_disorder.csv", "map_roi_control.csv"}) {
        const auto rows = lines_of(slurp(out / name));
        REQUIRE(rows.size() == 9);  // header + 8 rois
        CHECK(rows[0] == "roi_id,score");
        CHECK(rows[1].starts_with("1,"));
    }
    const json overlap = json::parse(slurp(out / "overlap.json"));
    CHECK(overlap["top_fraction"] == 0.25);
    for (const char* cls : {"disorder", "control"}) {
        REQUIRE(overlap.contains(cls));
        for (const char* pair : {"joint_vs_img", "joint_vs_roi", "img_vs_roi"}) {
            REQUIRE(overlap[cls].contains(pair));
            const double v = overlap[cls][pair].get<double>();
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("attribute requires the graph roi encoder") {
    CHECK(run("attribute --cohort " + (g_work / "coh").string() + " --out " +
              (g_work / "at_mlp").string() + " --set model.roi_encoder=mlp") == 2);
}

TEST_CASE("attribute reruns are byte-identical") {
    const fs::path coh = g_work / "coh", b = g_work / "at_b";
    REQUIRE(run("attribute --cohort " + coh.string() + " --out " + b.string() + kFast) == 0);
    CHECK(slurp(g_work / "at" / "overlap.json") == slurp(b / "overlap.json"));
    CHECK(slurp(g_work / "at" / "map_joint_disorder.csv") ==
          slurp(b / "map_joint_disorder.csv"));
}

TEST_CASE("config file values are honored and overridden by --set") {
    const fs::path coh = g_work / "coh", out = g_work / "cv_cfg";
    const fs::path cfg = g_work / "cfg.json";
    {
        std::ofstream f(cfg);
        f << R"({"tau": 0.4, "epochs": 3, "quantiles": 4, "model": {"d_p": 8}})";
    }
    REQUIRE(run("cv --cohort " + coh.string() + " --out " + out.string() + " --config " +
                cfg.string() + " --set tau=0.9") == 0);
    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary["config"]["tau"] == 0.9);       // override wins
    CHECK(summary["config"]["epochs"] == 3);      // file value kept
    CHECK(summary["config"]["model"]["d_p"] == 8);
}

int main(int argc, char** argv) {
    std::vector<char*> pass;
    for (int i = 0; i < argc; ++i) {
        if (std::string(argv[i]) == "--cli" && i + 1 < argc) {
            g_cli = argv[++i];
            continue;
        }
        pass.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: cli_tests --cli <path-to-binary>\n");
        return 1;
    }
    g_work = fs::temp_directory_path() / "neurofuse_cli_tests";
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    doctest::Context ctx(static_cast<int>(pass.size()), pass.data());
    const int rc = ctx.run();
    fs::remove_all(g_work);
    return rc;
}
