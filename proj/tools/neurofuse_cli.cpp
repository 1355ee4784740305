// Command-line front end: cohort generation, cross-validated training, the
// ablation grid, missing-view curves, and contribution maps. All outputs are
// deterministic given (config, seed); nothing embeds a timestamp.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "neurofuse/attribution.hpp"
#include "neurofuse/cohort.hpp"
#include "neurofuse/trainer.hpp"

using namespace neurofuse;
using nlohmann::json;

namespace {

struct CliConfig {
    TrainConfig train;
    // in-memory cohort generation, used when no --cohort directory is given
    std::string cohort_mode = "easy";
    std::size_t cohort_n = 40;
    std::size_t cohort_r = 16;
    std::size_t cohort_dim = 16;
    double cohort_noise = 0.0;
};

std::size_t as_size(const json& v, const std::string& key) {
    if (v.is_number_unsigned() || v.is_number_integer()) {
        const long long n = v.get<long long>();
        if (n < 0) throw ConfigError(key + " must be nonnegative");
        return static_cast<std::size_t>(n);
    }
    throw ConfigError(key + " must be an integer");
}

double as_double(const json& v, const std::string& key) {
    if (v.is_number()) return v.get<double>();
    throw ConfigError(key + " must be a number");
}

bool as_bool(const json& v, const std::string& key) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number_integer()) return v.get<long long>() != 0;
    throw ConfigError(key + " must be a boolean");
}

std::string as_string(const json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    throw ConfigError(key + " must be a string");
}

void set_key(CliConfig& cfg, const std::string& key, const json& v) {
    TrainConfig& t = cfg.train;
    if (key == "tau") t.tau = as_double(v, key);
    else if (key == "lambda") t.lambda = as_double(v, key);
    else if (key == "batch_size") t.batch_size = as_size(v, key);
    else if (key == "epochs") t.epochs = as_size(v, key);
    else if (key == "learning_rate") t.learning_rate = as_double(v, key);
    else if (key == "beta1") t.beta1 = as_double(v, key);
    else if (key == "beta2") t.beta2 = as_double(v, key);
    else if (key == "adam_eps") t.adam_eps = as_double(v, key);
    else if (key == "fusion") t.fusion = parse_fusion_kind(as_string(v, key));
    else if (key == "mask_branch") t.mask_branch = parse_mask_branch(as_string(v, key));
    else if (key == "mask_rate") t.mask_rate = as_double(v, key);
    else if (key == "mask_embeddings") t.mask_embeddings = as_bool(v, key);
    else if (key == "seed") t.seed = static_cast<std::uint64_t>(as_size(v, key));
    else if (key == "folds") t.folds = as_size(v, key);
    else if (key == "quantiles") t.quantiles = as_size(v, key);
    else if (key == "model.d_img") t.model.d_img = as_size(v, key);
    else if (key == "model.d_roi") t.model.d_roi = as_size(v, key);
    else if (key == "model.d_p") t.model.d_p = as_size(v, key);
    else if (key == "model.gcn_hidden") t.model.gcn_hidden = as_size(v, key);
    else if (key == "model.mlp_hidden") t.model.mlp_hidden = as_size(v, key);
    else if (key == "model.proj_hidden") t.model.proj_hidden = as_size(v, key);
    else if (key == "model.roi_count") t.model.roi_count = as_size(v, key);
    else if (key == "model.roi_encoder") t.model.roi_encoder = parse_roi_encoder(as_string(v, key));
    else if (key == "model.branches") t.model.branches = parse_branch_mode(as_string(v, key));
    else if (key == "cohort.mode") cfg.cohort_mode = as_string(v, key);
    else if (key == "cohort.n") cfg.cohort_n = as_size(v, key);
    else if (key == "cohort.r") cfg.cohort_r = as_size(v, key);
    else if (key == "cohort.dim") cfg.cohort_dim = as_size(v, key);
    else if (key == "cohort.noise") cfg.cohort_noise = as_double(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
}

void apply_json(CliConfig& cfg, const json& obj, const std::string& prefix) {
    if (!obj.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, v] : obj.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object())
            apply_json(cfg, v, key);
        else
            set_key(cfg, key, v);
    }
}

void load_config_file(CliConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json obj;
    try {
        in >> obj;
    } catch (const json::exception& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    apply_json(cfg, obj, "");
}

void apply_overrides(CliConfig& cfg, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json v = json::parse(raw, nullptr, /*allow_exceptions=*/false);
        if (v.is_discarded()) v = raw;  // bare strings need no quoting
        set_key(cfg, key, v);
    }
}

void apply_env_seed(CliConfig& cfg) {
    const char* env = std::getenv("NEUROFUSE_SEED");
    if (!env || !*env) return;
    char* end = nullptr;
    const unsigned long long s = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
        throw ConfigError("NEUROFUSE_SEED must be a nonnegative integer, got '" +
                          std::string(env) + "'");
    cfg.train.seed = static_cast<std::uint64_t>(s);
}

json config_echo(const CliConfig& cfg) {
    const TrainConfig& t = cfg.train;
    return json{
        {"tau", t.tau},
        {"lambda", t.lambda},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"learning_rate", t.learning_rate},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps},
        {"fusion", fusion_kind_name(t.fusion)},
        {"mask_branch", mask_branch_name(t.mask_branch)},
        {"mask_rate", t.mask_rate},
        {"mask_embeddings", t.mask_embeddings},
        {"seed", t.seed},
        {"folds", t.folds},
        {"quantiles", t.quantiles},
        {"model",
         {{"d_img", t.model.d_img},
          {"d_roi", t.model.d_roi},
          {"d_p", t.model.d_p},
          {"gcn_hidden", t.model.gcn_hidden},
          {"mlp_hidden", t.model.mlp_hidden},
          {"proj_hidden", t.model.proj_hidden},
          {"roi_count", t.model.roi_count},
          {"roi_encoder", roi_encoder_name(t.model.roi_encoder)},
          {"branches", branch_mode_name(t.model.branches)}}},
        {"cohort",
         {{"mode", cfg.cohort_mode},
          {"n", cfg.cohort_n},
          {"r", cfg.cohort_r},
          {"dim", cfg.cohort_dim},
          {"noise", cfg.cohort_noise}}},
    };
}

Cohort obtain_cohort(const CliConfig& cfg, const std::string& cohort_dir) {
    if (!cohort_dir.empty()) return read_cohort(cohort_dir);
    const std::size_t d = cfg.cohort_dim;
    return generate_cohort(cfg.cohort_n, cfg.cohort_r, {d, d, d},
                           parse_cohort_mode(cfg.cohort_mode), cfg.cohort_noise, cfg.train.seed);
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory: " + dir);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for write: " + path);
    return out;
}

// --- subcommands -------------------------------------------------------------

void write_cv_outputs(const std::string& dir, const CliConfig& cfg, const CvResult& cv) {
    {
        auto out = open_out(dir + "/metrics.csv");
        out << "fold,acc,auc,f1\n";
        for (const auto& f : cv.folds)
            out << f.fold << ',' << fmt4(f.accuracy) << ',' << fmt4(f.auc) << ',' << fmt4(f.f1)
                << '\n';
        out << "mean," << fmt4(cv.accuracy.mean) << ',' << fmt4(cv.auc.mean) << ','
            << fmt4(cv.f1.mean) << '\n';
        out << "std," << fmt4(cv.accuracy.std) << ',' << fmt4(cv.auc.std) << ','
            << fmt4(cv.f1.std) << '\n';
    }
    {
        json folds = json::array();
        for (const auto& f : cv.folds)
            folds.push_back({{"fold", f.fold},
                             {"acc", f.accuracy},
                             {"auc", f.auc},
                             {"f1", f.f1},
                             {"alignment_gap", f.alignment_gap},
                             {"pre_alignment_gap", f.pre_alignment_gap}});
        const json summary{
            {"config", config_echo(cfg)},
            {"folds", folds},
            {"aggregate",
             {{"acc", {{"mean", cv.accuracy.mean}, {"std", cv.accuracy.std}}},
              {"auc", {{"mean", cv.auc.mean}, {"std", cv.auc.std}}},
              {"f1", {{"mean", cv.f1.mean}, {"std", cv.f1.std}}}}},
        };
        auto out = open_out(dir + "/summary.json");
        out << summary.dump(2) << '\n';
    }
}

int cmd_cv(const CliConfig& cfg, const std::string& cohort_dir, const std::string& out_dir) {
    if (cfg.train.model.branches != BranchMode::Joint)
        std::cerr << "note: branches=" << branch_mode_name(cfg.train.model.branches)
                  << ": the other branch's settings (fusion, lambda, roi/img encoder keys)"
                  << " are ignored\n";
    const Cohort cohort = obtain_cohort(cfg, cohort_dir);
    CliConfig local = cfg;
    local.train.model.roi_count = cohort.atlas.roi_count;
    const CvResult cv = run_cv(cohort, local.train);
    ensure_dir(out_dir);
    write_cv_outputs(out_dir, local, cv);
    return 0;
}

int cmd_ablate(const CliConfig& cfg, const std::string& cohort_dir, const std::string& out_dir) {
    const Cohort cohort = obtain_cohort(cfg, cohort_dir);
    ensure_dir(out_dir);
    auto out = open_out(out_dir + "/table.csv");
    out << "roi_encoder,fusion,acc_mean,acc_std,auc_mean,auc_std,f1_mean,f1_std\n";
    for (const RoiEncoderKind enc : {RoiEncoderKind::Mlp, RoiEncoderKind::Gcn}) {
        for (const FusionKind fus : {FusionKind::Concat, FusionKind::Contra}) {
            TrainConfig t = cfg.train;
            t.model.branches = BranchMode::Joint;
            t.model.roi_encoder = enc;
            t.fusion = fus;
            t.model.roi_count = cohort.atlas.roi_count;
            const CvResult cv = run_cv(cohort, t);
            out << roi_encoder_name(enc) << ',' << fusion_kind_name(fus) << ','
                << fmt4(cv.accuracy.mean) << ',' << fmt4(cv.accuracy.std) << ','
                << fmt4(cv.auc.mean) << ',' << fmt4(cv.auc.std) << ',' << fmt4(cv.f1.mean) << ','
                << fmt4(cv.f1.std) << '\n';
        }
    }
    return 0;
}

struct CurvePoint {
    std::string branch;
    double rate = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

void write_curve_svg(const std::string& path, const std::vector<CurvePoint>& points) {
    const double w = 640.0, h = 400.0, ml = 60.0, mr = 20.0, mt = 20.0, mb = 50.0;
    const auto xpos = [&](double rate) { return ml + rate / 0.5 * (w - ml - mr); };
    const auto ypos = [&](double acc) { return mt + (1.0 - acc) * (h - mt - mb); };
    const auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", v);
        return std::string(buf);
    };

    auto out = open_out(path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\">\n";
    out << "  <rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    // axes
    out << "  <line x1=\"" << num(ml) << "\" y1=\"" << num(h - mb) << "\" x2=\"" << num(w - mr)
        << "\" y2=\"" << num(h - mb) << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << num(ml) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(ml)
        << "\" y2=\"" << num(h - mb) << "\" stroke=\"black\"/>\n";
    for (const double r : {0.0, 0.1, 0.3, 0.5}) {
        out << "  <text x=\"" << num(xpos(r)) << "\" y=\"" << num(h - mb + 18.0)
            << "\" font-size=\"12\" text-anchor=\"middle\">" << num(r) << "</text>\n";
    }
    for (const double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        char lab[16];
        std::snprintf(lab, sizeof lab, "%.2f", a);
        out << "  <text x=\"" << num(ml - 8.0) << "\" y=\"" << num(ypos(a) + 4.0)
            << "\" font-size=\"12\" text-anchor=\"end\">" << lab << "</text>\n";
    }
    out << "  <text x=\"" << num((ml + w - mr) / 2.0) << "\" y=\"" << num(h - 8.0)
        << "\" font-size=\"13\" text-anchor=\"middle\">mask rate</text>\n";
    out << "  <text x=\"16\" y=\"" << num((mt + h - mb) / 2.0)
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << num((mt + h - mb) / 2.0) << ")\">accuracy</text>\n";

    const struct {
        const char* branch;
        const char* color;
    } series[] = {{"img", "#1f77b4"}, {"roi", "#ff7f0e"}};
    for (const auto& s : series) {
        std::vector<const CurvePoint*> pts;
        for (const auto& p : points)
            if (p.branch == s.branch) pts.push_back(&p);
        // +-1 std band: upper edge left to right, lower edge back
        out << "  <polygon fill=\"" << s.color << "\" fill-opacity=\"0.15\" stroke=\"none\" "
            << "points=\"";
        for (const auto* p : pts)
            out << num(xpos(p->rate)) << ',' << num(ypos(std::min(1.0, p->mean + p->std))) << ' ';
        for (auto it = pts.rbegin(); it != pts.rend(); ++it)
            out << num(xpos((*it)->rate)) << ','
                << num(ypos(std::max(0.0, (*it)->mean - (*it)->std))) << ' ';
        out << "\"/>\n";
        out << "  <polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" "
            << "points=\"";
        for (const auto* p : pts) out << num(xpos(p->rate)) << ',' << num(ypos(p->mean)) << ' ';
        out << "\"/>\n";
        for (const auto* p : pts)
            out << "  <circle cx=\"" << num(xpos(p->rate)) << "\" cy=\"" << num(ypos(p->mean))
                << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
    // legend
    out << "  <rect x=\"480\" y=\"30\" width=\"12\" height=\"12\" fill=\"#1f77b4\"/>\n";
    out << "  <text x=\"498\" y=\"40\" font-size=\"12\">imaging masked</text>\n";
    out << "  <rect x=\"480\" y=\"50\" width=\"12\" height=\"12\" fill=\"#ff7f0e\"/>\n";
    out << "  <text x=\"498\" y=\"60\" font-size=\"12\">roi masked</text>\n";
    out << "</svg>\n";
}

int cmd_missing(const CliConfig& cfg, const std::string& cohort_dir, const std::string& out_dir) {
    const Cohort cohort = obtain_cohort(cfg, cohort_dir);
    std::vector<CurvePoint> points;
    for (const MaskBranch branch : {MaskBranch::Img, MaskBranch::Roi}) {
        for (const double rate : {0.0, 0.1, 0.3, 0.5}) {
            TrainConfig t = cfg.train;
            t.model.branches = BranchMode::Joint;
            t.mask_branch = branch;
            t.mask_rate = rate;
            t.model.roi_count = cohort.atlas.roi_count;
            const CvResult cv = run_cv(cohort, t);
            points.push_back({mask_branch_name(branch), rate, cv.accuracy.mean,
                              cv.accuracy.std});
        }
    }
    ensure_dir(out_dir);
    {
        auto out = open_out(out_dir + "/curve.csv");
        out << "branch,rate,acc_mean,acc_std\n";
        for (const auto& p : points)
            out << p.branch << ',' << fmt4(p.rate) << ',' << fmt4(p.mean) << ',' << fmt4(p.std)
                << '\n';
    }
    write_curve_svg(out_dir + "/curve.svg", points);
    return 0;
}

// Per-subject maps over the test sets of every fold, averaged per class.
// The joint configuration reports the mean of its two branch maps.
struct ConfigMaps {
    ContributionMap disorder;
    ContributionMap control;
};

ConfigMaps attribute_configuration(const Cohort& cohort, const TrainConfig& base,
                                   BranchMode branches, const std::string& tag) {
    TrainConfig t = base;
    t.model.branches = branches;
    t.model.roi_count = cohort.atlas.roi_count;
    t.validate();
    const std::vector<bool> mask(cohort.subjects.size(), false);
    const PreparedCohort data = prepare_cohort(cohort, t, mask);
    const auto folds = stratified_folds(cohort, t.folds, t.seed);

    std::vector<ContributionMap> maps;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const TrainResult tr = train_model(data, folds[f].train_ids, t, t.seed + f);
        for (std::size_t id : folds[f].test_ids) {
            const SubjectData& s = data.subjects[id];
            const int target = s.label;
            ContributionMap m;
            if (branches == BranchMode::Img) {
                m = gradcam_imaging(tr.params, t.model, *s.volume, cohort.atlas, target);
            } else if (branches == BranchMode::Roi) {
                m = gradcam_roi(tr.params, t.model, s.graph, target);
            } else {
                const ContributionMap mi =
                    gradcam_imaging(tr.params, t.model, *s.volume, cohort.atlas, target);
                const ContributionMap mr = gradcam_roi(tr.params, t.model, s.graph, target);
                std::vector<double> avg(mi.scores.size());
                for (std::size_t i = 0; i < avg.size(); ++i)
                    avg[i] = 0.5 * (mi.scores[i] + mr.scores[i]);
                m.scores = min_max_normalize(avg);
                m.class_tag = mi.class_tag;
            }
            m.branch = tag;
            maps.push_back(std::move(m));
        }
    }
    return ConfigMaps{class_average_map(maps, "disorder"), class_average_map(maps, "control")};
}

int cmd_attribute(const CliConfig& cfg, const std::string& cohort_dir,
                  const std::string& out_dir) {
    if (cfg.train.model.roi_encoder != RoiEncoderKind::Gcn)
        throw ConfigError("attribute requires model.roi_encoder=gcn (graph-side maps)");
    const Cohort cohort = obtain_cohort(cfg, cohort_dir);
    const ConfigMaps joint =
        attribute_configuration(cohort, cfg.train, BranchMode::Joint, "joint");
    const ConfigMaps img = attribute_configuration(cohort, cfg.train, BranchMode::Img, "imaging");
    const ConfigMaps roi = attribute_configuration(cohort, cfg.train, BranchMode::Roi, "roi");

    ensure_dir(out_dir);
    write_map_csv(out_dir + "/map_joint_disorder.csv", joint.disorder);
    write_map_csv(out_dir + "/map_joint_control.csv", joint.control);
    write_map_csv(out_dir + "/map_img_disorder.csv", img.disorder);
    write_map_csv(out_dir + "/map_img_control.csv", img.control);
    write_map_csv(out_dir + "/map_roi_disorder.csv", roi.disorder);
    write_map_csv(out_dir + "/map_roi_control.csv", roi.control);

    const double top = 0.25;
    const json overlap{
        {"top_fraction", top},
        {"disorder",
         {{"joint_vs_img", branch_overlap(joint.disorder, img.disorder, top)},
          {"joint_vs_roi", branch_overlap(joint.disorder, roi.disorder, top)},
          {"img_vs_roi", branch_overlap(img.disorder, roi.disorder, top)}}},
        {"control",
         {{"joint_vs_img", branch_overlap(joint.control, img.control, top)},
          {"joint_vs_roi", branch_overlap(joint.control, roi.control, top)},
          {"img_vs_roi", branch_overlap(img.control, roi.control, top)}}},
    };
    auto out = open_out(out_dir + "/overlap.json");
    out << overlap.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neurofuse: joint imaging/ROI representation learning on synthetic cohorts"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic cohort directory");
    std::string gen_mode = "easy", gen_out;
    std::size_t gen_n = 40, gen_r = 16, gen_dim = 16;
    double gen_noise = 0.0;
    std::uint64_t gen_seed = 7;
    gen->add_option("--mode", gen_mode, "easy | img_only | roi_only | complementary");
    gen->add_option("--n", gen_n, "number of subjects");
    gen->add_option("--r", gen_r, "number of ROIs");
    gen->add_option("--dim", gen_dim, "cubic volume extent per axis");
    gen->add_option("--noise", gen_noise, "gaussian noise std");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    // shared options for the experiment subcommands
    struct ExpArgs {
        std::string config, cohort, out;
        std::vector<std::string> sets;
        std::string branches, fusion;
    };
    const auto add_exp_options = [](CLI::App* cmd, ExpArgs& a, bool branch_flags) {
        cmd->add_option("--config", a.config, "JSON config file");
        cmd->add_option("--cohort", a.cohort, "cohort directory (otherwise generated in memory)");
        cmd->add_option("--out", a.out, "output directory")->required();
        cmd->add_option("--set", a.sets, "override config key, e.g. --set model.branches=img");
        if (branch_flags) {
            cmd->add_option("--branches", a.branches, "shorthand for --set model.branches=...");
            cmd->add_option("--fusion", a.fusion, "shorthand for --set fusion=...");
        }
    };

    ExpArgs cv_args, ab_args, mi_args, at_args;
    auto* cv = app.add_subcommand("cv", "cross-validated training and evaluation");
    add_exp_options(cv, cv_args, true);
    auto* ablate = app.add_subcommand("ablate", "encoder x fusion ablation grid");
    add_exp_options(ablate, ab_args, false);
    auto* missing = app.add_subcommand("missing", "missing-view accuracy curves");
    add_exp_options(missing, mi_args, false);
    auto* attribute = app.add_subcommand("attribute", "per-branch contribution maps");
    add_exp_options(attribute, at_args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const auto build_config = [](const ExpArgs& a) {
        CliConfig cfg;
        if (!a.config.empty()) load_config_file(cfg, a.config);
        apply_overrides(cfg, a.sets);
        if (!a.branches.empty()) set_key(cfg, "model.branches", a.branches);
        if (!a.fusion.empty()) set_key(cfg, "fusion", a.fusion);
        apply_env_seed(cfg);
        return cfg;
    };

    try {
        if (gen->parsed()) {
            const char* env = std::getenv("NEUROFUSE_SEED");
            if (env && *env) {
                CliConfig tmp;
                apply_env_seed(tmp);
                gen_seed = tmp.train.seed;
            }
            const Cohort cohort = generate_cohort(gen_n, gen_r, {gen_dim, gen_dim, gen_dim},
                                                  parse_cohort_mode(gen_mode), gen_noise,
                                                  gen_seed);
            write_cohort(gen_out, cohort);
            return 0;
        }
        if (cv->parsed()) return cmd_cv(build_config(cv_args), cv_args.cohort, cv_args.out);
        if (ablate->parsed())
            return cmd_ablate(build_config(ab_args), ab_args.cohort, ab_args.out);
        if (missing->parsed())
            return cmd_missing(build_config(mi_args), mi_args.cohort, mi_args.out);
        if (attribute->parsed())
            return cmd_attribute(build_config(at_args), at_args.cohort, at_args.out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
