#include "neurofuse/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "neurofuse/ops.hpp"
#include "neurofuse/rng.hpp"

namespace neurofuse {

namespace O = ops;

MaskBranch parse_mask_branch(const std::string& name) {
    if (name == "none") return MaskBranch::None;
    if (name == "img") return MaskBranch::Img;
    if (name == "roi") return MaskBranch::Roi;
    throw ConfigError("unknown mask branch '" + name + "' (valid: none, img, roi)");
}

std::string mask_branch_name(MaskBranch b) {
    switch (b) {
        case MaskBranch::None: return "none";
        case MaskBranch::Img: return "img";
        case MaskBranch::Roi: return "roi";
    }
    return "none";
}

void TrainConfig::validate() const {
    if (tau <= 0.0) throw ConfigError("tau must be positive");
    if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (mask_rate < 0.0 || mask_rate > 1.0) throw ConfigError("mask rate must be in [0,1]");
    if (mask_branch != MaskBranch::None && model.branches != BranchMode::Joint)
        throw ConfigError("masking requires the joint configuration");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (quantiles < 2) throw ConfigError("quantile count must be >= 2");
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (params.count() != grads.count())
        throw ConfigError("adam_step: parameter/gradient group counts differ");
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t g = 0; g < params.count(); ++g) {
        Tensor& p = params.value(g);
        const Tensor& d = grads.value(g);
        if (!p.same_shape(d))
            throw ConfigError("adam_step: shape mismatch in group " + params.name(g));
        Tensor& m = state.m.value(g);
        Tensor& v = state.v.value(g);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * d[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * d[i] * d[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::vector<bool> mask_views(std::size_t n, MaskBranch branch, double rate, std::uint64_t seed) {
    std::vector<bool> mask(n, false);
    if (branch == MaskBranch::None || rate <= 0.0) return mask;
    const std::size_t count = static_cast<std::size_t>(
        std::llround(rate * static_cast<double>(n)));
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    Rng rng(seed ^ 0x6d61736b00000000ULL);
    rng.shuffle(ids);
    for (std::size_t i = 0; i < count && i < n; ++i) mask[ids[i]] = true;
    return mask;
}

PreparedCohort prepare_cohort(const Cohort& cohort, const TrainConfig& cfg,
                              const std::vector<bool>& mask) {
    PreparedCohort out;
    out.zero_volume.dims = cohort.atlas.dims;
    out.zero_volume.values.assign(out.zero_volume.voxel_count(), 0.0f);
    const bool need_graph = cfg.model.branches != BranchMode::Img;
    RoiGraph zero_graph;
    if (need_graph) zero_graph = build_graph(out.zero_volume, cohort.atlas, cfg.quantiles);

    out.subjects.reserve(cohort.subjects.size());
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
        const auto& rec = cohort.subjects[i];
        SubjectData sd;
        sd.id = rec.id;
        sd.label = rec.label;
        const bool masked = i < mask.size() && mask[i];
        sd.masked = masked;
        if (masked && !cfg.mask_embeddings && cfg.mask_branch == MaskBranch::Img)
            sd.volume = &out.zero_volume;
        else
            sd.volume = &rec.volume;
        if (need_graph) {
            if (masked && !cfg.mask_embeddings && cfg.mask_branch == MaskBranch::Roi)
                sd.graph = zero_graph;
            else
                sd.graph = build_graph(rec.volume, cohort.atlas, cfg.quantiles);
        }
        out.subjects.push_back(std::move(sd));
    }
    return out;
}

BatchEval eval_batch(const std::vector<const SubjectData*>& batch, const ParamSet& params,
                     const TrainConfig& cfg, bool want_grads) {
    const std::size_t n = batch.size();
    if (n == 0) throw ConfigError("eval_batch: empty batch");
    const BranchMode branches = cfg.model.branches;
    const double lambda = cfg.effective_lambda();

    BatchEval out;
    out.grads = want_grads ? params.zeros_like() : ParamSet{};

    std::vector<ImagingCache> img_caches(n);
    std::vector<RoiCache> roi_caches(n);
    std::vector<Tensor> fused(n);
    std::vector<Tensor> d_logits(n);

    double l_cls = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const SubjectData& s = *batch[i];
        if (branches != BranchMode::Roi) img_caches[i] = encode_image(*s.volume, params, cfg.model);
        if (branches != BranchMode::Img) roi_caches[i] = encode_roi(s.graph, params, cfg.model);
        if (cfg.mask_embeddings && s.masked) {
            Tensor& z = cfg.mask_branch == MaskBranch::Img ? img_caches[i].embedding
                                                           : roi_caches[i].embedding;
            z = Tensor(z.shape());
        }
        switch (branches) {
            case BranchMode::Img: fused[i] = img_caches[i].embedding; break;
            case BranchMode::Roi: fused[i] = roi_caches[i].embedding; break;
            case BranchMode::Joint:
                fused[i] = fuse_concat(img_caches[i].embedding, roi_caches[i].embedding);
                break;
        }
        const Tensor logits = classify(fused[i], params);
        auto xr = O::softmax_xent(logits, static_cast<std::size_t>(s.label));
        l_cls += xr.loss;
        d_logits[i] = std::move(xr.grad);
    }
    l_cls /= static_cast<double>(n);

    // contrastive term over subjects with both branches present
    double l_con = 0.0;
    std::vector<std::size_t> con_ids;
    std::vector<ProjectionCache> proj_img, proj_roi;
    Tensor d_p_img, d_p_roi;
    if (branches == BranchMode::Joint && lambda > 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            if (!batch[i]->masked) con_ids.push_back(i);
        if (con_ids.size() < 2) con_ids.clear();  // term undefined below 2 subjects
        if (!con_ids.empty()) {
            const std::size_t b = con_ids.size();
            const std::size_t dp = cfg.model.d_p;
            Tensor p_img({b, dp}), p_roi({b, dp});
            for (std::size_t k = 0; k < b; ++k) {
                proj_img.push_back(project(img_caches[con_ids[k]].embedding, "proj_img", params));
                proj_roi.push_back(project(roi_caches[con_ids[k]].embedding, "proj_roi", params));
                for (std::size_t j = 0; j < dp; ++j) {
                    p_img.at(k, j) = proj_img.back().projection[j];
                    p_roi.at(k, j) = proj_roi.back().projection[j];
                }
            }
            const SimilarityMatrix sim = similarity_matrix(p_img, p_roi, cfg.tau);
            InfoNceResult nce = info_nce(sim);
            l_con = nce.loss;
            out.contrastive_count = b;
            if (want_grads) {
                for (std::size_t i = 0; i < nce.d_s.size(); ++i) nce.d_s[i] *= lambda;
                auto sg = similarity_matrix_backward(p_img, p_roi, cfg.tau, nce.d_s);
                d_p_img = std::move(sg.d_p_img);
                d_p_roi = std::move(sg.d_p_roi);
            }
        }
    }

    out.loss = joint_loss(l_cls, l_con, lambda);
    if (!want_grads) return out;

    // classification path backward
    std::vector<Tensor> dz_img(n), dz_roi(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d_logits[i].size(); ++j)
            d_logits[i][j] /= static_cast<double>(n);
        const Tensor d_fused = classify_backward(fused[i], params, d_logits[i], out.grads);
        switch (branches) {
            case BranchMode::Img: dz_img[i] = d_fused; break;
            case BranchMode::Roi: dz_roi[i] = d_fused; break;
            case BranchMode::Joint: {
                dz_img[i] = Tensor({cfg.model.d_img});
                dz_roi[i] = Tensor({cfg.model.d_roi});
                for (std::size_t j = 0; j < cfg.model.d_img; ++j) dz_img[i][j] = d_fused[j];
                for (std::size_t j = 0; j < cfg.model.d_roi; ++j)
                    dz_roi[i][j] = d_fused[cfg.model.d_img + j];
                break;
            }
        }
    }

    // contrastive path backward into the embeddings
    for (std::size_t k = 0; k < con_ids.size(); ++k) {
        const std::size_t i = con_ids[k];
        Tensor dpi({cfg.model.d_p}), dpr({cfg.model.d_p});
        for (std::size_t j = 0; j < cfg.model.d_p; ++j) {
            dpi[j] = d_p_img.at(k, j);
            dpr[j] = d_p_roi.at(k, j);
        }
        axpy(dz_img[i], 1.0, project_backward(proj_img[k], "proj_img", params, dpi, out.grads));
        axpy(dz_roi[i], 1.0, project_backward(proj_roi[k], "proj_roi", params, dpr, out.grads));
    }

    for (std::size_t i = 0; i < n; ++i) {
        // a replaced (zeroed) embedding passes no gradient into its encoder
        const bool img_cut =
            cfg.mask_embeddings && batch[i]->masked && cfg.mask_branch == MaskBranch::Img;
        const bool roi_cut =
            cfg.mask_embeddings && batch[i]->masked && cfg.mask_branch == MaskBranch::Roi;
        if (branches != BranchMode::Roi && !img_cut)
            encode_image_backward(img_caches[i], params, cfg.model, dz_img[i], out.grads);
        if (branches != BranchMode::Img && !roi_cut)
            encode_roi_backward(roi_caches[i], params, cfg.model, dz_roi[i], out.grads);
    }
    return out;
}

TrainResult train_model(const PreparedCohort& data, const std::vector<std::size_t>& train_ids,
                        const TrainConfig& cfg, std::uint64_t run_seed) {
    cfg.validate();
    if (train_ids.size() < cfg.batch_size && train_ids.size() < 2)
        throw ConfigError("not enough training subjects");

    TrainResult result;
    result.params = init_params(cfg.model, run_seed);
    AdamState adam = AdamState::init(result.params);
    Rng rng(run_seed ^ 0x747261696e000000ULL);

    std::vector<std::size_t> order = train_ids;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_cls = 0.0, epoch_con = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<const SubjectData*> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(&data.subjects[order[i]]);
            BatchEval ev = eval_batch(batch, result.params, cfg, /*want_grads=*/true);
            adam_step(result.params, ev.grads, adam, cfg.learning_rate, cfg.beta1, cfg.beta2,
                      cfg.adam_eps);
            epoch_cls += ev.loss.cls;
            epoch_con += ev.loss.con;
            ++batches;
        }
        result.cls_trace.push_back(epoch_cls / static_cast<double>(batches));
        result.con_trace.push_back(epoch_con / static_cast<double>(batches));
    }
    return result;
}

std::vector<Prediction> predict(const PreparedCohort& data,
                                const std::vector<std::size_t>& ids, const ParamSet& params,
                                const TrainConfig& cfg) {
    std::vector<Prediction> preds;
    preds.reserve(ids.size());
    for (std::size_t id : ids) {
        const SubjectData& s = data.subjects[id];
        Tensor fused;
        switch (cfg.model.branches) {
            case BranchMode::Img:
                fused = encode_image(*s.volume, params, cfg.model).embedding;
                break;
            case BranchMode::Roi:
                fused = encode_roi(s.graph, params, cfg.model).embedding;
                break;
            case BranchMode::Joint: {
                Tensor z_img = encode_image(*s.volume, params, cfg.model).embedding;
                Tensor z_roi = encode_roi(s.graph, params, cfg.model).embedding;
                if (cfg.mask_embeddings && s.masked) {
                    Tensor& z = cfg.mask_branch == MaskBranch::Img ? z_img : z_roi;
                    z = Tensor(z.shape());
                }
                fused = fuse_concat(z_img, z_roi);
                break;
            }
        }
        const Tensor probs = O::softmax(classify(fused, params));
        Prediction p;
        p.subject_id = s.id;
        p.score = probs[1];
        p.predicted = probs[1] > probs[0] ? 1 : 0;
        p.truth = s.label;
        preds.push_back(std::move(p));
    }
    return preds;
}

double alignment_gap(const PreparedCohort& data, const std::vector<std::size_t>& ids,
                     const ParamSet& params, const TrainConfig& cfg) {
    if (cfg.model.branches != BranchMode::Joint) return 0.0;
    std::vector<Tensor> p_img, p_roi;
    for (std::size_t id : ids) {
        const SubjectData& s = data.subjects[id];
        p_img.push_back(
            project(encode_image(*s.volume, params, cfg.model).embedding, "proj_img", params)
                .projection);
        p_roi.push_back(
            project(encode_roi(s.graph, params, cfg.model).embedding, "proj_roi", params)
                .projection);
    }
    double pos = 0.0, neg = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < p_img.size(); ++i)
        for (std::size_t j = 0; j < p_roi.size(); ++j) {
            const auto c = O::cosine_sim(p_img[i], p_roi[j]);
            if (c.degenerate) continue;
            if (i == j) {
                pos += c.value;
                ++n_pos;
            } else {
                neg += c.value;
                ++n_neg;
            }
        }
    if (n_pos == 0 || n_neg == 0) return 0.0;
    return pos / static_cast<double>(n_pos) - neg / static_cast<double>(n_neg);
}

CvResult run_cv_prepared(const Cohort& cohort, const PreparedCohort& data,
                         const TrainConfig& cfg) {
    cfg.validate();
    const auto folds = stratified_folds(cohort, cfg.folds, cfg.seed);
    CvResult cv;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const std::uint64_t fold_seed = cfg.seed + f;
        FoldReport report;
        report.fold = f;
        if (cfg.model.branches == BranchMode::Joint) {
            const ParamSet fresh = init_params(cfg.model, fold_seed);
            report.pre_alignment_gap = alignment_gap(data, folds[f].test_ids, fresh, cfg);
        }
        TrainResult tr = train_model(data, folds[f].train_ids, cfg, fold_seed);
        const auto preds = predict(data, folds[f].test_ids, tr.params, cfg);
        const AccF1 af = accuracy_f1(preds);
        report.accuracy = af.accuracy;
        report.f1 = af.f1;
        report.auc = auc(preds);
        report.cls_trace = std::move(tr.cls_trace);
        report.con_trace = std::move(tr.con_trace);
        if (cfg.model.branches == BranchMode::Joint)
            report.alignment_gap = alignment_gap(data, folds[f].test_ids, tr.params, cfg);
        cv.folds.push_back(std::move(report));
    }
    std::vector<double> accs, aucs, f1s;
    for (const auto& r : cv.folds) {
        accs.push_back(r.accuracy);
        aucs.push_back(r.auc);
        f1s.push_back(r.f1);
    }
    cv.accuracy = aggregate(accs);
    cv.auc = aggregate(aucs);
    cv.f1 = aggregate(f1s);
    return cv;
}

CvResult run_cv(const Cohort& cohort, const TrainConfig& cfg) {
    TrainConfig local = cfg;
    local.model.roi_count = cohort.atlas.roi_count;
    local.validate();
    const auto mask = mask_views(cohort.subjects.size(), local.mask_branch, local.mask_rate,
                                 local.seed);
    const PreparedCohort data = prepare_cohort(cohort, local, mask);
    return run_cv_prepared(cohort, data, local);
}

}  // namespace neurofuse
