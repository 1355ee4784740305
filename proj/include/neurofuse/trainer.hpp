#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neurofuse/cohort.hpp"
#include "neurofuse/encoders.hpp"
#include "neurofuse/metrics.hpp"
#include "neurofuse/objective.hpp"
#include "neurofuse/roigraph.hpp"

namespace neurofuse {

enum class MaskBranch { None, Img, Roi };

MaskBranch parse_mask_branch(const std::string& name);
std::string mask_branch_name(MaskBranch b);

struct TrainConfig {
    double tau = 0.5;
    double lambda = 1.0;
    std::size_t batch_size = 16;
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    ModelConfig model;
    FusionKind fusion = FusionKind::Contra;
    MaskBranch mask_branch = MaskBranch::None;
    double mask_rate = 0.0;
    bool mask_embeddings = false;  // alternative reading: zero embeddings, not inputs
    std::uint64_t seed = 7;
    std::size_t folds = 5;
    std::size_t quantiles = 8;  // Q for ROI descriptors

    /// Effective contrastive weight: concat fusion forces lambda = 0, and
    /// single-branch models have no contrastive term.
    double effective_lambda() const {
        if (fusion == FusionKind::Concat) return 0.0;
        if (model.branches != BranchMode::Joint) return 0.0;
        return lambda;
    }

    void validate() const;
};

// --- optimizer ---------------------------------------------------------------

struct AdamState {
    ParamSet m;
    ParamSet v;
    std::size_t step = 0;

    static AdamState init(const ParamSet& params) {
        return AdamState{params.zeros_like(), params.zeros_like(), 0};
    }
};

/// Standard bias-corrected adaptive-moment update, in place.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps);

// --- missing-view masking ------------------------------------------------------

/// Selects exactly round(rate * n) subjects deterministically from the seed.
/// The mask is fixed for a whole run (train and test).
std::vector<bool> mask_views(std::size_t n, MaskBranch branch, double rate, std::uint64_t seed);

// --- prepared per-subject inputs -------------------------------------------------

struct SubjectData {
    std::string id;
    int label = 0;
    bool masked = false;       // true when either branch input was zeroed
    const Volume* volume = nullptr;  // imaging input (zero volume when masked)
    RoiGraph graph;            // ROI input (built from zero volume when masked)
};

struct PreparedCohort {
    std::vector<SubjectData> subjects;
    Volume zero_volume;
};

/// Builds graphs once per subject and applies the run-level mask to inputs.
PreparedCohort prepare_cohort(const Cohort& cohort, const TrainConfig& cfg,
                              const std::vector<bool>& mask);

// --- batch objective -------------------------------------------------------------

struct BatchEval {
    LossBreakdown loss;
    ParamSet grads;
    std::size_t contrastive_count = 0;  // subjects in the contrastive term
};

/// Forward + backward of the joint objective over one mini-batch.
BatchEval eval_batch(const std::vector<const SubjectData*>& batch, const ParamSet& params,
                     const TrainConfig& cfg, bool want_grads);

// --- training and evaluation -------------------------------------------------------

struct TrainResult {
    ParamSet params;
    std::vector<double> cls_trace;  // per-epoch mean classification loss
    std::vector<double> con_trace;  // per-epoch mean contrastive loss
};

TrainResult train_model(const PreparedCohort& data, const std::vector<std::size_t>& train_ids,
                        const TrainConfig& cfg, std::uint64_t run_seed);

std::vector<Prediction> predict(const PreparedCohort& data,
                                const std::vector<std::size_t>& ids, const ParamSet& params,
                                const TrainConfig& cfg);

/// Mean same-subject minus mean cross-subject cosine of the projections.
/// Degenerate (zero-norm) pairs are skipped.
double alignment_gap(const PreparedCohort& data, const std::vector<std::size_t>& ids,
                     const ParamSet& params, const TrainConfig& cfg);

struct FoldReport {
    std::size_t fold = 0;
    double accuracy = 0.0;
    double auc = 0.0;
    double f1 = 0.0;
    double alignment_gap = 0.0;
    double pre_alignment_gap = 0.0;
    std::vector<double> cls_trace;
    std::vector<double> con_trace;
};

struct CvResult {
    std::vector<FoldReport> folds;
    MeanStd accuracy;
    MeanStd auc;
    MeanStd f1;
};

/// Stratified k-fold cross-validation: fresh seeded init per fold, train on
/// train ids, evaluate on test ids. Fold f uses stream seed + f.
CvResult run_cv(const Cohort& cohort, const TrainConfig& cfg);

/// run_cv on an already prepared cohort (shared graph construction).
CvResult run_cv_prepared(const Cohort& cohort, const PreparedCohort& data,
                         const TrainConfig& cfg);

}  // namespace neurofuse
