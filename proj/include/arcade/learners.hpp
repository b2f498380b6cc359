#pragma once

#include <string>

#include "arcade/errors.hpp"
#include "arcade/meta.hpp"

namespace arcade {

// Every learner shares the adaptation engine and the meta-test protocol;
// they differ only in episode construction and in which quantities are
// meta-learned.
enum class LearnerKind { arcade_m, arcade_h, seqfomaml, ocmaml, scratch };

inline std::string to_string(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::arcade_m: return "arcade-m";
        case LearnerKind::arcade_h: return "arcade-h";
        case LearnerKind::seqfomaml: return "seqfomaml";
        case LearnerKind::ocmaml: return "ocmaml";
        case LearnerKind::scratch: return "scratch";
    }
    throw InputError("unknown learner kind");
}

inline LearnerKind parse_learner(const std::string& s) {
    if (s == "arcade-m") return LearnerKind::arcade_m;
    if (s == "arcade-h") return LearnerKind::arcade_h;
    if (s == "seqfomaml") return LearnerKind::seqfomaml;
    if (s == "ocmaml") return LearnerKind::ocmaml;
    if (s == "scratch") return LearnerKind::scratch;
    throw InputError("unknown learner '" + s +
                     "' (expected arcade-m, arcade-h, seqfomaml, ocmaml or scratch)");
}

// Rewrites the protocol knobs of a config for the given learner.
//  - arcade-m / arcade-h: learned per-parameter rates, immediate + final
//    (+ optional replay) terms, one-class adaptation everywhere.
//  - seqfomaml: scalar fixed inner rate, class-balanced adaptation batches
//    during meta-training only, final-parameter loss terms only.
//  - ocmaml: scalar fixed inner rate, single-task episodes (L=1), one loss
//    term per episode.
inline MetaConfig apply_learner(MetaConfig cfg, LearnerKind kind) {
    switch (kind) {
        case LearnerKind::arcade_m:
            cfg.variant = Variant::M;
            break;
        case LearnerKind::arcade_h:
            cfg.variant = Variant::H;
            break;
        case LearnerKind::seqfomaml:
            cfg.variant = Variant::M;
            cfg.learn_alpha = false;
            cfg.immediate_terms = false;
            cfg.final_terms = true;
            cfg.replay_term = false;
            cfg.meta_adapt_kind = AdaptSetKind::balanced;
            break;
        case LearnerKind::ocmaml:
            cfg.variant = Variant::M;
            cfg.learn_alpha = false;
            cfg.immediate_terms = true;
            cfg.final_terms = false;
            cfg.replay_term = false;
            cfg.L = 1;
            break;
        case LearnerKind::scratch:
            cfg.learn_alpha = false;
            break;
    }
    return cfg;
}

inline bool learner_stores_alpha(LearnerKind kind) {
    return kind == LearnerKind::arcade_m || kind == LearnerKind::arcade_h;
}

// SeqFOMAML-style meta-training: class-balanced adaptation sets, scalar
// inner rate, sum of final-parameter validation losses. Meta-validation and
// meta-test adaptation remain one-class.
template <typename Real, typename Model>
MetaTrainResult<Real> seqfomaml_meta_train(const Model& model, const Dataset<Real>& dataset,
                                           const MetaSplit& split, const MetaConfig& base,
                                           int workers = 1) {
    return meta_train(model, dataset, split, apply_learner(base, LearnerKind::seqfomaml), workers);
}

// OC-MAML-style meta-training: every episode is a single OCC task.
template <typename Real, typename Model>
MetaTrainResult<Real> ocmaml_meta_train(const Model& model, const Dataset<Real>& dataset,
                                        const MetaSplit& split, const MetaConfig& base,
                                        int workers = 1) {
    return meta_train(model, dataset, split, apply_learner(base, LearnerKind::ocmaml), workers);
}

// Sanity floor: a freshly initialized network fine-tuned through the
// sequence with a scalar rate, evaluated like any meta-learned model.
template <typename Real, typename Model>
AccuracyMatrix scratch_finetune(const Model& model, const TaskSequence<Real>& seq,
                                const MetaConfig& base) {
    const MetaConfig cfg = apply_learner(base, LearnerKind::scratch);
    Rng rng(mix_seed(cfg.seed, seed_tags::scratch, seq.seed));
    const ParamSet<Real> theta = model.init_params(rng);
    const LearningRateSet<Real> lrs =
        LearningRateSet<Real>::constant(theta.values.size(), cfg.alpha_init);
    return evaluate_sequence(model, theta, lrs, seq, cfg);
}

}  // namespace arcade
