#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "arcade/errors.hpp"
#include "arcade/metrics.hpp"
#include "arcade/net.hpp"
#include "arcade/rng.hpp"
#include "arcade/tasks.hpp"

namespace arcade {

// Per-parameter learning rates. Raw values are stored unclipped; adaptation
// uses clip_lrs. Raw values at or below zero freeze their parameter.
template <typename Real>
struct LearningRateSet {
    std::vector<Real> raw;

    static LearningRateSet constant(std::size_t n, double value) {
        LearningRateSet lrs;
        lrs.raw.assign(n, static_cast<Real>(value));
        return lrs;
    }
};

// ARCADe-M adapts every parameter; ARCADe-H adapts only the classification
// head and treats backbone parameters as task-agnostic end values.
enum class Variant { M, H };

struct MetaConfig {
    double beta = 0.01;     // outer learning rate
    int inner_steps = 3;    // gradient steps per task during adaptation
    std::size_t K = 10;     // adaptation set size
    std::size_t M = 20;     // validation set size per task
    std::size_t L = 5;      // tasks per meta-training sequence
    int meta_batch = 4;     // sequences per outer iteration
    int warmup_iters = 0;   // iterations before learning rates start updating
    Variant variant = Variant::M;
    bool replay_term = true;
    int iterations = 1000;
    int val_every = 50;
    int val_sequences = 16;
    std::uint64_t seed = 0;

    // Learner-protocol knobs. ARCADe defaults; the baseline presets in
    // learners.hpp override them.
    bool learn_alpha = true;
    double alpha_init = 0.1;  // initial raw rate, and the scalar rate of baselines
    bool immediate_terms = true;
    bool final_terms = true;
    AdaptSetKind meta_adapt_kind = AdaptSetKind::one_class;
};

inline void validate_meta_config(const MetaConfig& cfg) {
    if (!(cfg.beta > 0)) throw InputError("MetaConfig: beta must be positive");
    if (cfg.inner_steps < 1) throw InputError("MetaConfig: inner_steps must be >= 1");
    if (cfg.meta_batch < 1) throw InputError("MetaConfig: meta_batch must be >= 1");
    if (cfg.K == 0 || cfg.M == 0 || cfg.M % 2 != 0)
        throw InputError("MetaConfig: K must be positive, M positive and even");
    if (cfg.L == 0) throw InputError("MetaConfig: L must be >= 1");
    if (cfg.iterations < 1) throw InputError("MetaConfig: iterations must be >= 1");
    if (cfg.val_every < 1) throw InputError("MetaConfig: val_every must be >= 1");
    if (cfg.val_sequences < 1) throw InputError("MetaConfig: val_sequences must be >= 1");
    if (cfg.warmup_iters < 0) throw InputError("MetaConfig: warmup_iters must be >= 0");
    if (!cfg.immediate_terms && !cfg.final_terms)
        throw InputError("MetaConfig: at least one loss term family must be enabled");
}

// Effective rates: elementwise clamp of the raw values into [0,1].
template <typename Real>
std::vector<Real> clip_lrs(const LearningRateSet<Real>& lrs) {
    std::vector<Real> eff(lrs.raw.size());
    for (std::size_t i = 0; i < lrs.raw.size(); ++i)
        eff[i] = std::clamp(lrs.raw[i], Real(0), Real(1));
    return eff;
}

template <typename Real>
struct AdaptationStepRecord {
    int task_index = 0;
    int step_index = 0;
    std::vector<Real> grad;          // training gradient at the pre-step parameters
    std::vector<Real> params_after;  // parameters after applying the step
};

template <typename Real>
struct AdaptationTrace {
    std::vector<AdaptationStepRecord<Real>> steps;
};

// The three-part sequence loss of one adaptation episode. total is the sum
// of the immediate, final and replay terms, in that order.
struct SequenceLoss {
    double total = 0.0;
    std::vector<double> immediate_terms;
    std::vector<double> final_terms;
    std::vector<double> replay_terms;
    std::vector<int> replay_sources;  // 0-based index of the replayed task
};

template <typename Real>
struct MetaGradients {
    std::vector<Real> g_theta;
    std::vector<Real> g_alpha;
    double l_meta = 0.0;
    std::vector<SequenceLoss> per_sequence;
};

namespace seed_tags {
constexpr std::uint64_t replay = 0x7265706c61ULL;
constexpr std::uint64_t test_eval = 0x74657374ULL;
constexpr std::uint64_t scratch = 0x73637261ULL;
}  // namespace seed_tags

namespace detail {

template <typename Real>
IndexRange adapt_range(const ParamSet<Real>& theta, Variant variant) {
    if (variant == Variant::H) {
        if (theta.head_range.size() == 0)
            throw InputError("variant H requires a non-empty head range");
        return theta.head_range;
    }
    return {0, theta.values.size()};
}

// Runs one sequence-adaptation episode: sequential inner-loop updates with
// clipped rates, loss-term bookkeeping and, when requested, first-order
// gradient accumulation for theta and alpha.
template <typename Real, typename Model>
struct EpisodeRunner {
    const Model& model;
    const MetaConfig& cfg;
    const std::vector<Real>& eff;     // clipped rates
    const std::vector<Real>& raw;     // raw rates (for the clip-interior mask)
    IndexRange range;                 // coordinates touched by adaptation
    bool want_grads = false;
    bool want_trace = false;

    ParamSet<Real> cur;
    std::vector<Real> g_cum;  // sum of training gradients taken so far
    std::vector<Real> g_train, g_val;
    SequenceLoss loss;
    AdaptationTrace<Real> trace;
    std::vector<Real> g_theta, g_alpha;

    EpisodeRunner(const Model& m, const MetaConfig& c, const ParamSet<Real>& theta,
                  const std::vector<Real>& eff_rates, const std::vector<Real>& raw_rates,
                  bool grads, bool trace_on)
        : model(m), cfg(c), eff(eff_rates), raw(raw_rates),
          range(adapt_range(theta, c.variant)), want_grads(grads), want_trace(trace_on),
          cur(theta) {
        const std::size_t P = theta.values.size();
        if (eff.size() != P) throw InputError("learning rate vector does not match parameters");
        if (want_grads) {
            g_cum.assign(P, Real(0));
            g_theta.assign(P, Real(0));
            g_alpha.assign(P, Real(0));
        }
    }

    void run(const TaskSequence<Real>& seq, Rng& replay_rng) {
        validate_sequence(seq);
        const std::size_t J = seq.length();
        for (std::size_t j = 0; j < J; ++j) {
            adapt_one_task(seq.tasks[j], static_cast<int>(j));
            if (cfg.immediate_terms)
                loss.immediate_terms.push_back(eval_term(seq.tasks[j].val));
            if (cfg.replay_term && j >= 1) {
                const auto u = static_cast<std::size_t>(replay_rng.below(j));
                loss.replay_terms.push_back(eval_term(seq.tasks[u].val));
                loss.replay_sources.push_back(static_cast<int>(u));
            }
        }
        if (cfg.final_terms)
            for (std::size_t j = 0; j < J; ++j)
                loss.final_terms.push_back(eval_term(seq.tasks[j].val));
        for (double v : loss.immediate_terms) loss.total += v;
        for (double v : loss.final_terms) loss.total += v;
        for (double v : loss.replay_terms) loss.total += v;
    }

    void adapt_one_task(const OCCTask<Real>& task, int task_index) {
        for (int s = 0; s < cfg.inner_steps; ++s) {
            model.loss_grad(cur, task.train, g_train);
            check_finite(g_train, "adaptation gradient");
            for (std::size_t i = range.begin; i < range.end; ++i)
                cur.values[i] -= eff[i] * g_train[i];
            if (want_grads)
                for (std::size_t i = 0; i < g_cum.size(); ++i) g_cum[i] += g_train[i];
            if (want_trace) trace.steps.push_back({task_index, s, g_train, cur.values});
        }
    }

    // Evaluates one validation loss term at the current adaptation point and
    // folds its first-order contributions into g_theta / g_alpha. A term
    // reached after training gradients g_1..g_t contributes grad_val to
    // g_theta and -grad_val o (g_1+...+g_t) to g_alpha, restricted to
    // coordinates whose raw rate lies strictly inside (0,1); the hard clip
    // has zero derivative elsewhere.
    double eval_term(const Batch<Real>& val_batch) {
        if (!want_grads) return static_cast<double>(model.loss(cur, val_batch));
        const double lv = static_cast<double>(model.loss_grad(cur, val_batch, g_val));
        check_finite(g_val, "validation gradient");
        for (std::size_t i = 0; i < g_val.size(); ++i) g_theta[i] += g_val[i];
        if (cfg.learn_alpha) {
            for (std::size_t i = range.begin; i < range.end; ++i) {
                if (raw[i] > Real(0) && raw[i] < Real(1)) g_alpha[i] -= g_val[i] * g_cum[i];
            }
        }
        return lv;
    }
};

// Dispatches fn(0..n-1) over up to `workers` threads. Results must be written
// into per-slot storage by fn; exceptions are rethrown for the lowest failing
// slot so error reporting does not depend on thread scheduling.
template <typename Fn>
void parallel_for_slots(std::size_t n, int workers, Fn&& fn) {
    const int usable = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (usable == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(usable);
    for (int w = 0; w < usable; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// `steps` clipped-rate gradient updates on the task's adaptation set.
// Variant H touches only head coordinates.
template <typename Real, typename Model>
ParamSet<Real> adapt_to_task(const Model& model, const ParamSet<Real>& theta,
                             const LearningRateSet<Real>& lrs, const OCCTask<Real>& task,
                             int steps, Variant variant,
                             AdaptationTrace<Real>* trace_out = nullptr) {
    if (steps < 1) throw InputError("adapt_to_task: steps must be >= 1");
    MetaConfig cfg;
    cfg.inner_steps = steps;
    cfg.variant = variant;
    const std::vector<Real> eff = clip_lrs(lrs);
    detail::EpisodeRunner<Real, Model> runner(model, cfg, theta, eff, lrs.raw, false,
                                              trace_out != nullptr);
    runner.adapt_one_task(task, 0);
    if (trace_out) *trace_out = std::move(runner.trace);
    return std::move(runner.cur);
}

// Full episode bookkeeping for one task-sequence. Replay sampling draws from
// a stream derived from the sequence seed, so the result is a pure function
// of its arguments.
template <typename Real, typename Model>
std::pair<SequenceLoss, AdaptationTrace<Real>> sequence_loss(const Model& model,
                                                             const ParamSet<Real>& theta,
                                                             const LearningRateSet<Real>& lrs,
                                                             const TaskSequence<Real>& seq,
                                                             const MetaConfig& cfg) {
    const std::vector<Real> eff = clip_lrs(lrs);
    detail::EpisodeRunner<Real, Model> runner(model, cfg, theta, eff, lrs.raw, false, true);
    Rng replay_rng(mix_seed(seq.seed, seed_tags::replay));
    runner.run(seq, replay_rng);
    return {std::move(runner.loss), std::move(runner.trace)};
}

// First-order meta-gradients of the summed sequence losses with respect to
// theta and the raw learning rates, over a batch of sequences. Reduction
// order is fixed by slot index regardless of worker count.
template <typename Real, typename Model>
MetaGradients<Real> meta_gradient(const Model& model, const ParamSet<Real>& theta,
                                  const LearningRateSet<Real>& lrs,
                                  const std::vector<TaskSequence<Real>>& sequences,
                                  const MetaConfig& cfg, int workers = 1) {
    if (sequences.empty()) throw InputError("meta_gradient: empty sequence batch");
    const std::size_t P = theta.values.size();
    const std::vector<Real> eff = clip_lrs(lrs);

    struct Slot {
        SequenceLoss loss;
        std::vector<Real> g_theta, g_alpha;
    };
    std::vector<Slot> slots(sequences.size());
    detail::parallel_for_slots(sequences.size(), workers, [&](std::size_t i) {
        detail::EpisodeRunner<Real, Model> runner(model, cfg, theta, eff, lrs.raw, true, false);
        Rng replay_rng(mix_seed(sequences[i].seed, seed_tags::replay));
        runner.run(sequences[i], replay_rng);
        slots[i] = Slot{std::move(runner.loss), std::move(runner.g_theta),
                        std::move(runner.g_alpha)};
    });

    MetaGradients<Real> out;
    out.g_theta.assign(P, Real(0));
    out.g_alpha.assign(P, Real(0));
    for (auto& slot : slots) {
        out.l_meta += slot.loss.total;
        for (std::size_t i = 0; i < P; ++i) {
            out.g_theta[i] += slot.g_theta[i];
            out.g_alpha[i] += slot.g_alpha[i];
        }
        out.per_sequence.push_back(std::move(slot.loss));
    }
    return out;
}

// Meta-test protocol: adapt through the sequence exactly as in training and
// record, after each learned task, the balanced accuracy on every task seen
// so far.
template <typename Real, typename Model>
AccuracyMatrix evaluate_sequence(const Model& model, const ParamSet<Real>& theta,
                                 const LearningRateSet<Real>& lrs, const TaskSequence<Real>& seq,
                                 const MetaConfig& cfg) {
    validate_sequence(seq);
    const std::vector<Real> eff = clip_lrs(lrs);
    detail::EpisodeRunner<Real, Model> runner(model, cfg, theta, eff, lrs.raw, false, false);
    const std::size_t J = seq.length();
    AccuracyMatrix acc = AccuracyMatrix::empty(J);
    for (std::size_t k = 0; k < J; ++k) {
        runner.adapt_one_task(seq.tasks[k], static_cast<int>(k));
        for (std::size_t j = 0; j <= k; ++j) {
            const auto probs = model.forward(runner.cur, seq.tasks[j].val);
            acc.entry(k, j) = balanced_accuracy(probs, seq.tasks[j].val.labels);
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Meta-training
// ---------------------------------------------------------------------------

struct HistoryEntry {
    int iteration = 0;
    double l_meta = 0.0;
    double val_retained = 0.0;
};

template <typename Real>
struct MetaTrainResult {
    ParamSet<Real> best_theta;
    LearningRateSet<Real> best_lrs;
    double best_val_retained = 0.0;
    int best_iteration = 0;
    ParamSet<Real> final_theta;
    LearningRateSet<Real> final_lrs;
    std::vector<HistoryEntry> history;
    std::string rng_state;  // master stream state after training
};

// Outer loop of the meta-training procedure: sample a batch of task
// sequences, accumulate the first-order meta-gradients, take one plain
// gradient step on (theta, alpha), and periodically evaluate retained
// accuracy on fixed meta-validation sequences to select the best snapshot.
template <typename Real, typename Model>
MetaTrainResult<Real> meta_train(const Model& model, const Dataset<Real>& dataset,
                                 const MetaSplit& split, const MetaConfig& cfg, int workers = 1) {
    validate_meta_config(cfg);
    if (split.train_classes.size() < 2 * cfg.L)
        throw InputError("meta_train: need at least " + std::to_string(2 * cfg.L) +
                         " meta-training classes for L=" + std::to_string(cfg.L));
    if (split.val_classes.size() < 2 * cfg.L)
        throw InputError("meta_train: need at least " + std::to_string(2 * cfg.L) +
                         " meta-validation classes for L=" + std::to_string(cfg.L));
    const std::size_t need = cfg.K + cfg.M / 2;
    for (const auto* pool : {&split.train_classes, &split.val_classes})
        for (int id : *pool)
            if (dataset.class_size(id) < need)
                throw InputError("meta_train: class " + std::to_string(id) + " has " +
                                 std::to_string(dataset.class_size(id)) +
                                 " examples, needs " + std::to_string(need));

    Rng master(cfg.seed);
    MetaTrainResult<Real> result;
    ParamSet<Real> theta = model.init_params(master);
    LearningRateSet<Real> lrs =
        LearningRateSet<Real>::constant(theta.values.size(), cfg.alpha_init);

    // Fixed validation episodes so selection scores are comparable across
    // evaluations. Validation always adapts one-class (the CAD condition).
    std::vector<TaskSequence<Real>> val_seqs(static_cast<std::size_t>(cfg.val_sequences));
    for (auto& seq : val_seqs) {
        const std::uint64_t s = master.next_u64();
        Rng rng(s);
        seq = build_sequence(dataset, split.val_classes, cfg.L, cfg.K, cfg.M, rng,
                             AdaptSetKind::one_class, s);
    }

    const auto val_retained = [&](const ParamSet<Real>& th,
                                  const LearningRateSet<Real>& rates) {
        std::vector<double> per_seq(val_seqs.size());
        detail::parallel_for_slots(val_seqs.size(), workers, [&](std::size_t i) {
            per_seq[i] = retained_accuracy(evaluate_sequence(model, th, rates, val_seqs[i], cfg));
        });
        double sum = 0.0;
        for (double v : per_seq) sum += v;
        return sum / static_cast<double>(per_seq.size());
    };

    result.best_theta = theta;
    result.best_lrs = lrs;
    result.best_val_retained = -1.0;
    std::vector<std::uint64_t> ep_seeds(static_cast<std::size_t>(cfg.meta_batch));
    std::vector<TaskSequence<Real>> batch(ep_seeds.size());

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        for (auto& s : ep_seeds) s = master.next_u64();
        try {
            detail::parallel_for_slots(batch.size(), workers, [&](std::size_t i) {
                Rng rng(ep_seeds[i]);
                batch[i] = build_sequence(dataset, split.train_classes, cfg.L, cfg.K, cfg.M, rng,
                                          cfg.meta_adapt_kind, ep_seeds[i]);
            });
            const MetaGradients<Real> grads = meta_gradient(model, theta, lrs, batch, cfg, workers);
            const auto beta = static_cast<Real>(cfg.beta);
            for (std::size_t i = 0; i < theta.values.size(); ++i)
                theta.values[i] -= beta * grads.g_theta[i];
            if (cfg.learn_alpha && iter > cfg.warmup_iters)
                for (std::size_t i = 0; i < lrs.raw.size(); ++i)
                    lrs.raw[i] -= beta * grads.g_alpha[i];
            check_finite(theta.values, "meta-updated parameters");
            check_finite(lrs.raw, "meta-updated learning rates");

            if (iter % cfg.val_every == 0 || iter == cfg.iterations) {
                const double ret = val_retained(theta, lrs);
                result.history.push_back({iter, grads.l_meta, ret});
                if (ret > result.best_val_retained) {
                    result.best_val_retained = ret;
                    result.best_iteration = iter;
                    result.best_theta = theta;
                    result.best_lrs = lrs;
                }
            }
        } catch (const NumericError& e) {
            throw NumericError("meta_train: iteration " + std::to_string(iter) + ": " + e.what());
        }
    }
    result.final_theta = std::move(theta);
    result.final_lrs = std::move(lrs);
    result.rng_state = master.state_string();
    return result;
}

}  // namespace arcade
