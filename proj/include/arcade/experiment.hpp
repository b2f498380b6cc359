#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "arcade/checkpoint.hpp"
#include "arcade/learners.hpp"
#include "arcade/meta.hpp"
#include "arcade/metrics.hpp"
#include "arcade/net.hpp"
#include "arcade/plot.hpp"
#include "arcade/tasks.hpp"

namespace arcade {

// ---------------------------------------------------------------------------
// Experiment configuration (the CLI's --config file)
// ---------------------------------------------------------------------------

struct DatasetSpec {
    std::string kind = "synthetic";  // synthetic | file
    std::size_t n_classes = 40;
    std::size_t per_class = 64;
    double spread = 0.05;
    std::size_t n_features = 2;
    std::string path;  // file kind only
};

struct SplitSpec {
    std::string mode = "fractions";  // fractions | explicit
    double train_frac = 0.5;
    double val_frac = 0.2;
    double test_frac = 0.3;
    std::vector<int> train_classes, val_classes, test_classes;
};

struct EvalSpec {
    std::vector<std::size_t> lengths = {1, 2, 3, 4, 5};
    int n_sequences = 200;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string precision = "double";  // double | float
    DatasetSpec dataset;
    SplitSpec split;
    MlpSpec model{2, {32, 32}};
    MetaConfig meta;
    LearnerKind learner = LearnerKind::arcade_m;
    EvalSpec eval;
    int workers = 1;
    bool deterministic = false;
    std::string out_dir = "out";
};

namespace seed_tags2 {
constexpr std::uint64_t dataset = 0xda7a;
constexpr std::uint64_t split = 0x5917;
constexpr std::uint64_t gradcheck = 0x96ad;
}  // namespace seed_tags2

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& context) {
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw InputError("config: unknown key '" + key + "' in " + context);
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& cfg) {
    if (cfg.precision != "double" && cfg.precision != "float")
        throw InputError("config: precision must be 'double' or 'float'");
    if (cfg.dataset.kind == "synthetic") {
        if (cfg.dataset.n_classes < 2) throw InputError("config: dataset.n_classes must be >= 2");
        if (cfg.dataset.per_class == 0) throw InputError("config: dataset.per_class must be >= 1");
        if (!(cfg.dataset.spread > 0)) throw InputError("config: dataset.spread must be > 0");
        if (cfg.dataset.n_features < 2)
            throw InputError("config: dataset.n_features must be >= 2");
    } else if (cfg.dataset.kind == "file") {
        if (cfg.dataset.path.empty()) throw InputError("config: dataset.path required");
    } else {
        throw InputError("config: dataset.kind must be 'synthetic' or 'file'");
    }
    if (cfg.split.mode != "fractions" && cfg.split.mode != "explicit")
        throw InputError("config: split.mode must be 'fractions' or 'explicit'");
    validate_meta_config(cfg.meta);
    if (cfg.eval.lengths.empty()) throw InputError("config: eval.lengths must not be empty");
    for (std::size_t l : cfg.eval.lengths)
        if (l == 0) throw InputError("config: eval lengths must be >= 1");
    if (cfg.eval.n_sequences < 1) throw InputError("config: eval.n_sequences must be >= 1");
    if (cfg.workers < 1) throw InputError("config: workers must be >= 1");
    if (cfg.out_dir.empty()) throw InputError("config: out_dir must not be empty");
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["precision"] = cfg.precision;
    j["dataset"] = {{"kind", cfg.dataset.kind},       {"n_classes", cfg.dataset.n_classes},
                    {"per_class", cfg.dataset.per_class}, {"spread", cfg.dataset.spread},
                    {"n_features", cfg.dataset.n_features}, {"path", cfg.dataset.path}};
    j["split"] = {{"mode", cfg.split.mode},
                  {"train_frac", cfg.split.train_frac},
                  {"val_frac", cfg.split.val_frac},
                  {"test_frac", cfg.split.test_frac},
                  {"train_classes", cfg.split.train_classes},
                  {"val_classes", cfg.split.val_classes},
                  {"test_classes", cfg.split.test_classes}};
    j["model"] = {{"input_dim", cfg.model.input_dim}, {"hidden", cfg.model.hidden}};
    j["meta"] = {{"beta", cfg.meta.beta},
                 {"inner_steps", cfg.meta.inner_steps},
                 {"K", cfg.meta.K},
                 {"M", cfg.meta.M},
                 {"L", cfg.meta.L},
                 {"meta_batch", cfg.meta.meta_batch},
                 {"warmup_iters", cfg.meta.warmup_iters},
                 {"replay_term", cfg.meta.replay_term},
                 {"iterations", cfg.meta.iterations},
                 {"val_every", cfg.meta.val_every},
                 {"val_sequences", cfg.meta.val_sequences},
                 {"alpha_init", cfg.meta.alpha_init}};
    j["learner"] = to_string(cfg.learner);
    j["eval"] = {{"lengths", cfg.eval.lengths}, {"n_sequences", cfg.eval.n_sequences}};
    j["workers"] = cfg.workers;
    j["deterministic"] = cfg.deterministic;
    j["out_dir"] = cfg.out_dir;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    detail::check_keys(j,
                       {"seed", "precision", "dataset", "split", "model", "meta", "learner",
                        "eval", "workers", "deterministic", "out_dir"},
                       "top level");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("precision")) cfg.precision = j.at("precision").get<std::string>();
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::check_keys(d, {"kind", "n_classes", "per_class", "spread", "n_features", "path"},
                           "dataset");
        if (d.contains("kind")) cfg.dataset.kind = d.at("kind").get<std::string>();
        if (d.contains("n_classes")) cfg.dataset.n_classes = d.at("n_classes").get<std::size_t>();
        if (d.contains("per_class")) cfg.dataset.per_class = d.at("per_class").get<std::size_t>();
        if (d.contains("spread")) cfg.dataset.spread = d.at("spread").get<double>();
        if (d.contains("n_features"))
            cfg.dataset.n_features = d.at("n_features").get<std::size_t>();
        if (d.contains("path")) cfg.dataset.path = d.at("path").get<std::string>();
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        detail::check_keys(s,
                           {"mode", "train_frac", "val_frac", "test_frac", "train_classes",
                            "val_classes", "test_classes"},
                           "split");
        if (s.contains("mode")) cfg.split.mode = s.at("mode").get<std::string>();
        if (s.contains("train_frac")) cfg.split.train_frac = s.at("train_frac").get<double>();
        if (s.contains("val_frac")) cfg.split.val_frac = s.at("val_frac").get<double>();
        if (s.contains("test_frac")) cfg.split.test_frac = s.at("test_frac").get<double>();
        if (s.contains("train_classes"))
            cfg.split.train_classes = s.at("train_classes").get<std::vector<int>>();
        if (s.contains("val_classes"))
            cfg.split.val_classes = s.at("val_classes").get<std::vector<int>>();
        if (s.contains("test_classes"))
            cfg.split.test_classes = s.at("test_classes").get<std::vector<int>>();
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::check_keys(m, {"input_dim", "hidden"}, "model");
        if (m.contains("input_dim")) cfg.model.input_dim = m.at("input_dim").get<std::size_t>();
        if (m.contains("hidden"))
            cfg.model.hidden = m.at("hidden").get<std::vector<std::size_t>>();
    }
    if (j.contains("meta")) {
        const auto& m = j.at("meta");
        detail::check_keys(m,
                           {"beta", "inner_steps", "K", "M", "L", "meta_batch", "warmup_iters",
                            "replay_term", "iterations", "val_every", "val_sequences",
                            "alpha_init"},
                           "meta");
        if (m.contains("beta")) cfg.meta.beta = m.at("beta").get<double>();
        if (m.contains("inner_steps")) cfg.meta.inner_steps = m.at("inner_steps").get<int>();
        if (m.contains("K")) cfg.meta.K = m.at("K").get<std::size_t>();
        if (m.contains("M")) cfg.meta.M = m.at("M").get<std::size_t>();
        if (m.contains("L")) cfg.meta.L = m.at("L").get<std::size_t>();
        if (m.contains("meta_batch")) cfg.meta.meta_batch = m.at("meta_batch").get<int>();
        if (m.contains("warmup_iters")) cfg.meta.warmup_iters = m.at("warmup_iters").get<int>();
        if (m.contains("replay_term")) cfg.meta.replay_term = m.at("replay_term").get<bool>();
        if (m.contains("iterations")) cfg.meta.iterations = m.at("iterations").get<int>();
        if (m.contains("val_every")) cfg.meta.val_every = m.at("val_every").get<int>();
        if (m.contains("val_sequences"))
            cfg.meta.val_sequences = m.at("val_sequences").get<int>();
        if (m.contains("alpha_init")) cfg.meta.alpha_init = m.at("alpha_init").get<double>();
    }
    if (j.contains("learner")) cfg.learner = parse_learner(j.at("learner").get<std::string>());
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::check_keys(e, {"lengths", "n_sequences"}, "eval");
        if (e.contains("lengths"))
            cfg.eval.lengths = e.at("lengths").get<std::vector<std::size_t>>();
        if (e.contains("n_sequences")) cfg.eval.n_sequences = e.at("n_sequences").get<int>();
    }
    if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
    if (j.contains("deterministic")) cfg.deterministic = j.at("deterministic").get<bool>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    cfg.meta.seed = cfg.seed;
    validate_config(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("load_config: invalid JSON in " + path + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("load_config: bad value in " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Dataset / split assembly
// ---------------------------------------------------------------------------

template <typename Real>
Dataset<Real> build_dataset(const ExperimentConfig& cfg) {
    Dataset<Real> ds;
    if (cfg.dataset.kind == "synthetic") {
        Rng rng(mix_seed(cfg.seed, seed_tags2::dataset));
        ds = synth_generate<Real>(cfg.dataset.n_classes, cfg.dataset.per_class,
                                  cfg.dataset.spread, cfg.dataset.n_features, rng);
    } else {
        ds = load_dataset<Real>(cfg.dataset.path);
    }
    if (ds.width != cfg.model.input_dim)
        throw InputError("dataset feature width " + std::to_string(ds.width) +
                         " does not match model.input_dim " +
                         std::to_string(cfg.model.input_dim));
    return ds;
}

template <typename Real>
MetaSplit build_split(const ExperimentConfig& cfg, const Dataset<Real>& ds) {
    if (cfg.split.mode == "fractions") {
        Rng rng(mix_seed(cfg.seed, seed_tags2::split));
        return make_meta_split(ds, cfg.split.train_frac, cfg.split.val_frac,
                               cfg.split.test_frac, rng);
    }
    return make_meta_split(ds, cfg.split.train_classes, cfg.split.val_classes,
                           cfg.split.test_classes);
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

inline void write_history_csv(const std::string& path, const std::vector<HistoryEntry>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_history_csv: cannot open " + path);
    out << "iteration,l_meta,val_retained\n";
    for (const auto& h : history)
        out << h.iteration << ',' << format_real(h.l_meta) << ',' << format_real(h.val_retained)
            << '\n';
}

// ---------------------------------------------------------------------------
// meta-train driver
// ---------------------------------------------------------------------------

struct MetaTrainArtifacts {
    std::string checkpoint_path;
    std::string history_path;
    int best_iteration = 0;
    double best_val_retained = 0.0;
};

template <typename Real>
MetaTrainArtifacts run_meta_train_impl(const ExperimentConfig& cfg) {
    if (cfg.learner == LearnerKind::scratch)
        throw InputError("meta-train: the scratch learner has no meta-training phase");
    const auto dataset = build_dataset<Real>(cfg);
    const MetaSplit split = build_split(cfg, dataset);
    const MlpModel<Real> model(cfg.model);
    const MetaConfig mc = apply_learner(cfg.meta, cfg.learner);
    const int workers = cfg.deterministic ? 1 : cfg.workers;
    const auto result = meta_train(model, dataset, split, mc, workers);

    std::filesystem::create_directories(cfg.out_dir);
    Checkpoint<Real> ckpt;
    ckpt.learner = cfg.learner;
    ckpt.spec = cfg.model;
    ckpt.theta = result.best_theta;
    if (learner_stores_alpha(cfg.learner)) ckpt.alpha = result.best_lrs;
    ckpt.meta_config = mc;
    ckpt.rng_state = result.rng_state;
    ckpt.best_iteration = result.best_iteration;
    ckpt.best_val_retained = result.best_val_retained;

    MetaTrainArtifacts artifacts;
    artifacts.checkpoint_path = (std::filesystem::path(cfg.out_dir) / "checkpoint.json").string();
    artifacts.history_path = (std::filesystem::path(cfg.out_dir) / "history.csv").string();
    artifacts.best_iteration = result.best_iteration;
    artifacts.best_val_retained = result.best_val_retained;
    save_checkpoint(ckpt, artifacts.checkpoint_path);
    write_history_csv(artifacts.history_path, result.history);
    return artifacts;
}

inline MetaTrainArtifacts run_meta_train(const ExperimentConfig& cfg) {
    if (cfg.precision == "float") return run_meta_train_impl<float>(cfg);
    return run_meta_train_impl<double>(cfg);
}

// ---------------------------------------------------------------------------
// meta-test driver
// ---------------------------------------------------------------------------

struct MetaTestArtifacts {
    std::string retained_path;
    std::string task1_curve_path;
    std::vector<RetainedCsvRow> rows;
};

template <typename Real>
MetaTestArtifacts run_meta_test_impl(const ExperimentConfig& cfg,
                                     const std::string& checkpoint_path) {
    const auto dataset = build_dataset<Real>(cfg);
    const MetaSplit split = build_split(cfg, dataset);
    const MlpModel<Real> model(cfg.model);
    const int workers = cfg.deterministic ? 1 : cfg.workers;

    // The adaptation protocol (steps, variant, rates, K, M) comes from the
    // checkpoint so evaluation matches how the model was meta-trained;
    // lengths and sequence counts come from the current config.
    ParamSet<Real> theta;
    LearningRateSet<Real> lrs;
    MetaConfig protocol = apply_learner(cfg.meta, cfg.learner);
    if (cfg.learner != LearnerKind::scratch) {
        const auto ckpt = load_checkpoint<Real>(checkpoint_path);
        if (!(ckpt.spec == cfg.model))
            throw CheckpointError("meta-test: checkpoint architecture does not match config");
        if (ckpt.learner != cfg.learner)
            throw CheckpointError("meta-test: checkpoint was trained by '" +
                                  to_string(ckpt.learner) + "', config requests '" +
                                  to_string(cfg.learner) + "'");
        theta = ckpt.theta;
        protocol = ckpt.meta_config;
        lrs = ckpt.alpha ? *ckpt.alpha
                         : LearningRateSet<Real>::constant(theta.values.size(),
                                                           protocol.alpha_init);
    }

    const std::size_t max_len =
        *std::max_element(cfg.eval.lengths.begin(), cfg.eval.lengths.end());
    if (split.test_classes.size() < 2 * max_len)
        throw InputError("meta-test: need at least " + std::to_string(2 * max_len) +
                         " test classes for length " + std::to_string(max_len));

    MetaTestArtifacts artifacts;
    std::vector<AccuracyMatrix> longest;
    for (const std::size_t len : cfg.eval.lengths) {
        std::vector<AccuracyMatrix> matrices(static_cast<std::size_t>(cfg.eval.n_sequences));
        detail::parallel_for_slots(matrices.size(), workers, [&](std::size_t i) {
            const std::uint64_t s = mix_seed(cfg.seed, seed_tags::test_eval, len, i);
            Rng rng(s);
            const auto seq = build_sequence(dataset, split.test_classes, len, protocol.K,
                                            protocol.M, rng, AdaptSetKind::one_class, s);
            matrices[i] = cfg.learner == LearnerKind::scratch
                              ? scratch_finetune(model, seq, protocol)
                              : evaluate_sequence(model, theta, lrs, seq, protocol);
        });
        const RunReport report = aggregate(matrices);
        artifacts.rows.push_back({len, report.mean, report.stddev, report.count});
        if (len == max_len) longest = std::move(matrices);
    }

    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    artifacts.retained_path = (dir / "retained.csv").string();
    artifacts.task1_curve_path = (dir / "task1_curve.csv").string();
    write_retained_csv(artifacts.retained_path, artifacts.rows);
    const RunReport longest_report = aggregate(longest);
    write_task1_curve_csv(artifacts.task1_curve_path, longest_report);

    PlotSpec retained_plot;
    retained_plot.title = "Retained accuracy vs sequence length (" + to_string(cfg.learner) + ")";
    retained_plot.x_label = "sequence length";
    retained_plot.y_label = "retained accuracy";
    PlotSeries series;
    series.label = to_string(cfg.learner);
    for (const auto& r : artifacts.rows) {
        series.x.push_back(static_cast<double>(r.seq_len));
        series.y.push_back(r.mean);
        series.band.push_back(r.stddev);
    }
    retained_plot.series.push_back(series);
    write_svg_plot((dir / "retained.svg").string(), retained_plot);

    PlotSpec curve_plot;
    curve_plot.title = "Accuracy on task 1 while learning " + std::to_string(max_len) + " tasks";
    curve_plot.x_label = "tasks learned";
    curve_plot.y_label = "accuracy on task 1";
    PlotSeries cs;
    cs.label = to_string(cfg.learner);
    cs.color = "#d62728";
    for (std::size_t k = 0; k < longest_report.task1_curve.size(); ++k) {
        cs.x.push_back(static_cast<double>(k + 1));
        cs.y.push_back(longest_report.task1_curve[k]);
        cs.band.push_back(longest_report.task1_curve_std[k]);
    }
    curve_plot.series.push_back(cs);
    write_svg_plot((dir / "task1_curve.svg").string(), curve_plot);
    return artifacts;
}

inline MetaTestArtifacts run_meta_test(const ExperimentConfig& cfg,
                                       const std::string& checkpoint_path) {
    if (cfg.precision == "float") return run_meta_test_impl<float>(cfg, checkpoint_path);
    return run_meta_test_impl<double>(cfg, checkpoint_path);
}

// ---------------------------------------------------------------------------
// gradcheck driver
// ---------------------------------------------------------------------------

struct GradcheckRow {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct GradcheckResult {
    std::vector<GradcheckRow> rows;
    bool all_pass = true;
};

namespace detail {

// Constant-gradient diagnostic model: loss(theta, batch) is the batch mean of
// <row, theta>, so adaptation gradients are parameter-independent and the
// first-order meta-gradient formulas are exact.
class ConstantGradientModel {
public:
    explicit ConstantGradientModel(LayerMap map) : map_(std::move(map)) {}

    double loss(const ParamSet<double>& p, const Batch<double>& batch) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.n; ++i)
            for (std::size_t k = 0; k < batch.width; ++k)
                acc += batch.inputs[i * batch.width + k] * p.values[k];
        return acc / static_cast<double>(batch.n);
    }

    double loss_grad(const ParamSet<double>& p, const Batch<double>& batch,
                     std::vector<double>& grad) const {
        grad.assign(p.values.size(), 0.0);
        for (std::size_t i = 0; i < batch.n; ++i)
            for (std::size_t k = 0; k < batch.width; ++k)
                grad[k] += batch.inputs[i * batch.width + k] / static_cast<double>(batch.n);
        return loss(p, batch);
    }

private:
    LayerMap map_;
};

// Fixture with every hidden pre-activation away from the ReLU kink so the
// central differences stay one-sided.
struct GradcheckFixture {
    MlpSpec spec;
    ParamSet<double> params;
    Batch<double> batch;
};

inline GradcheckFixture make_gradcheck_fixture(std::uint64_t seed) {
    static const std::vector<MlpSpec> archs = {{2, {6}}, {3, {8, 4}}, {2, {12, 6}}, {4, {5}}};
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(mix_seed(seed, seed_tags2::gradcheck, attempt));
        const MlpSpec spec = archs[rng.below(archs.size())];
        const MlpModel<double> model(spec);
        ParamSet<double> params = model.init_params(rng);
        for (const auto& s : params.layer_map.segments) {
            if (s.kind != LayerKind::affine) continue;
            for (std::size_t r = 0; r < s.rows; ++r)
                params.values[s.offset + s.rows * s.cols + r] = rng.uniform(-0.3, 0.3);
        }
        Batch<double> batch;
        batch.n = 4 + rng.below(8);
        batch.width = spec.input_dim;
        batch.inputs.resize(batch.n * batch.width);
        for (auto& v : batch.inputs) v = rng.uniform(-1.0, 1.0);
        batch.labels.resize(batch.n);
        for (auto& y : batch.labels) y = rng.below(2) == 0 ? 0 : 1;

        // reject fixtures with any pre-activation near the kink
        bool clean = true;
        std::vector<double> x;
        const auto affine = params.layer_map.affine_segments();
        for (std::size_t i = 0; i < batch.n && clean; ++i) {
            x.assign(batch.row(i), batch.row(i) + batch.width);
            for (std::size_t l = 0; l + 1 < affine.size() && clean; ++l) {
                const auto& s = affine[l];
                std::vector<double> y(s.rows);
                for (std::size_t r = 0; r < s.rows; ++r) {
                    double acc = params.values[s.offset + s.rows * s.cols + r];
                    for (std::size_t c = 0; c < s.cols; ++c)
                        acc += params.values[s.offset + r * s.cols + c] * x[c];
                    y[r] = acc;
                    if (std::abs(acc) <= 1e-3) clean = false;
                }
                for (auto& v : y) v = std::max(v, 0.0);
                x = y;
            }
        }
        if (clean) return {spec, std::move(params), std::move(batch)};
    }
}

}  // namespace detail

// Backpropagation and first-order meta-gradient checks against central
// finite differences; `inject_fault` doubles one analytic coordinate to
// demonstrate that a broken gradient is caught.
inline GradcheckResult run_gradcheck(const ExperimentConfig& cfg, bool inject_fault = false) {
    constexpr double kTol = 1e-6;
    GradcheckResult result;

    for (int f = 0; f < 10; ++f) {
        const auto fx = detail::make_gradcheck_fixture(mix_seed(cfg.seed, 0x6e7, f));
        const MlpModel<double> model(fx.spec);
        GradReport report;
        if (inject_fault) {
            std::vector<double> g;
            model.loss_grad(fx.params, fx.batch, g);
            std::size_t biggest = 0;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (std::abs(g[i]) > std::abs(g[biggest])) biggest = i;
            g[biggest] *= 2.0;
            report = gradcheck(model, fx.params, fx.batch, 1e-5, &g);
        } else {
            report = gradcheck(model, fx.params, fx.batch, 1e-5);
        }
        result.rows.push_back({"backward fixture " + std::to_string(f), report.max_rel_error,
                               kTol, report.max_rel_error < kTol});
    }

    // meta-gradient checks on the constant-gradient model
    const std::size_t P = 6;
    LayerMap map;
    map.segments.push_back({0, LayerKind::affine, 1, 2, 0, 3});
    map.segments.push_back({1, LayerKind::affine, 1, 2, 3, 3});
    map.total_params = P;
    const detail::ConstantGradientModel linear(map);
    for (const std::size_t J : {1u, 2u, 3u}) {
        for (const int steps : {1, 3}) {
            for (const bool replay : {false, true}) {
                MetaConfig mc;
                mc.inner_steps = steps;
                mc.replay_term = replay;
                Rng rng(mix_seed(cfg.seed, 0x3e7a, J, steps * 2 + (replay ? 1 : 0)));
                ParamSet<double> theta;
                theta.layer_map = map;
                theta.head_range = map.head_range();
                theta.values.resize(P);
                for (auto& v : theta.values) v = rng.uniform(-1.0, 1.0);
                LearningRateSet<double> lrs;
                for (std::size_t i = 0; i < P; ++i) lrs.raw.push_back(rng.uniform(0.1, 0.9));

                TaskSequence<double> seq;
                seq.seed = rng.next_u64();
                for (std::size_t j = 0; j < J; ++j) {
                    OCCTask<double> task;
                    task.normal_class = static_cast<int>(2 * j);
                    task.member_classes = {static_cast<int>(2 * j), static_cast<int>(2 * j + 1)};
                    task.train.n = 3;
                    task.train.width = P;
                    task.train.inputs.resize(3 * P);
                    for (auto& v : task.train.inputs) v = rng.uniform(-1.0, 1.0);
                    task.train.labels.assign(3, 1);
                    task.val.n = 4;
                    task.val.width = P;
                    task.val.inputs.resize(4 * P);
                    for (auto& v : task.val.inputs) v = rng.uniform(-1.0, 1.0);
                    task.val.labels = {1, 1, 0, 0};
                    seq.tasks.push_back(std::move(task));
                }

                auto grads = meta_gradient(linear, theta, lrs, {seq}, mc);
                if (inject_fault && !grads.g_theta.empty()) grads.g_theta[0] *= 2.0;

                const auto theta_report = finite_difference_report<double>(
                    grads.g_theta, theta.values,
                    [&](const std::vector<double>& values) {
                        ParamSet<double> t = theta;
                        t.values = values;
                        return sequence_loss(linear, t, lrs, seq, mc).first.total;
                    },
                    1e-5);
                const auto alpha_report = finite_difference_report<double>(
                    grads.g_alpha, lrs.raw,
                    [&](const std::vector<double>& raw) {
                        LearningRateSet<double> probe{raw};
                        return sequence_loss(linear, theta, probe, seq, mc).first.total;
                    },
                    1e-5);
                const double worst = std::max(theta_report.max_rel_error,
                                              alpha_report.max_rel_error);
                result.rows.push_back({"meta J=" + std::to_string(J) +
                                           " steps=" + std::to_string(steps) +
                                           (replay ? " replay=on" : " replay=off"),
                                       worst, kTol, worst < kTol});
            }
        }
    }
    for (const auto& row : result.rows) result.all_pass = result.all_pass && row.pass;
    return result;
}

// ---------------------------------------------------------------------------
// analyze-lrs driver
// ---------------------------------------------------------------------------

inline std::string checkpoint_precision(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint_precision: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
        return j.at("precision").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint_precision: malformed checkpoint: " +
                              std::string(e.what()));
    }
}

inline LrAnalysis run_analyze_lrs(const std::string& checkpoint_path,
                                  const std::string& out_csv) {
    LrAnalysis analysis;
    if (checkpoint_precision(checkpoint_path) == "float") {
        const auto ckpt = load_checkpoint<float>(checkpoint_path);
        if (!ckpt.alpha)
            throw InputError("analyze-lrs: checkpoint stores no learning rates (learner " +
                             to_string(ckpt.learner) + ")");
        analysis = analyze_lrs(ckpt.alpha->raw, ckpt.theta.layer_map);
    } else {
        const auto ckpt = load_checkpoint<double>(checkpoint_path);
        if (!ckpt.alpha)
            throw InputError("analyze-lrs: checkpoint stores no learning rates (learner " +
                             to_string(ckpt.learner) + ")");
        analysis = analyze_lrs(ckpt.alpha->raw, ckpt.theta.layer_map);
    }
    if (!out_csv.empty()) {
        const auto parent = std::filesystem::path(out_csv).parent_path();
        if (!parent.empty()) std::filesystem::create_directories(parent);
        write_lr_analysis_csv(out_csv, analysis);
    }
    return analysis;
}

// ---------------------------------------------------------------------------
// data tooling
// ---------------------------------------------------------------------------

struct DataSummary {
    std::size_t n_classes = 0;
    std::size_t n_examples = 0;
    std::size_t width = 0;
    std::size_t min_class_size = 0;
};

template <typename Real>
DataSummary summarize(const Dataset<Real>& ds) {
    DataSummary s;
    s.n_classes = ds.class_count();
    s.width = ds.width;
    s.min_class_size = std::numeric_limits<std::size_t>::max();
    for (const auto& [id, rows] : ds.classes) {
        const std::size_t n = rows.size() / ds.width;
        s.n_examples += n;
        s.min_class_size = std::min(s.min_class_size, n);
    }
    return s;
}

inline DataSummary run_gen_synth(std::size_t n_classes, std::size_t per_class, double spread,
                                 std::size_t n_features, std::uint64_t seed,
                                 const std::string& out_path) {
    if (!(spread > 0)) throw InputError("gen-synth: spread must be > 0");
    Rng rng(mix_seed(seed, seed_tags2::dataset));
    const auto ds = synth_generate<double>(n_classes, per_class, spread, n_features, rng);
    save_dataset(ds, out_path);
    return summarize(ds);
}

inline DataSummary run_validate_data(const std::string& path) {
    return summarize(load_dataset<double>(path));
}

}  // namespace arcade
