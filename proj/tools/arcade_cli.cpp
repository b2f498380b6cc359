// arcade: experiment driver for continual one-class classification.
//
// Subcommands: gen-synth, validate-data, meta-train, meta-test, gradcheck,
// analyze-lrs, print-config. Exit codes: 0 success, 1 check failure,
// 2 config/data error, 3 checkpoint mismatch.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "arcade/experiment.hpp"

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> learner;
    std::optional<int> workers;
    bool deterministic = false;
    std::optional<std::string> out_dir;
};

arcade::ExperimentConfig load_with_overrides(const std::string& config_path,
                                             const Overrides& ov) {
    arcade::ExperimentConfig cfg =
        config_path.empty() ? arcade::ExperimentConfig{} : arcade::load_config(config_path);
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.learner) cfg.learner = arcade::parse_learner(*ov.learner);
    if (ov.workers) cfg.workers = *ov.workers;
    if (ov.deterministic) cfg.deterministic = true;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    cfg.meta.seed = cfg.seed;
    arcade::validate_config(cfg);
    return cfg;
}

void add_override_flags(CLI::App* sub, std::string& config_path, Overrides& ov,
                        bool config_required = true) {
    auto* opt = sub->add_option("--config", config_path, "experiment config file (JSON)");
    if (config_required) opt->required();
    sub->add_option("--seed", ov.seed, "override the experiment seed");
    sub->add_option("--learner", ov.learner,
                    "override the learner (arcade-m, arcade-h, seqfomaml, ocmaml, scratch)");
    sub->add_option("--workers", ov.workers, "worker threads for sequence batches");
    sub->add_flag("--deterministic", ov.deterministic,
                  "force sequential processing (strict-deterministic mode)");
    sub->add_option("--out", ov.out_dir, "override the output directory");
}

void print_summary(const arcade::DataSummary& s) {
    std::cout << "classes=" << s.n_classes << " examples=" << s.n_examples
              << " n_features=" << s.width << " min_class_size=" << s.min_class_size << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ARCADe: meta-learned initialization and per-parameter learning rates "
                 "for continual anomaly detection"};
    app.require_subcommand(1);

    std::string config_path, data_path, checkpoint_path;
    Overrides ov;

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic circle-of-Gaussians dataset");
    std::size_t gen_classes = 40, gen_per_class = 64, gen_features = 2;
    double gen_spread = 0.05;
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_option("--classes", gen_classes, "number of classes")->capture_default_str();
    gen->add_option("--per-class", gen_per_class, "examples per class")->capture_default_str();
    gen->add_option("--spread", gen_spread, "Gaussian standard deviation")->capture_default_str();
    gen->add_option("--features", gen_features, "feature width")->capture_default_str();
    gen->add_option("--seed", gen_seed, "generation seed")->capture_default_str();
    gen->add_option("--out", gen_out, "output dataset file")->required();

    // validate-data
    auto* validate = app.add_subcommand("validate-data", "parse and validate a dataset file");
    validate->add_option("--in", data_path, "dataset file")->required();

    // meta-train
    auto* train = app.add_subcommand("meta-train", "run meta-training and write a checkpoint");
    add_override_flags(train, config_path, ov);

    // meta-test
    auto* test = app.add_subcommand("meta-test", "evaluate a checkpoint on held-out sequences");
    add_override_flags(test, config_path, ov);
    test->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate");

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck",
                                    "finite-difference checks of backward and meta-gradients");
    add_override_flags(grad, config_path, ov, /*config_required=*/false);
    bool inject_fault = false;
    grad->add_flag("--inject-fault", inject_fault)->group("");  // test hook, hidden

    // analyze-lrs
    auto* analyze = app.add_subcommand("analyze-lrs",
                                       "layer-wise activity of meta-learned learning rates");
    analyze->add_option("--checkpoint", checkpoint_path, "checkpoint to analyze")->required();
    std::string analyze_out = "out";
    analyze->add_option("--out", analyze_out, "output directory")->capture_default_str();

    // print-config
    app.add_subcommand("print-config", "print the default experiment config as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            const auto summary = arcade::run_gen_synth(gen_classes, gen_per_class, gen_spread,
                                                       gen_features, gen_seed, gen_out);
            std::cout << "wrote " << gen_out << ": ";
            print_summary(summary);
        } else if (validate->parsed()) {
            const auto summary = arcade::run_validate_data(data_path);
            std::cout << "ok: ";
            print_summary(summary);
        } else if (train->parsed()) {
            const auto cfg = load_with_overrides(config_path, ov);
            const auto artifacts = arcade::run_meta_train(cfg);
            std::cout << "checkpoint: " << artifacts.checkpoint_path << "\n"
                      << "history:    " << artifacts.history_path << "\n"
                      << "best iteration " << artifacts.best_iteration << ", val retained "
                      << artifacts.best_val_retained << "\n";
        } else if (test->parsed()) {
            const auto cfg = load_with_overrides(config_path, ov);
            if (checkpoint_path.empty() && cfg.learner != arcade::LearnerKind::scratch)
                throw arcade::InputError("meta-test: --checkpoint is required for learner " +
                                         arcade::to_string(cfg.learner));
            const auto artifacts = arcade::run_meta_test(cfg, checkpoint_path);
            for (const auto& row : artifacts.rows)
                std::cout << "J=" << row.seq_len << " retained " << row.mean << " +- "
                          << row.stddev << " (n=" << row.n << ")\n";
            std::cout << "wrote " << artifacts.retained_path << ", "
                      << artifacts.task1_curve_path << "\n";
        } else if (grad->parsed()) {
            const auto cfg = load_with_overrides(config_path, ov);
            const auto result = arcade::run_gradcheck(cfg, inject_fault);
            for (const auto& row : result.rows)
                std::cout << (row.pass ? "PASS " : "FAIL ") << row.name
                          << " max_rel_error=" << row.max_rel_error << " tol=" << row.tolerance
                          << "\n";
            if (!result.all_pass) {
                std::cerr << "gradcheck failed\n";
                return 1;
            }
        } else if (analyze->parsed()) {
            const std::string csv =
                (std::filesystem::path(analyze_out) / "lr_analysis.csv").string();
            const auto analysis = arcade::run_analyze_lrs(checkpoint_path, csv);
            std::size_t active = 0, total = 0;
            for (const auto& l : analysis.layers) {
                std::cout << "layer " << l.layer << ": fraction_active=" << l.fraction_active
                          << " mean_active=" << l.mean_active << "\n";
                active += l.active_count;
                total += l.param_count;
            }
            std::cout << "overall active fraction: "
                      << static_cast<double>(active) / static_cast<double>(total) << "\n"
                      << "wrote " << csv << "\n";
        } else {  // print-config
            std::cout << arcade::config_to_json(arcade::ExperimentConfig{}).dump(2) << "\n";
        }
    } catch (const arcade::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const arcade::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
