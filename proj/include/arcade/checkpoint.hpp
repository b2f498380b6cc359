#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "arcade/errors.hpp"
#include "arcade/learners.hpp"
#include "arcade/meta.hpp"
#include "arcade/net.hpp"

namespace arcade {

constexpr int kCheckpointVersion = 1;

template <typename Real>
constexpr const char* precision_name() {
    if constexpr (std::is_same_v<Real, float>) return "float";
    else return "double";
}

inline nlohmann::json layer_map_to_json(const LayerMap& map) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : map.segments) {
        arr.push_back({{"id", s.id},
                       {"kind", s.kind == LayerKind::affine ? "affine" : "activation"},
                       {"rows", s.rows},
                       {"cols", s.cols},
                       {"offset", s.offset},
                       {"length", s.length}});
    }
    return arr;
}

inline LayerMap layer_map_from_json(const nlohmann::json& arr) {
    LayerMap map;
    for (const auto& e : arr) {
        LayerSegment s;
        s.id = e.at("id").get<int>();
        const std::string kind = e.at("kind").get<std::string>();
        if (kind == "affine") s.kind = LayerKind::affine;
        else if (kind == "activation") s.kind = LayerKind::activation;
        else throw CheckpointError("unknown layer kind '" + kind + "'");
        s.rows = e.at("rows").get<std::size_t>();
        s.cols = e.at("cols").get<std::size_t>();
        s.offset = e.at("offset").get<std::size_t>();
        s.length = e.at("length").get<std::size_t>();
        map.segments.push_back(s);
        map.total_params = s.offset + s.length;
    }
    return map;
}

inline nlohmann::json meta_config_to_json(const MetaConfig& cfg) {
    return {{"beta", cfg.beta},
            {"inner_steps", cfg.inner_steps},
            {"K", cfg.K},
            {"M", cfg.M},
            {"L", cfg.L},
            {"meta_batch", cfg.meta_batch},
            {"warmup_iters", cfg.warmup_iters},
            {"variant", cfg.variant == Variant::M ? "M" : "H"},
            {"replay_term", cfg.replay_term},
            {"iterations", cfg.iterations},
            {"val_every", cfg.val_every},
            {"val_sequences", cfg.val_sequences},
            {"seed", cfg.seed},
            {"learn_alpha", cfg.learn_alpha},
            {"alpha_init", cfg.alpha_init},
            {"immediate_terms", cfg.immediate_terms},
            {"final_terms", cfg.final_terms},
            {"meta_adapt_kind",
             cfg.meta_adapt_kind == AdaptSetKind::one_class ? "one_class" : "balanced"}};
}

inline MetaConfig meta_config_from_json(const nlohmann::json& j) {
    MetaConfig cfg;
    cfg.beta = j.at("beta").get<double>();
    cfg.inner_steps = j.at("inner_steps").get<int>();
    cfg.K = j.at("K").get<std::size_t>();
    cfg.M = j.at("M").get<std::size_t>();
    cfg.L = j.at("L").get<std::size_t>();
    cfg.meta_batch = j.at("meta_batch").get<int>();
    cfg.warmup_iters = j.at("warmup_iters").get<int>();
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "M") cfg.variant = Variant::M;
    else if (variant == "H") cfg.variant = Variant::H;
    else throw InputError("unknown variant '" + variant + "'");
    cfg.replay_term = j.at("replay_term").get<bool>();
    cfg.iterations = j.at("iterations").get<int>();
    cfg.val_every = j.at("val_every").get<int>();
    cfg.val_sequences = j.at("val_sequences").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.learn_alpha = j.at("learn_alpha").get<bool>();
    cfg.alpha_init = j.at("alpha_init").get<double>();
    cfg.immediate_terms = j.at("immediate_terms").get<bool>();
    cfg.final_terms = j.at("final_terms").get<bool>();
    const std::string kind = j.at("meta_adapt_kind").get<std::string>();
    if (kind == "one_class") cfg.meta_adapt_kind = AdaptSetKind::one_class;
    else if (kind == "balanced") cfg.meta_adapt_kind = AdaptSetKind::balanced;
    else throw InputError("unknown adaptation kind '" + kind + "'");
    return cfg;
}

template <typename Real>
struct Checkpoint {
    LearnerKind learner = LearnerKind::arcade_m;
    MlpSpec spec;
    ParamSet<Real> theta;
    std::optional<LearningRateSet<Real>> alpha;  // absent for scalar-rate learners
    MetaConfig meta_config;
    std::string rng_state;
    int best_iteration = 0;
    double best_val_retained = 0.0;
};

template <typename Real>
void save_checkpoint(const Checkpoint<Real>& ckpt, const std::string& path) {
    validate_param_set(ckpt.theta);
    nlohmann::json j;
    j["format"] = "arcade-checkpoint";
    j["version"] = kCheckpointVersion;
    j["learner"] = to_string(ckpt.learner);
    j["precision"] = precision_name<Real>();
    j["model"] = {{"input_dim", ckpt.spec.input_dim}, {"hidden", ckpt.spec.hidden}};
    j["layer_map"] = layer_map_to_json(ckpt.theta.layer_map);
    j["theta"] = ckpt.theta.values;
    if (ckpt.alpha) {
        if (ckpt.alpha->raw.size() != ckpt.theta.values.size())
            throw InputError("save_checkpoint: alpha size mismatch");
        j["alpha_raw"] = ckpt.alpha->raw;
    }
    j["meta_config"] = meta_config_to_json(ckpt.meta_config);
    j["rng_state"] = ckpt.rng_state;
    j["best_iteration"] = ckpt.best_iteration;
    j["best_val_retained"] = ckpt.best_val_retained;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("load_checkpoint: invalid JSON in " + path + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "arcade-checkpoint")
            throw CheckpointError("load_checkpoint: not an arcade checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw CheckpointError("load_checkpoint: unsupported version");
        if (j.at("precision").get<std::string>() != precision_name<Real>())
            throw CheckpointError("load_checkpoint: precision mismatch (checkpoint is " +
                                  j.at("precision").get<std::string>() + ")");
        Checkpoint<Real> ckpt;
        ckpt.learner = parse_learner(j.at("learner").get<std::string>());
        ckpt.spec.input_dim = j.at("model").at("input_dim").get<std::size_t>();
        ckpt.spec.hidden = j.at("model").at("hidden").get<std::vector<std::size_t>>();
        const LayerMap expected = ckpt.spec.layer_map();
        const LayerMap stored = layer_map_from_json(j.at("layer_map"));
        if (!(stored == expected))
            throw CheckpointError("load_checkpoint: layer map does not match model spec");
        ckpt.theta.layer_map = stored;
        ckpt.theta.head_range = stored.head_range();
        ckpt.theta.values = j.at("theta").get<std::vector<Real>>();
        if (ckpt.theta.values.size() != stored.total_params)
            throw CheckpointError("load_checkpoint: theta size does not match layer map");
        if (j.contains("alpha_raw")) {
            LearningRateSet<Real> lrs;
            lrs.raw = j.at("alpha_raw").get<std::vector<Real>>();
            if (lrs.raw.size() != ckpt.theta.values.size())
                throw CheckpointError("load_checkpoint: alpha size does not match theta");
            ckpt.alpha = std::move(lrs);
        }
        ckpt.meta_config = meta_config_from_json(j.at("meta_config"));
        ckpt.rng_state = j.at("rng_state").get<std::string>();
        ckpt.best_iteration = j.at("best_iteration").get<int>();
        ckpt.best_val_retained = j.at("best_val_retained").get<double>();
        validate_param_set(ckpt.theta);
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("load_checkpoint: malformed checkpoint " + path + ": " + e.what());
    }
}

}  // namespace arcade
