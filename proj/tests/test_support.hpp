#pragma once

// Shared fixtures and independent oracles for the test suite. Everything in
// here deliberately re-derives results with plain loops rather than calling
// the code paths under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "arcade/meta.hpp"
#include "arcade/net.hpp"
#include "arcade/rng.hpp"
#include "arcade/tasks.hpp"

namespace arcade::test {

// ---------------------------------------------------------------------------
// Naive scalar-loop re-implementation of the MLP forward pass.
// ---------------------------------------------------------------------------

inline std::vector<double> naive_logits(const ParamSet<double>& p, const Batch<double>& batch) {
    std::vector<double> out(batch.n);
    for (std::size_t i = 0; i < batch.n; ++i) {
        std::vector<double> x(batch.row(i), batch.row(i) + batch.width);
        std::size_t seg = 0;
        const auto& segs = p.layer_map.segments;
        while (seg < segs.size()) {
            const auto& s = segs[seg];
            if (s.kind == LayerKind::affine) {
                std::vector<double> y(s.rows, 0.0);
                for (std::size_t r = 0; r < s.rows; ++r) {
                    long double acc = p.values[s.offset + s.rows * s.cols + r];  // bias
                    for (std::size_t c = 0; c < s.cols; ++c)
                        acc += static_cast<long double>(p.values[s.offset + r * s.cols + c]) * x[c];
                    y[r] = static_cast<double>(acc);
                }
                x = y;
            } else {
                for (auto& v : x) v = v > 0.0 ? v : 0.0;
            }
            ++seg;
        }
        out[i] = x[0];
    }
    return out;
}

inline std::vector<double> naive_forward(const ParamSet<double>& p, const Batch<double>& batch) {
    std::vector<double> z = naive_logits(p, batch);
    for (auto& v : z) v = 1.0 / (1.0 + std::exp(-v));
    return z;
}

inline std::vector<double> hidden_preactivations(const ParamSet<double>& p,
                                                 const Batch<double>& batch) {
    std::vector<double> all;
    for (std::size_t i = 0; i < batch.n; ++i) {
        std::vector<double> x(batch.row(i), batch.row(i) + batch.width);
        const auto& segs = p.layer_map.segments;
        for (std::size_t seg = 0; seg < segs.size(); ++seg) {
            const auto& s = segs[seg];
            if (s.kind == LayerKind::affine) {
                std::vector<double> y(s.rows, 0.0);
                for (std::size_t r = 0; r < s.rows; ++r) {
                    double acc = p.values[s.offset + s.rows * s.cols + r];
                    for (std::size_t c = 0; c < s.cols; ++c)
                        acc += p.values[s.offset + r * s.cols + c] * x[c];
                    y[r] = acc;
                }
                if (seg + 1 < segs.size())  // hidden affine: feeds a ReLU
                    all.insert(all.end(), y.begin(), y.end());
                x = y;
            } else {
                for (auto& v : x) v = v > 0.0 ? v : 0.0;
            }
        }
    }
    return all;
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

inline Batch<double> random_batch(std::size_t n, std::size_t width, Rng& rng,
                                  bool labeled = true) {
    Batch<double> b;
    b.n = n;
    b.width = width;
    b.inputs.resize(n * width);
    for (auto& v : b.inputs) v = rng.uniform(-1.0, 1.0);
    if (labeled) {
        b.labels.resize(n);
        for (auto& y : b.labels) y = rng.below(2) == 0 ? 0 : 1;
    }
    return b;
}

struct NnFixture {
    MlpSpec spec;
    MlpModel<double> model;
    ParamSet<double> params;
    Batch<double> batch;
};

// Random architecture/parameters/batch with every hidden pre-activation
// bounded away from the ReLU kink, so central differences stay on one side.
inline NnFixture make_clean_fixture(std::uint64_t seed) {
    static const std::vector<MlpSpec> archs = {
        {2, {}}, {2, {5}}, {3, {8, 4}}, {2, {16, 8}}, {4, {6}}, {5, {10, 6}},
    };
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(mix_seed(seed, 0xf1c5, attempt));
        MlpSpec spec = archs[rng.below(archs.size())];
        MlpModel<double> model(spec);
        ParamSet<double> params = model.init_params(rng);
        // jitter biases so pre-activations are not centered on the kink
        for (const auto& s : params.layer_map.segments) {
            if (s.kind != LayerKind::affine) continue;
            for (std::size_t r = 0; r < s.rows; ++r)
                params.values[s.offset + s.rows * s.cols + r] = rng.uniform(-0.3, 0.3);
        }
        Batch<double> batch = random_batch(4 + rng.below(12), spec.input_dim, rng);
        bool one = false, zero = false;
        for (int y : batch.labels) (y == 1 ? one : zero) = true;
        if (!one || !zero) continue;
        const auto pre = hidden_preactivations(params, batch);
        const bool clean = std::all_of(pre.begin(), pre.end(),
                                       [](double z) { return std::abs(z) > 1e-3; });
        if (clean) return {spec, std::move(model), std::move(params), std::move(batch)};
    }
}

// ---------------------------------------------------------------------------
// Central differences over an arbitrary objective (test-side helper, kept
// separate from the library's reporting utilities).
// ---------------------------------------------------------------------------

inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f(x);
        x[i] = saved - h;
        const double down = f(x);
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Constant-gradient model: the loss is linear in the parameters, so the
// first-order meta-gradient formulas are exact and finite differences of the
// unrolled objective must agree to rounding error.
// ---------------------------------------------------------------------------

class LinearModel {
public:
    explicit LinearModel(LayerMap map) : map_(std::move(map)) {}

    const LayerMap& layer_map() const { return map_; }

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

    ParamSet<double> init_params(Rng& rng) const {
        ParamSet<double> p;
        p.layer_map = map_;
        p.head_range = map_.head_range();
        p.values.resize(map_.total_params);
        for (auto& v : p.values) v = rng.uniform(-1.0, 1.0);
        return p;
    }

private:
    LayerMap map_;
};

// Layer map with two affine segments (head = second) and no activations;
// suits the linear model where every "row" is just a gradient direction.
inline LayerMap two_segment_map(std::size_t backbone, std::size_t head) {
    LayerMap map;
    map.segments.push_back({0, LayerKind::affine, 1, backbone - 1, 0, backbone});
    map.segments.push_back({1, LayerKind::affine, 1, head - 1, backbone, head});
    map.total_params = backbone + head;
    return map;
}

// Task sequence over width-P batches for the linear model.
inline TaskSequence<double> linear_sequence(std::size_t J, std::size_t P, std::size_t K,
                                            std::size_t M, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x11a7));
    TaskSequence<double> seq;
    seq.seed = seed;
    for (std::size_t j = 0; j < J; ++j) {
        OCCTask<double> task;
        task.normal_class = static_cast<int>(2 * j);
        task.member_classes = {static_cast<int>(2 * j), static_cast<int>(2 * j + 1)};
        task.train = random_batch(K, P, rng);
        for (auto& y : task.train.labels) y = 1;
        task.val = random_batch(M, P, rng);
        for (std::size_t i = 0; i < M; ++i) task.val.labels[i] = i < M / 2 ? 1 : 0;
        seq.tasks.push_back(std::move(task));
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Independent episode re-simulation. Replay choices are data-independent rng
// draws, so the oracle takes them as recorded by the engine and re-derives
// everything else: the adaptation trajectory, every loss term and the total.
// ---------------------------------------------------------------------------

template <typename Model>
double naive_unrolled_objective(const Model& model, const ParamSet<double>& theta,
                                const std::vector<double>& alpha_raw,
                                const TaskSequence<double>& seq, const MetaConfig& cfg,
                                const std::vector<int>& replay_sources) {
    std::vector<double> eff(alpha_raw.size());
    for (std::size_t i = 0; i < alpha_raw.size(); ++i)
        eff[i] = std::min(1.0, std::max(0.0, alpha_raw[i]));
    std::size_t lo = 0, hi = theta.values.size();
    if (cfg.variant == Variant::H) {
        lo = theta.head_range.begin;
        hi = theta.head_range.end;
    }
    ParamSet<double> cur = theta;
    std::vector<double> g;
    double total = 0.0;
    std::size_t replay_cursor = 0;
    for (std::size_t j = 0; j < seq.tasks.size(); ++j) {
        for (int s = 0; s < cfg.inner_steps; ++s) {
            model.loss_grad(cur, seq.tasks[j].train, g);
            for (std::size_t i = lo; i < hi; ++i) cur.values[i] -= eff[i] * g[i];
        }
        if (cfg.immediate_terms) total += model.loss(cur, seq.tasks[j].val);
        if (cfg.replay_term && j >= 1) {
            const int u = replay_sources.at(replay_cursor++);
            total += model.loss(cur, seq.tasks[static_cast<std::size_t>(u)].val);
        }
    }
    if (cfg.final_terms)
        for (const auto& task : seq.tasks) total += model.loss(cur, task.val);
    return total;
}

}  // namespace arcade::test
