#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "arcade/errors.hpp"
#include "arcade/rng.hpp"

namespace arcade {

enum class LayerKind { affine, activation };

// One entry of the layer map. Affine segments own `length = rows*cols + rows`
// parameters laid out as row-major weights followed by biases; activation
// segments own none.
struct LayerSegment {
    int id = 0;
    LayerKind kind = LayerKind::affine;
    std::size_t rows = 0;  // output width (affine only)
    std::size_t cols = 0;  // input width (affine only)
    std::size_t offset = 0;
    std::size_t length = 0;
};

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the last index
    std::size_t size() const { return end - begin; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
};

struct LayerMap {
    std::vector<LayerSegment> segments;
    std::size_t total_params = 0;

    IndexRange head_range() const {
        for (auto it = segments.rbegin(); it != segments.rend(); ++it) {
            if (it->kind == LayerKind::affine) return {it->offset, it->offset + it->length};
        }
        return {0, 0};
    }

    std::vector<LayerSegment> affine_segments() const {
        std::vector<LayerSegment> out;
        for (const auto& s : segments)
            if (s.kind == LayerKind::affine) out.push_back(s);
        return out;
    }
};

inline bool operator==(const LayerSegment& a, const LayerSegment& b) {
    return a.id == b.id && a.kind == b.kind && a.rows == b.rows && a.cols == b.cols &&
           a.offset == b.offset && a.length == b.length;
}

inline bool operator==(const LayerMap& a, const LayerMap& b) {
    return a.total_params == b.total_params && a.segments == b.segments;
}

// Flat parameter vector plus its structure.
template <typename Real>
struct ParamSet {
    std::vector<Real> values;
    LayerMap layer_map;
    IndexRange head_range;
};

template <typename Real>
void check_finite(const std::vector<Real>& v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(static_cast<double>(v[i])))
            throw NumericError(std::string(what) + ": non-finite value at index " +
                               std::to_string(i));
    }
}

// Enforces the structural invariants: segments contiguous and covering the
// value vector exactly, head range equal to the last affine segment, all
// values finite.
template <typename Real>
void validate_param_set(const ParamSet<Real>& p) {
    std::size_t cursor = 0;
    for (const auto& s : p.layer_map.segments) {
        if (s.offset != cursor) throw InputError("ParamSet: layer map segments not contiguous");
        if (s.kind == LayerKind::affine && s.length != s.rows * s.cols + s.rows)
            throw InputError("ParamSet: affine segment length mismatch");
        if (s.kind == LayerKind::activation && s.length != 0)
            throw InputError("ParamSet: activation segment must be empty");
        cursor += s.length;
    }
    if (cursor != p.layer_map.total_params || cursor != p.values.size())
        throw InputError("ParamSet: layer map does not cover values exactly");
    const IndexRange head = p.layer_map.head_range();
    if (head.begin != p.head_range.begin || head.end != p.head_range.end)
        throw InputError("ParamSet: head range does not match last affine segment");
    check_finite(p.values, "ParamSet");
}

// A batch of examples; labels are 1 = normal, 0 = anomaly, empty = unlabeled.
template <typename Real>
struct Batch {
    std::size_t n = 0;
    std::size_t width = 0;
    std::vector<Real> inputs;  // n x width, row-major
    std::vector<int> labels;

    bool labeled() const { return !labels.empty(); }
    const Real* row(std::size_t i) const { return inputs.data() + i * width; }
};

template <typename Real>
void validate_batch(const Batch<Real>& b, std::size_t expected_width) {
    if (b.n == 0) throw InputError("Batch: must contain at least one example");
    if (b.inputs.size() != b.n * b.width) throw InputError("Batch: input size mismatch");
    if (b.width != expected_width)
        throw InputError("Batch: feature width " + std::to_string(b.width) +
                         " does not match network input width " + std::to_string(expected_width));
    if (b.labeled()) {
        if (b.labels.size() != b.n) throw InputError("Batch: label count mismatch");
        for (int y : b.labels)
            if (y != 0 && y != 1) throw InputError("Batch: labels must be 0 or 1");
    }
}

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

// log(1 + e^z) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Mean binary cross-entropy from probabilities. Exact form; prefer
// bce_loss_from_logits when probabilities may saturate.
template <typename Real>
double bce_loss(const std::vector<Real>& probs, const std::vector<int>& labels) {
    if (probs.size() != labels.size()) throw InputError("bce_loss: length mismatch");
    if (probs.empty()) throw InputError("bce_loss: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = static_cast<double>(probs[i]);
        acc -= labels[i] == 1 ? std::log(p) : std::log1p(-p);
    }
    return acc / static_cast<double>(probs.size());
}

// Mean binary cross-entropy evaluated in logit space:
// softplus(z) - y*z, stable for |z| far beyond the sigmoid saturation point.
template <typename Real>
double bce_loss_from_logits(const std::vector<Real>& logits, const std::vector<int>& labels) {
    if (logits.size() != labels.size()) throw InputError("bce_loss_from_logits: length mismatch");
    if (logits.empty()) throw InputError("bce_loss_from_logits: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = static_cast<double>(logits[i]);
        acc += softplus(z) - (labels[i] == 1 ? z : 0.0);
    }
    return acc / static_cast<double>(logits.size());
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// Stack of affine+ReLU layers with a single-logit affine head; the sigmoid of
// the logit is the probability of the normal class.
struct MlpSpec {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden;  // widths of hidden layers, may be empty

    LayerMap layer_map() const {
        if (input_dim == 0) throw InputError("MlpSpec: input_dim must be positive");
        for (std::size_t h : hidden)
            if (h == 0) throw InputError("MlpSpec: hidden widths must be positive");
        LayerMap map;
        std::size_t in = input_dim;
        std::size_t offset = 0;
        int id = 0;
        for (std::size_t h : hidden) {
            const std::size_t len = h * in + h;
            map.segments.push_back({id++, LayerKind::affine, h, in, offset, len});
            offset += len;
            map.segments.push_back({id++, LayerKind::activation, 0, 0, offset, 0});
            in = h;
        }
        const std::size_t len = in + 1;
        map.segments.push_back({id++, LayerKind::affine, 1, in, offset, len});
        map.total_params = offset + len;
        return map;
    }

    bool operator==(const MlpSpec& o) const {
        return input_dim == o.input_dim && hidden == o.hidden;
    }
};

template <typename Real>
class MlpModel {
public:
    explicit MlpModel(MlpSpec spec) : spec_(std::move(spec)), map_(spec_.layer_map()) {}

    const MlpSpec& spec() const { return spec_; }
    const LayerMap& layer_map() const { return map_; }
    std::size_t param_count() const { return map_.total_params; }

    // Uniform Xavier/Glorot weights, zero biases.
    ParamSet<Real> init_params(Rng& rng) const {
        ParamSet<Real> p;
        p.layer_map = map_;
        p.head_range = map_.head_range();
        p.values.assign(map_.total_params, Real(0));
        for (const auto& s : map_.segments) {
            if (s.kind != LayerKind::affine) continue;
            const double a = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
            for (std::size_t i = 0; i < s.rows * s.cols; ++i)
                p.values[s.offset + i] = static_cast<Real>(rng.uniform(-a, a));
        }
        return p;
    }

    std::vector<Real> logits(const ParamSet<Real>& p, const Batch<Real>& batch) const {
        check_shapes(p, batch);
        std::vector<Real> cur, next;
        std::vector<Real> out(batch.n);
        for (std::size_t i = 0; i < batch.n; ++i) {
            cur.assign(batch.row(i), batch.row(i) + batch.width);
            for (const auto& s : map_.segments) {
                if (s.kind == LayerKind::affine) {
                    affine_apply(p.values.data() + s.offset, s.rows, s.cols, cur, next);
                    cur.swap(next);
                } else {
                    for (auto& v : cur) v = std::max(v, Real(0));
                }
            }
            out[i] = cur[0];
        }
        return out;
    }

    // Probability of label 1 per example.
    std::vector<Real> forward(const ParamSet<Real>& p, const Batch<Real>& batch) const {
        std::vector<Real> z = logits(p, batch);
        for (auto& v : z) v = static_cast<Real>(sigmoid(static_cast<double>(v)));
        return z;
    }

    Real loss(const ParamSet<Real>& p, const Batch<Real>& batch) const {
        require_labels(batch);
        return static_cast<Real>(bce_loss_from_logits(logits(p, batch), batch.labels));
    }

    // Mean BCE loss and its exact gradient with respect to every parameter.
    Real loss_grad(const ParamSet<Real>& p, const Batch<Real>& batch,
                   std::vector<Real>& grad) const {
        require_labels(batch);
        check_shapes(p, batch);
        grad.assign(map_.total_params, Real(0));

        const auto affine = map_.affine_segments();
        const std::size_t n_aff = affine.size();
        // acts[l] holds the input of affine layer l for the whole batch;
        // preact[l] its pre-activation output (post-activation for l<last is
        // recomputed from preact via ReLU).
        std::vector<std::vector<Real>> acts(n_aff), preact(n_aff);

        std::vector<Real> cur, next;
        std::vector<Real> out_logits(batch.n);
        for (std::size_t l = 0; l < n_aff; ++l) {
            acts[l].resize(batch.n * affine[l].cols);
            preact[l].resize(batch.n * affine[l].rows);
        }
        for (std::size_t i = 0; i < batch.n; ++i) {
            cur.assign(batch.row(i), batch.row(i) + batch.width);
            for (std::size_t l = 0; l < n_aff; ++l) {
                const auto& s = affine[l];
                std::copy(cur.begin(), cur.end(), acts[l].begin() + i * s.cols);
                affine_apply(p.values.data() + s.offset, s.rows, s.cols, cur, next);
                std::copy(next.begin(), next.end(), preact[l].begin() + i * s.rows);
                cur.swap(next);
                if (l + 1 < n_aff)
                    for (auto& v : cur) v = std::max(v, Real(0));
            }
            out_logits[i] = cur[0];
        }

        double loss_acc = 0.0;
        const double inv_n = 1.0 / static_cast<double>(batch.n);
        // delta = dL/d(pre-activation) for the current layer, whole batch.
        std::vector<Real> delta(batch.n), delta_prev;
        for (std::size_t i = 0; i < batch.n; ++i) {
            const double z = static_cast<double>(out_logits[i]);
            const int y = batch.labels[i];
            loss_acc += softplus(z) - (y == 1 ? z : 0.0);
            delta[i] = static_cast<Real>((sigmoid(z) - static_cast<double>(y)) * inv_n);
        }

        for (std::size_t l = n_aff; l-- > 0;) {
            const auto& s = affine[l];
            Real* gw = grad.data() + s.offset;
            Real* gb = grad.data() + s.offset + s.rows * s.cols;
            const Real* w = p.values.data() + s.offset;
            if (l > 0) delta_prev.assign(batch.n * s.cols, Real(0));
            for (std::size_t i = 0; i < batch.n; ++i) {
                const Real* x = acts[l].data() + i * s.cols;
                const Real* d = delta.data() + i * s.rows;
                for (std::size_t r = 0; r < s.rows; ++r) {
                    const Real dr = d[r];
                    gb[r] += dr;
                    Real* gwr = gw + r * s.cols;
                    for (std::size_t c = 0; c < s.cols; ++c) gwr[c] += dr * x[c];
                }
                if (l > 0) {
                    Real* dp = delta_prev.data() + i * s.cols;
                    for (std::size_t r = 0; r < s.rows; ++r) {
                        const Real dr = d[r];
                        const Real* wr = w + r * s.cols;
                        for (std::size_t c = 0; c < s.cols; ++c) dp[c] += dr * wr[c];
                    }
                    // through the ReLU that produced this layer's input
                    const Real* zprev = preact[l - 1].data() + i * s.cols;
                    for (std::size_t c = 0; c < s.cols; ++c)
                        if (zprev[c] <= Real(0)) dp[c] = Real(0);
                }
            }
            if (l > 0) delta.swap(delta_prev);
        }
        return static_cast<Real>(loss_acc * inv_n);
    }

private:
    static void affine_apply(const Real* params, std::size_t rows, std::size_t cols,
                             const std::vector<Real>& in, std::vector<Real>& out) {
        const Real* bias = params + rows * cols;
        out.resize(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            Real acc = bias[r];
            const Real* wr = params + r * cols;
            for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * in[c];
            out[r] = acc;
        }
    }

    void check_shapes(const ParamSet<Real>& p, const Batch<Real>& batch) const {
        if (p.values.size() != map_.total_params)
            throw InputError("MlpModel: parameter count mismatch");
        validate_batch(batch, spec_.input_dim);
    }

    static void require_labels(const Batch<Real>& batch) {
        if (!batch.labeled()) throw InputError("MlpModel: batch is unlabeled");
    }

    MlpSpec spec_;
    LayerMap map_;
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

inline double grad_rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
    return std::abs(analytic - numeric) / denom;
}

// Central-difference check of an analytic gradient against a scalar function
// of the parameter vector. `analytic` must have one entry per parameter.
template <typename Real, typename LossFn>
GradReport finite_difference_report(const std::vector<Real>& analytic, std::vector<Real> params,
                                    LossFn&& loss_of_params, double h) {
    if (!(h > 0.0)) throw InputError("finite_difference_report: step size must be positive");
    if (analytic.size() != params.size())
        throw InputError("finite_difference_report: gradient size mismatch");
    GradReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Real saved = params[i];
        params[i] = saved + static_cast<Real>(h);
        const double up = static_cast<double>(loss_of_params(params));
        params[i] = saved - static_cast<Real>(h);
        const double down = static_cast<double>(loss_of_params(params));
        params[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double rel = grad_rel_error(static_cast<double>(analytic[i]), numeric);
        if (i == 0 || rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = static_cast<double>(analytic[i]);
            report.numeric = numeric;
        }
    }
    return report;
}

// Compares backward-pass gradients against central finite differences of the
// loss. `analytic_override` substitutes the gradient under test (used by
// fault-injection checks).
template <typename Real>
GradReport gradcheck(const MlpModel<Real>& model, const ParamSet<Real>& params,
                     const Batch<Real>& batch, double h,
                     const std::vector<Real>* analytic_override = nullptr) {
    std::vector<Real> analytic;
    if (analytic_override) {
        analytic = *analytic_override;
    } else {
        model.loss_grad(params, batch, analytic);
    }
    ParamSet<Real> probe = params;
    return finite_difference_report<Real>(
        analytic, params.values,
        [&](const std::vector<Real>& values) {
            probe.values = values;
            return model.loss(probe, batch);
        },
        h);
}

}  // namespace arcade
