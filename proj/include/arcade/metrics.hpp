#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "arcade/errors.hpp"
#include "arcade/net.hpp"

namespace arcade {

// Lower-triangular record: entry(k, j) is the balanced accuracy on task j's
// validation set after sequentially learning tasks 0..k (0-based, j <= k).
struct AccuracyMatrix {
    std::size_t J = 0;
    std::vector<std::vector<double>> rows;  // rows[k] has k+1 entries

    static AccuracyMatrix empty(std::size_t J) {
        AccuracyMatrix a;
        a.J = J;
        a.rows.resize(J);
        for (std::size_t k = 0; k < J; ++k) a.rows[k].assign(k + 1, 0.0);
        return a;
    }

    double entry(std::size_t k, std::size_t j) const { return rows[k][j]; }
    double& entry(std::size_t k, std::size_t j) { return rows[k][j]; }
};

inline void validate_accuracy_matrix(const AccuracyMatrix& a) {
    if (a.J == 0 || a.rows.size() != a.J) throw InputError("AccuracyMatrix: bad shape");
    for (std::size_t k = 0; k < a.J; ++k) {
        if (a.rows[k].size() != k + 1) throw InputError("AccuracyMatrix: bad row length");
        for (double v : a.rows[k])
            if (!(v >= 0.0 && v <= 1.0)) throw InputError("AccuracyMatrix: entry outside [0,1]");
    }
}

// Mean of per-class recalls at threshold 0.5; a probability of exactly 0.5
// counts as the normal class so the degenerate predictor scores 0.5 on a
// balanced set. Classes absent from the labels are skipped.
template <typename Real>
double balanced_accuracy(const std::vector<Real>& probs, const std::vector<int>& labels) {
    if (probs.size() != labels.size() || probs.empty())
        throw InputError("balanced_accuracy: length mismatch");
    std::size_t n_pos = 0, n_neg = 0, hit_pos = 0, hit_neg = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool predicted_normal = static_cast<double>(probs[i]) >= 0.5;
        if (labels[i] == 1) {
            ++n_pos;
            hit_pos += predicted_normal ? 1 : 0;
        } else {
            ++n_neg;
            hit_neg += predicted_normal ? 0 : 1;
        }
    }
    double acc = 0.0;
    int present = 0;
    if (n_pos > 0) {
        acc += static_cast<double>(hit_pos) / static_cast<double>(n_pos);
        ++present;
    }
    if (n_neg > 0) {
        acc += static_cast<double>(hit_neg) / static_cast<double>(n_neg);
        ++present;
    }
    return acc / present;
}

// Mean accuracy of the final model over every task in the sequence.
inline double retained_accuracy(const AccuracyMatrix& a) {
    validate_accuracy_matrix(a);
    const auto& last = a.rows[a.J - 1];
    double sum = 0.0;
    for (double v : last) sum += v;
    return sum / static_cast<double>(last.size());
}

// Mean drop from each task's just-learned accuracy to its final accuracy;
// negative values indicate backward transfer.
inline double forgetting(const AccuracyMatrix& a) {
    validate_accuracy_matrix(a);
    if (a.J < 2) throw InputError("forgetting: needs at least 2 tasks");
    double sum = 0.0;
    for (std::size_t j = 0; j + 1 < a.J; ++j) sum += a.rows[j][j] - a.rows[a.J - 1][j];
    return sum / static_cast<double>(a.J - 1);
}

struct RunReport {
    std::vector<double> retained;  // per sequence
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::size_t count = 0;
    std::vector<double> task1_curve;      // mean accuracy on task 1 after learning k+1 tasks
    std::vector<double> task1_curve_std;  // population std of the same
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& stddev) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    stddev = std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace detail

inline RunReport aggregate(const std::vector<AccuracyMatrix>& matrices) {
    if (matrices.empty()) throw InputError("aggregate: need at least one matrix");
    const std::size_t J = matrices[0].J;
    for (const auto& a : matrices) {
        validate_accuracy_matrix(a);
        if (a.J != J) throw InputError("aggregate: mixed sequence lengths");
    }
    RunReport report;
    report.count = matrices.size();
    report.retained.reserve(matrices.size());
    for (const auto& a : matrices) report.retained.push_back(retained_accuracy(a));
    detail::mean_std(report.retained, report.mean, report.stddev);
    report.task1_curve.resize(J);
    report.task1_curve_std.resize(J);
    std::vector<double> column(matrices.size());
    for (std::size_t k = 0; k < J; ++k) {
        for (std::size_t i = 0; i < matrices.size(); ++i) column[i] = matrices[i].rows[k][0];
        detail::mean_std(column, report.task1_curve[k], report.task1_curve_std[k]);
    }
    return report;
}

// Per-affine-layer share of active (raw > 0) learning rates and the mean of
// their clipped values; layers are numbered by affine ordinal.
struct LrLayerStats {
    int layer = 0;
    std::size_t param_count = 0;
    std::size_t active_count = 0;
    double fraction_active = 0.0;
    double mean_active = 0.0;
};

struct LrAnalysis {
    std::vector<LrLayerStats> layers;
};

template <typename Real>
LrAnalysis analyze_lrs(const std::vector<Real>& raw, const LayerMap& map) {
    if (raw.size() != map.total_params) throw InputError("analyze_lrs: shape mismatch");
    LrAnalysis out;
    int ordinal = 0;
    for (const auto& s : map.segments) {
        if (s.kind != LayerKind::affine) continue;
        LrLayerStats stats;
        stats.layer = ordinal++;
        stats.param_count = s.length;
        double sum_clipped = 0.0;
        for (std::size_t i = s.offset; i < s.offset + s.length; ++i) {
            const double r = static_cast<double>(raw[i]);
            if (r > 0.0) {
                ++stats.active_count;
                sum_clipped += std::min(r, 1.0);
            }
        }
        stats.fraction_active =
            static_cast<double>(stats.active_count) / static_cast<double>(stats.param_count);
        stats.mean_active =
            stats.active_count > 0 ? sum_clipped / static_cast<double>(stats.active_count) : 0.0;
        out.layers.push_back(stats);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV emission (schemas are part of the external interface)
// ---------------------------------------------------------------------------

inline std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct RetainedCsvRow {
    std::size_t seq_len = 0;
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

inline void write_retained_csv(const std::string& path, const std::vector<RetainedCsvRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_retained_csv: cannot open " + path);
    out << "seq_len,mean,std,n\n";
    for (const auto& r : rows)
        out << r.seq_len << ',' << format_real(r.mean) << ',' << format_real(r.stddev) << ','
            << r.n << '\n';
}

inline void write_task1_curve_csv(const std::string& path, const RunReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_task1_curve_csv: cannot open " + path);
    out << "tasks_learned,mean,std,n\n";
    for (std::size_t k = 0; k < report.task1_curve.size(); ++k)
        out << (k + 1) << ',' << format_real(report.task1_curve[k]) << ','
            << format_real(report.task1_curve_std[k]) << ',' << report.count << '\n';
}

inline void write_lr_analysis_csv(const std::string& path, const LrAnalysis& analysis) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_lr_analysis_csv: cannot open " + path);
    out << "layer,fraction_active,mean_active\n";
    for (const auto& l : analysis.layers)
        out << l.layer << ',' << format_real(l.fraction_active) << ','
            << format_real(l.mean_active) << '\n';
}

}  // namespace arcade
