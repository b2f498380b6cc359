#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "arcade/errors.hpp"
#include "arcade/net.hpp"
#include "arcade/rng.hpp"

namespace arcade {

// Labeled example pool grouped by class. Rows are flattened; class c has
// classes.at(c).size() / width examples.
template <typename Real>
struct Dataset {
    std::string name;
    std::size_t width = 0;
    std::map<int, std::vector<Real>> classes;

    std::size_t class_count() const { return classes.size(); }
    std::size_t class_size(int id) const { return classes.at(id).size() / width; }
    std::vector<int> class_ids() const {
        std::vector<int> ids;
        ids.reserve(classes.size());
        for (const auto& [id, _] : classes) ids.push_back(id);
        return ids;
    }
};

struct MetaSplit {
    std::vector<int> train_classes;
    std::vector<int> val_classes;
    std::vector<int> test_classes;
};

// One anomaly-detection task: a one-class training set and a class-balanced
// validation set, plus the classes it was built from.
template <typename Real>
struct OCCTask {
    Batch<Real> train;
    Batch<Real> val;
    int normal_class = 0;
    std::vector<int> member_classes;
};

template <typename Real>
struct TaskSequence {
    std::vector<OCCTask<Real>> tasks;
    std::uint64_t seed = 0;

    std::size_t length() const { return tasks.size(); }
};

// How adaptation batches are composed. OCC tasks train on normal examples
// only; the balanced mode (used by SeqFOMAML-style meta-training) mixes in an
// equal number of anomalies.
enum class AdaptSetKind { one_class, balanced };

// ---------------------------------------------------------------------------
// Validation helpers
// ---------------------------------------------------------------------------

template <typename Real>
void validate_occ_task(const OCCTask<Real>& task, std::size_t K, std::size_t M) {
    if (task.train.n != K) throw InputError("OCCTask: train size mismatch");
    for (int y : task.train.labels)
        if (y != 1) throw InputError("OCCTask: train labels must all be 1");
    if (task.val.n != M) throw InputError("OCCTask: val size mismatch");
    std::size_t pos = 0;
    for (int y : task.val.labels) pos += static_cast<std::size_t>(y);
    if (pos != M / 2) throw InputError("OCCTask: val set not class-balanced");
}

template <typename Real>
void validate_sequence(const TaskSequence<Real>& seq) {
    if (seq.tasks.empty()) throw InputError("TaskSequence: must contain at least one task");
    std::set<int> seen;
    std::size_t total = 0;
    for (const auto& t : seq.tasks) {
        seen.insert(t.member_classes.begin(), t.member_classes.end());
        total += t.member_classes.size();
    }
    if (seen.size() != total)
        throw InputError("TaskSequence: member classes of distinct tasks must be disjoint");
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

// Splits class_ids into L disjoint sets of equal size floor(|ids|/L); leftover
// classes are dropped. Assignment is uniformly random given the rng.
inline std::vector<std::vector<int>> partition_classes(const std::vector<int>& class_ids,
                                                       std::size_t L, Rng& rng) {
    if (L == 0) throw InputError("partition_classes: L must be positive");
    if (class_ids.size() < 2 * L)
        throw InputError("partition_classes: need at least " + std::to_string(2 * L) +
                         " classes for L=" + std::to_string(L) + ", got " +
                         std::to_string(class_ids.size()));
    std::vector<int> ids = class_ids;
    rng.shuffle(ids);
    const std::size_t per_set = ids.size() / L;
    std::vector<std::vector<int>> sets(L);
    for (std::size_t i = 0; i < L; ++i) {
        sets[i].assign(ids.begin() + i * per_set, ids.begin() + (i + 1) * per_set);
        std::sort(sets[i].begin(), sets[i].end());
    }
    return sets;
}

namespace detail {

template <typename Real>
void append_rows(Batch<Real>& batch, const std::vector<Real>& pool, std::size_t width,
                 const std::vector<std::size_t>& rows, std::size_t first, std::size_t count,
                 int label) {
    for (std::size_t i = first; i < first + count; ++i) {
        const Real* src = pool.data() + rows[i] * width;
        batch.inputs.insert(batch.inputs.end(), src, src + width);
        batch.labels.push_back(label);
        ++batch.n;
    }
}

}  // namespace detail

// Builds one OCC task from a class set: a uniformly chosen normal class, K
// adaptation examples and an M-example balanced validation set, all sampled
// without replacement and with train and val rows disjoint.
template <typename Real>
OCCTask<Real> build_occ_task(const Dataset<Real>& dataset, const std::vector<int>& class_set,
                             std::size_t K, std::size_t M, Rng& rng,
                             AdaptSetKind kind = AdaptSetKind::one_class) {
    if (class_set.size() < 2)
        throw InputError("build_occ_task: class set needs at least 2 classes");
    if (K == 0 || M == 0 || M % 2 != 0)
        throw InputError("build_occ_task: K must be positive and M positive and even");
    if (kind == AdaptSetKind::balanced && K % 2 != 0)
        throw InputError("build_occ_task: balanced adaptation requires even K");
    for (int id : class_set)
        if (!dataset.classes.count(id))
            throw InputError("build_occ_task: class " + std::to_string(id) + " not in dataset");

    OCCTask<Real> task;
    task.normal_class = class_set[rng.below(class_set.size())];
    task.member_classes = class_set;
    std::sort(task.member_classes.begin(), task.member_classes.end());

    const std::size_t train_normals = kind == AdaptSetKind::balanced ? K / 2 : K;
    const std::size_t train_anoms = K - train_normals;

    const auto& normal_pool = dataset.classes.at(task.normal_class);
    const std::size_t normal_avail = normal_pool.size() / dataset.width;
    const std::size_t normal_need = train_normals + M / 2;
    if (normal_avail < normal_need)
        throw InputError("build_occ_task: class " + std::to_string(task.normal_class) + " has " +
                         std::to_string(normal_avail) + " examples, needs " +
                         std::to_string(normal_need));

    // Pool the anomalous classes; rows are indexed over the concatenation.
    std::vector<Real> anom_pool;
    for (int id : task.member_classes) {
        if (id == task.normal_class) continue;
        const auto& rows = dataset.classes.at(id);
        anom_pool.insert(anom_pool.end(), rows.begin(), rows.end());
    }
    const std::size_t anom_avail = anom_pool.size() / dataset.width;
    const std::size_t anom_need = train_anoms + M / 2;
    if (anom_avail < anom_need)
        throw InputError("build_occ_task: anomaly pool for normal class " +
                         std::to_string(task.normal_class) + " has " + std::to_string(anom_avail) +
                         " examples, needs " + std::to_string(anom_need));

    const auto normal_rows = rng.sample_indices(normal_avail, normal_need);
    const auto anom_rows = rng.sample_indices(anom_avail, anom_need);

    task.train.width = dataset.width;
    task.val.width = dataset.width;
    detail::append_rows(task.train, normal_pool, dataset.width, normal_rows, 0, train_normals, 1);
    if (train_anoms > 0)
        detail::append_rows(task.train, anom_pool, dataset.width, anom_rows, 0, train_anoms, 0);
    detail::append_rows(task.val, normal_pool, dataset.width, normal_rows, train_normals, M / 2, 1);
    detail::append_rows(task.val, anom_pool, dataset.width, anom_rows, train_anoms, M / 2, 0);
    return task;
}

// Partition -> one task per class set -> random order.
template <typename Real>
TaskSequence<Real> build_sequence(const Dataset<Real>& dataset,
                                  const std::vector<int>& split_classes, std::size_t L,
                                  std::size_t K, std::size_t M, Rng& rng,
                                  AdaptSetKind kind = AdaptSetKind::one_class,
                                  std::uint64_t seed = 0) {
    TaskSequence<Real> seq;
    seq.seed = seed;
    const auto sets = partition_classes(split_classes, L, rng);
    seq.tasks.reserve(L);
    for (const auto& set : sets) seq.tasks.push_back(build_occ_task(dataset, set, K, M, rng, kind));
    rng.shuffle(seq.tasks);
    return seq;
}

// Disjoint class pools for meta-training, meta-validation and meta-testing.
// Fractions are cut on the shuffled class list with cumulative rounding.
template <typename Real>
MetaSplit make_meta_split(const Dataset<Real>& dataset, double train_frac, double val_frac,
                          double test_frac, Rng& rng) {
    const double sum = train_frac + val_frac + test_frac;
    if (train_frac < 0 || val_frac < 0 || test_frac < 0 || std::abs(sum - 1.0) > 1e-9)
        throw InputError("make_meta_split: fractions must be nonnegative and sum to 1");
    std::vector<int> ids = dataset.class_ids();
    rng.shuffle(ids);
    const double n = static_cast<double>(ids.size());
    const auto cut1 = static_cast<std::size_t>(std::llround(train_frac * n));
    const auto cut2 = static_cast<std::size_t>(std::llround((train_frac + val_frac) * n));
    MetaSplit split;
    split.train_classes.assign(ids.begin(), ids.begin() + cut1);
    split.val_classes.assign(ids.begin() + cut1, ids.begin() + cut2);
    split.test_classes.assign(ids.begin() + cut2, ids.end());
    std::sort(split.train_classes.begin(), split.train_classes.end());
    std::sort(split.val_classes.begin(), split.val_classes.end());
    std::sort(split.test_classes.begin(), split.test_classes.end());
    return split;
}

template <typename Real>
MetaSplit make_meta_split(const Dataset<Real>& dataset, std::vector<int> train_classes,
                          std::vector<int> val_classes, std::vector<int> test_classes) {
    std::sort(train_classes.begin(), train_classes.end());
    std::sort(val_classes.begin(), val_classes.end());
    std::sort(test_classes.begin(), test_classes.end());
    std::set<int> seen;
    std::size_t total = 0;
    for (const auto* list : {&train_classes, &val_classes, &test_classes}) {
        seen.insert(list->begin(), list->end());
        total += list->size();
        for (int id : *list)
            if (!dataset.classes.count(id))
                throw InputError("make_meta_split: class " + std::to_string(id) +
                                 " not in dataset");
    }
    if (seen.size() != total) throw InputError("make_meta_split: class lists overlap");
    return MetaSplit{std::move(train_classes), std::move(val_classes), std::move(test_classes)};
}

// Isotropic Gaussian blobs with means on the unit circle, class c at angle
// 2*pi*c/n_classes. Features beyond the first two are zero-mean noise only.
// spread = 0 is permitted for degenerate test fixtures; experiment configs
// reject it.
template <typename Real>
Dataset<Real> synth_generate(std::size_t n_classes, std::size_t per_class, double spread,
                             std::size_t n_features, Rng& rng) {
    if (n_classes < 2) throw InputError("synth_generate: need at least 2 classes");
    if (per_class == 0) throw InputError("synth_generate: per_class must be positive");
    if (n_features < 2) throw InputError("synth_generate: need at least 2 features");
    if (spread < 0) throw InputError("synth_generate: spread must be nonnegative");
    Dataset<Real> ds;
    ds.name = "synthetic";
    ds.width = n_features;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double angle = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(n_classes);
        std::vector<Real> rows;
        rows.reserve(per_class * n_features);
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t f = 0; f < n_features; ++f) {
                double mean = 0.0;
                if (f == 0) mean = std::cos(angle);
                else if (f == 1) mean = std::sin(angle);
                rows.push_back(static_cast<Real>(mean + spread * rng.normal()));
            }
        }
        ds.classes.emplace(static_cast<int>(c), std::move(rows));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset file format
// ---------------------------------------------------------------------------
//
// UTF-8 text. Line 1: `n_features=<int>`. Every following line is one
// example: `<class_id>,<f1>,...,<fn>` with '.' as the decimal separator and
// '\n' line endings.

template <typename Real>
void save_dataset(const Dataset<Real>& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_dataset: cannot open " + path);
    out << "n_features=" << ds.width << "\n";
    char buf[64];
    for (const auto& [id, rows] : ds.classes) {
        const std::size_t n = rows.size() / ds.width;
        for (std::size_t i = 0; i < n; ++i) {
            out << id;
            for (std::size_t f = 0; f < ds.width; ++f) {
                const auto res = std::to_chars(buf, buf + sizeof(buf),
                                               static_cast<double>(rows[i * ds.width + f]));
                out << ',' << std::string_view(buf, res.ptr - buf);
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("save_dataset: write failed for " + path);
}

template <typename Real>
Dataset<Real> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_dataset: cannot open " + path);
    Dataset<Real> ds;
    ds.name = path;
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError("load_dataset: empty file", line_no);
    if (line.rfind("n_features=", 0) != 0)
        throw ParseError("load_dataset: expected header 'n_features=<int>'", line_no);
    {
        const char* first = line.data() + 11;
        const char* last = line.data() + line.size();
        unsigned long width = 0;
        const auto res = std::from_chars(first, last, width);
        if (res.ec != std::errc() || res.ptr != last || width == 0)
            throw ParseError("load_dataset: invalid n_features value", line_no);
        ds.width = width;
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) throw ParseError("load_dataset: empty row", line_no);
        const char* ptr = line.data();
        const char* last = line.data() + line.size();
        int class_id = 0;
        auto res = std::from_chars(ptr, last, class_id);
        if (res.ec != std::errc()) throw ParseError("load_dataset: invalid class id", line_no);
        ptr = res.ptr;
        std::vector<Real>& rows = ds.classes[class_id];
        std::size_t fields = 0;
        while (ptr != last) {
            if (*ptr != ',') throw ParseError("load_dataset: expected ','", line_no);
            ++ptr;
            double v = 0.0;
            res = std::from_chars(ptr, last, v);
            if (res.ec != std::errc())
                throw ParseError("load_dataset: invalid feature value", line_no);
            ptr = res.ptr;
            rows.push_back(static_cast<Real>(v));
            ++fields;
        }
        if (fields != ds.width)
            throw ParseError("load_dataset: row has " + std::to_string(fields) +
                                 " features, header declares " + std::to_string(ds.width),
                             line_no);
    }
    if (ds.classes.empty()) throw InputError("load_dataset: no examples in " + path);
    for (const auto& [id, rows] : ds.classes) {
        if (rows.size() / ds.width < 2)
            throw InputError("load_dataset: class " + std::to_string(id) +
                             " has fewer than 2 examples");
    }
    return ds;
}

}  // namespace arcade
