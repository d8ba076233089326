#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mtsr/csv.hpp"
#include "mtsr/errors.hpp"
#include "mtsr/types.hpp"

namespace mtsr {

/// One task's design matrix and targets. Immutable after construction.
struct TaskDataset {
    int task_id = 0;
    std::string name;
    Matrix X;  // n x d
    Vector Y;  // n
    std::optional<std::vector<std::vector<double>>> raters;  // per-sample expert scores
    std::vector<std::string> sample_ids;

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index d() const { return X.cols(); }

    void check() const {
        if (X.rows() != Y.size() || static_cast<std::size_t>(X.rows()) != sample_ids.size())
            throw dimension_error("task '" + name + "': X rows, Y length and sample_ids disagree");
        if (raters) {
            if (raters->size() != sample_ids.size())
                throw dimension_error("task '" + name + "': raters length mismatch");
            for (const auto& r : *raters)
                if (r.empty())
                    throw invalid_input("task '" + name + "': empty rater list");
        }
    }
};

struct MultiTaskDataset {
    std::vector<TaskDataset> tasks;

    Eigen::Index num_tasks() const { return static_cast<Eigen::Index>(tasks.size()); }
    Eigen::Index n() const { return tasks.empty() ? 0 : tasks.front().n(); }

    const TaskDataset& task(const std::string& name) const {
        for (const auto& t : tasks)
            if (t.name == name) return t;
        throw invalid_input("unknown task: " + name);
    }

    bool uniform_d() const {
        for (const auto& t : tasks)
            if (t.d() != tasks.front().d()) return false;
        return true;
    }

    void check() const {
        if (tasks.empty()) throw invalid_input("dataset has no tasks");
        for (const auto& t : tasks) {
            t.check();
            if (t.sample_ids != tasks.front().sample_ids)
                throw alignment_error("tasks disagree on sample ids or order");
        }
    }

    /// Row subset shared across all tasks, order given by `indices`.
    MultiTaskDataset select(const std::vector<Eigen::Index>& indices) const {
        MultiTaskDataset out;
        for (const auto& t : tasks) {
            TaskDataset s;
            s.task_id = t.task_id;
            s.name = t.name;
            s.X.resize(static_cast<Eigen::Index>(indices.size()), t.d());
            s.Y.resize(static_cast<Eigen::Index>(indices.size()));
            if (t.raters) s.raters.emplace();
            for (std::size_t k = 0; k < indices.size(); ++k) {
                const auto i = indices[k];
                s.X.row(static_cast<Eigen::Index>(k)) = t.X.row(i);
                s.Y(static_cast<Eigen::Index>(k)) = t.Y(i);
                s.sample_ids.push_back(t.sample_ids[static_cast<std::size_t>(i)]);
                if (t.raters) s.raters->push_back((*t.raters)[static_cast<std::size_t>(i)]);
            }
            out.tasks.push_back(std::move(s));
        }
        return out;
    }
};

struct SyntheticSpec {
    Eigen::Index n = 50;
    Eigen::Index d = 20;
    Eigen::Index M = 3;
    double sparsity = 0.25;                              // fraction of nonzero rows of W
    std::vector<std::pair<int, int>> edges;              // tasks sharing a ground-truth column
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void check() const {
        if (n < 1 || d < 1 || M < 1) throw invalid_input("synthetic spec: n, d, M must be >= 1");
        if (!(sparsity > 0.0 && sparsity <= 1.0))
            throw invalid_input("synthetic spec: sparsity must be in (0,1]");
        if (noise_sigma < 0.0) throw invalid_input("synthetic spec: noise_sigma must be >= 0");
        for (auto [a, b] : edges)
            if (a < 0 || b < 0 || a >= M || b >= M)
                throw invalid_input("synthetic spec: edge index out of range");
    }
};

namespace detail {

inline std::string file_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

inline std::size_t column_index(const csv::Table& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return i;
    throw parse_error(t.path, 1, "missing column '" + name + "'");
}

}  // namespace detail

/// Loads one features CSV per task plus a shared scores CSV (and an optional
/// raters CSV). Task names come from the features file stems; rows are
/// aligned by sample id with the first features file defining the order.
/// When a task appears in the raters file, its Y is replaced by the
/// per-sample mean of the rater scores.
inline MultiTaskDataset load_multitask_dataset(const std::vector<std::string>& features_paths,
                                               const std::string& scores_path,
                                               const std::optional<std::string>& raters_path = {}) {
    if (features_paths.empty()) throw invalid_input("no features files given");

    MultiTaskDataset ds;
    std::vector<std::string> canonical_ids;

    for (std::size_t ti = 0; ti < features_paths.size(); ++ti) {
        auto table = csv::read_table(features_paths[ti]);
        if (table.header.empty() || table.header[0] != "id")
            throw parse_error(table.path, 1, "features header must start with 'id'");
        const auto d = table.header.size() - 1;
        if (d == 0) throw parse_error(table.path, 1, "features file has no feature columns");

        TaskDataset t;
        t.task_id = static_cast<int>(ti);
        t.name = detail::file_stem(features_paths[ti]);
        t.X.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(d));

        std::set<std::string> seen;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            if (!seen.insert(row[0]).second)
                throw parse_error(table.path, table.linenos[r], "duplicate sample id '" + row[0] + "'");
            t.sample_ids.push_back(row[0]);
            for (std::size_t c = 0; c < d; ++c)
                t.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    csv::parse_double(row[c + 1], table.path, table.linenos[r]);
        }
        t.Y = Vector::Zero(t.X.rows());
        ds.tasks.push_back(std::move(t));
    }

    // All feature files must cover the same id set; reorder to the first file's order.
    canonical_ids = ds.tasks.front().sample_ids;
    std::set<std::string> canonical_set(canonical_ids.begin(), canonical_ids.end());
    for (std::size_t ti = 1; ti < ds.tasks.size(); ++ti) {
        auto& t = ds.tasks[ti];
        std::map<std::string, Eigen::Index> pos;
        for (std::size_t r = 0; r < t.sample_ids.size(); ++r)
            pos[t.sample_ids[r]] = static_cast<Eigen::Index>(r);
        std::vector<std::string> bad;
        for (const auto& id : canonical_ids)
            if (!pos.count(id)) bad.push_back(id);
        for (const auto& id : t.sample_ids)
            if (!canonical_set.count(id)) bad.push_back(id);
        if (!bad.empty()) {
            std::string msg = "id mismatch between " + features_paths[0] + " and " + features_paths[ti] + ":";
            for (const auto& id : bad) msg += " " + id;
            throw alignment_error(msg);
        }
        Matrix reordered(t.X.rows(), t.X.cols());
        for (std::size_t r = 0; r < canonical_ids.size(); ++r)
            reordered.row(static_cast<Eigen::Index>(r)) = t.X.row(pos[canonical_ids[r]]);
        t.X = std::move(reordered);
        t.sample_ids = canonical_ids;
    }

    // Scores: header id,task,score; one row per (id, task).
    {
        auto table = csv::read_table(scores_path);
        const auto ci = detail::column_index(table, "id");
        const auto ct = detail::column_index(table, "task");
        const auto cs = detail::column_index(table, "score");
        std::map<std::pair<std::string, std::string>, double> scores;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            auto key = std::make_pair(row[ct], row[ci]);
            if (scores.count(key))
                throw parse_error(table.path, table.linenos[r],
                                  "duplicate score for id '" + row[ci] + "', task '" + row[ct] + "'");
            scores[key] = csv::parse_double(row[cs], table.path, table.linenos[r]);
            if (!canonical_set.count(row[ci]))
                throw alignment_error(scores_path + ": id '" + row[ci] + "' not present in features");
        }
        for (auto& t : ds.tasks) {
            std::vector<std::string> missing;
            for (std::size_t r = 0; r < canonical_ids.size(); ++r) {
                auto it = scores.find({t.name, canonical_ids[r]});
                if (it == scores.end()) {
                    missing.push_back(canonical_ids[r]);
                    continue;
                }
                t.Y(static_cast<Eigen::Index>(r)) = it->second;
            }
            if (!missing.empty()) {
                std::string msg = scores_path + ": task '" + t.name + "' missing scores for ids:";
                for (const auto& id : missing) msg += " " + id;
                throw alignment_error(msg);
            }
        }
    }

    // Raters: header id,task,rater,score; Y becomes the per-sample rater mean.
    if (raters_path) {
        auto table = csv::read_table(*raters_path);
        const auto ci = detail::column_index(table, "id");
        const auto ct = detail::column_index(table, "task");
        const auto cs = detail::column_index(table, "score");
        std::map<std::string, std::map<std::string, std::vector<double>>> by_task;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            if (!canonical_set.count(row[ci]))
                throw alignment_error(*raters_path + ": id '" + row[ci] + "' not present in features");
            by_task[row[ct]][row[ci]].push_back(csv::parse_double(row[cs], table.path, table.linenos[r]));
        }
        for (auto& t : ds.tasks) {
            auto it = by_task.find(t.name);
            if (it == by_task.end()) continue;
            std::vector<std::string> missing;
            t.raters.emplace();
            for (std::size_t r = 0; r < canonical_ids.size(); ++r) {
                auto sit = it->second.find(canonical_ids[r]);
                if (sit == it->second.end()) {
                    missing.push_back(canonical_ids[r]);
                    continue;
                }
                const auto& v = sit->second;
                t.raters->push_back(v);
                t.Y(static_cast<Eigen::Index>(r)) =
                    std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            }
            if (!missing.empty()) {
                std::string msg = *raters_path + ": task '" + t.name + "' missing rater rows for ids:";
                for (const auto& id : missing) msg += " " + id;
                throw alignment_error(msg);
            }
        }
    }

    ds.check();
    return ds;
}

struct FilterResult {
    MultiTaskDataset dataset;
    bool all_removed = false;  // every sample matched the excluded score
};

/// Drops every sample whose score on `task_name` equals `excluded_score`
/// (compared after rounding to 6 decimals). The same rows are removed
/// from every task.
inline FilterResult filter_indeterminate(const MultiTaskDataset& ds, const std::string& task_name,
                                         double excluded_score) {
    const auto& t = ds.task(task_name);
    const auto target = std::round(excluded_score * 1e6);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < t.n(); ++i)
        if (std::round(t.Y(i) * 1e6) != target) keep.push_back(i);
    FilterResult res;
    res.dataset = ds.select(keep);
    res.all_removed = keep.empty();
    return res;
}

/// Deterministic synthetic multi-task problem with known ground truth.
/// Edges in the spec force the joined tasks to share a coefficient column.
inline std::pair<MultiTaskDataset, CoefficientMatrix> generate_synthetic(const SyntheticSpec& spec) {
    spec.check();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto nnz_rows = static_cast<Eigen::Index>(
        std::ceil(spec.sparsity * static_cast<double>(spec.d)));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(spec.d));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(static_cast<std::size_t>(nnz_rows));

    // Union-find over edges: connected tasks share one ground-truth column.
    std::vector<int> parent(static_cast<std::size_t>(spec.M));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
        return x;
    };
    for (auto [a, b] : spec.edges) parent[static_cast<std::size_t>(find(a))] = find(b);

    CoefficientMatrix truth;
    truth.values = Matrix::Zero(spec.d, spec.M);
    std::map<int, Vector> rep_column;
    for (int m = 0; m < spec.M; ++m) {
        const int root = find(m);
        auto it = rep_column.find(root);
        if (it == rep_column.end()) {
            Vector w = Vector::Zero(spec.d);
            for (auto r : rows) w(r) = gauss(rng);
            it = rep_column.emplace(root, std::move(w)).first;
        }
        truth.values.col(m) = it->second;
        truth.task_names.push_back("task" + std::to_string(m));
    }

    MultiTaskDataset ds;
    for (int m = 0; m < spec.M; ++m) {
        TaskDataset t;
        t.task_id = m;
        t.name = truth.task_names[static_cast<std::size_t>(m)];
        t.X.resize(spec.n, spec.d);
        for (Eigen::Index i = 0; i < spec.n; ++i)
            for (Eigen::Index j = 0; j < spec.d; ++j) t.X(i, j) = gauss(rng);
        t.Y = t.X * truth.values.col(m);
        if (spec.noise_sigma > 0.0)
            for (Eigen::Index i = 0; i < spec.n; ++i) t.Y(i) += spec.noise_sigma * gauss(rng);
        if (m == 0)
            for (Eigen::Index i = 0; i < spec.n; ++i)
                t.sample_ids.push_back("s" + std::to_string(i));
        else
            t.sample_ids = ds.tasks.front().sample_ids;
        ds.tasks.push_back(std::move(t));
    }
    return {std::move(ds), std::move(truth)};
}

namespace detail {

inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

/// Writes the dataset back out in the load_multitask_dataset schemas:
/// <task>.csv per task, scores.csv, and raters.csv when rater data exists.
inline void save_multitask_dataset(const MultiTaskDataset& ds, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    for (const auto& t : ds.tasks) {
        const auto path = (fs::path(out_dir) / (t.name + ".csv")).string();
        std::ofstream out(path);
        if (!out) throw io_error("cannot write " + path);
        out << "id";
        for (Eigen::Index j = 0; j < t.d(); ++j) out << ",f" << j;
        out << "\n";
        for (Eigen::Index i = 0; i < t.n(); ++i) {
            out << t.sample_ids[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < t.d(); ++j) out << "," << detail::format_full(t.X(i, j));
            out << "\n";
        }
    }
    {
        const auto path = (fs::path(out_dir) / "scores.csv").string();
        std::ofstream out(path);
        if (!out) throw io_error("cannot write " + path);
        out << "id,task,score\n";
        for (const auto& t : ds.tasks)
            for (Eigen::Index i = 0; i < t.n(); ++i)
                out << t.sample_ids[static_cast<std::size_t>(i)] << "," << t.name << ","
                    << detail::format_full(t.Y(i)) << "\n";
    }
    bool any_raters = false;
    for (const auto& t : ds.tasks)
        if (t.raters) any_raters = true;
    if (any_raters) {
        const auto path = (fs::path(out_dir) / "raters.csv").string();
        std::ofstream out(path);
        if (!out) throw io_error("cannot write " + path);
        out << "id,task,rater,score\n";
        for (const auto& t : ds.tasks) {
            if (!t.raters) continue;
            for (Eigen::Index i = 0; i < t.n(); ++i) {
                const auto& rs = (*t.raters)[static_cast<std::size_t>(i)];
                for (std::size_t r = 0; r < rs.size(); ++r)
                    out << t.sample_ids[static_cast<std::size_t>(i)] << "," << t.name << ","
                        << r << "," << detail::format_full(rs[r]) << "\n";
            }
        }
    }
}

}  // namespace mtsr
