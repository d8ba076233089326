#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtsr/dataset.hpp"
#include "mtsr/errors.hpp"
#include "mtsr/models.hpp"
#include "mtsr/task_graph.hpp"
#include "mtsr/types.hpp"

namespace mtsr {

struct FoldMetrics {
    int fold_index = 0;
    double accuracy = 0.0;       // fraction within +/- threshold 1
    double mean_abs_diff = 0.0;
};

struct EvalReport {
    std::vector<FoldMetrics> per_fold;
    double aggregate_accuracy = 0.0;       // unweighted mean over folds
    double aggregate_mean_abs_diff = 0.0;
    std::vector<std::pair<double, double>> curve;  // (threshold, mean accuracy over folds)
    double pooled_accuracy = 0.0;          // over all held-out predictions
    double pooled_mean_abs_diff = 0.0;
};

/// Fraction of predictions with |pred - truth| <= threshold (inclusive).
inline double within_threshold_accuracy(const Vector& pred, const Vector& truth, double threshold) {
    if (pred.size() == 0) throw invalid_input("within_threshold_accuracy: empty vectors");
    if (pred.size() != truth.size())
        throw dimension_error("within_threshold_accuracy: length mismatch");
    if (threshold < 0) throw invalid_input("within_threshold_accuracy: threshold must be >= 0");
    // tiny slack so boundary cases behave as in exact arithmetic
    const double cutoff = threshold * (1.0 + 1e-12) + 1e-12;
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i)
        if (std::abs(pred(i) - truth(i)) <= cutoff) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

inline double mean_abs_diff(const Vector& pred, const Vector& truth) {
    if (pred.size() == 0) throw invalid_input("mean_abs_diff: empty vectors");
    if (pred.size() != truth.size()) throw dimension_error("mean_abs_diff: length mismatch");
    return (pred - truth).cwiseAbs().mean();
}

inline std::vector<std::pair<double, double>> accuracy_curve(const Vector& pred, const Vector& truth,
                                                             const std::vector<double>& thresholds) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
        throw invalid_input("accuracy_curve: thresholds must be sorted ascending");
    std::vector<std::pair<double, double>> curve;
    for (double t : thresholds) curve.emplace_back(t, within_threshold_accuracy(pred, truth, t));
    return curve;
}

/// Default threshold grid: 0.1 to 2.0 in steps of 0.1.
inline std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int i = 1; i <= 20; ++i) t.push_back(0.1 * i);
    return t;
}

/// Shuffled k-fold partition of [0, n); fold sizes differ by at most 1.
inline std::vector<std::vector<Eigen::Index>> kfold_split(Eigen::Index n, int k, std::uint64_t seed) {
    if (k < 1 || static_cast<Eigen::Index>(k) > n)
        throw invalid_input("kfold_split: need 1 <= k <= n");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(k));
    const auto base = n / k;
    const auto extra = n % k;
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const auto size = base + (f < extra ? 1 : 0);
        for (Eigen::Index i = 0; i < size; ++i) folds[static_cast<std::size_t>(f)].push_back(perm[pos++]);
    }
    return folds;
}

struct CvOptions {
    std::optional<TaskGraph> graph;   // empty -> estimate from training folds
    double structure_lambda = 0.0;    // <= 0 -> default_lambda on training data
    double corr_threshold = 0.9;
    bool standardize = false;
    std::vector<double> thresholds = default_thresholds();
};

/// K-fold cross validation of the graph-regularized fit on one target task.
/// Graph estimation and standardization use training folds only.
inline EvalReport run_cv(const MultiTaskDataset& ds, const Hyperparams& hp, const SolverConfig& cfg,
                         const std::string& target_task, int k, std::uint64_t seed,
                         const CvOptions& opt = {}) {
    ds.check();
    ds.task(target_task);  // validates the name
    const auto folds = kfold_split(ds.n(), k, seed);

    EvalReport report;
    std::vector<std::vector<double>> fold_curves;
    std::vector<double> pooled_pred, pooled_truth;

    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<char> in_test(static_cast<std::size_t>(ds.n()), 0);
        for (auto i : folds[f]) in_test[static_cast<std::size_t>(i)] = 1;
        std::vector<Eigen::Index> train_idx;
        for (Eigen::Index i = 0; i < ds.n(); ++i)
            if (!in_test[static_cast<std::size_t>(i)]) train_idx.push_back(i);

        auto train = ds.select(train_idx);
        auto test = ds.select(folds[f]);

        std::vector<Standardizer> scalers;
        if (opt.standardize) {
            for (auto& t : train.tasks) {
                scalers.push_back(Standardizer::fit(t.X));
                t.X = scalers.back().transform(t.X);
            }
        }

        TaskGraph g;
        if (opt.graph) {
            g = *opt.graph;
        } else {
            const double lam =
                opt.structure_lambda > 0 ? opt.structure_lambda : default_lambda(train);
            g = estimate_structure(train, lam, opt.corr_threshold, cfg);
        }

        auto sol = graph_sparse_mtl_fit(train, g, hp, cfg);
        CoefficientMatrix W;
        W.values = sol.W;
        for (const auto& t : train.tasks) W.task_names.push_back(t.name);

        const auto m = W.task_index(target_task);
        const auto& test_task = test.task(target_task);
        Matrix Xt = test_task.X;
        if (opt.standardize) Xt = scalers[static_cast<std::size_t>(m)].transform(Xt);
        Vector pred = Xt * W.values.col(m);
        const Vector& truth = test_task.Y;

        FoldMetrics fm;
        fm.fold_index = static_cast<int>(f);
        fm.accuracy = within_threshold_accuracy(pred, truth, 1.0);
        fm.mean_abs_diff = mean_abs_diff(pred, truth);
        report.per_fold.push_back(fm);

        auto curve = accuracy_curve(pred, truth, opt.thresholds);
        std::vector<double> acc;
        for (auto& [t, a] : curve) acc.push_back(a);
        fold_curves.push_back(std::move(acc));

        for (Eigen::Index i = 0; i < pred.size(); ++i) {
            pooled_pred.push_back(pred(i));
            pooled_truth.push_back(truth(i));
        }
    }

    const auto nf = static_cast<double>(report.per_fold.size());
    for (const auto& fm : report.per_fold) {
        report.aggregate_accuracy += fm.accuracy;
        report.aggregate_mean_abs_diff += fm.mean_abs_diff;
    }
    report.aggregate_accuracy /= nf;
    report.aggregate_mean_abs_diff /= nf;
    for (std::size_t t = 0; t < opt.thresholds.size(); ++t) {
        double mean = 0.0;
        for (const auto& c : fold_curves) mean += c[t];
        report.curve.emplace_back(opt.thresholds[t], mean / nf);
    }
    Vector pp = Eigen::Map<Vector>(pooled_pred.data(), static_cast<Eigen::Index>(pooled_pred.size()));
    Vector pt = Eigen::Map<Vector>(pooled_truth.data(), static_cast<Eigen::Index>(pooled_truth.size()));
    report.pooled_accuracy = within_threshold_accuracy(pp, pt, 1.0);
    report.pooled_mean_abs_diff = mean_abs_diff(pp, pt);
    return report;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["per_fold"] = nlohmann::json::array();
    for (const auto& fm : r.per_fold)
        j["per_fold"].push_back({{"fold", fm.fold_index},
                                 {"accuracy", fm.accuracy},
                                 {"mean_abs_diff", fm.mean_abs_diff}});
    j["aggregate_accuracy"] = r.aggregate_accuracy;
    j["aggregate_mean_abs_diff"] = r.aggregate_mean_abs_diff;
    j["pooled_accuracy"] = r.pooled_accuracy;
    j["pooled_mean_abs_diff"] = r.pooled_mean_abs_diff;
    j["curve"] = nlohmann::json::array();
    for (auto [t, a] : r.curve) j["curve"].push_back({{"threshold", t}, {"accuracy", a}});
    return j;
}

inline void save_curve_csv(const std::vector<std::pair<double, double>>& curve,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << "threshold,accuracy\n";
    char buf[80];
    for (auto [t, a] : curve) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", t, a);
        out << buf;
    }
}

}  // namespace mtsr
