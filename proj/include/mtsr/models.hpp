#pragma once

#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtsr/apg.hpp"
#include "mtsr/consistency.hpp"
#include "mtsr/dataset.hpp"
#include "mtsr/prox.hpp"
#include "mtsr/task_graph.hpp"
#include "mtsr/types.hpp"

namespace mtsr {

struct Hyperparams {
    double lambda = 0.0;  // l1 weight for the single-task objective
    double rho = 0.0;     // trace-norm weight
    double rho1 = 0.0;    // graph-penalty weight
    double rho2 = 0.0;    // l1 weight in the graph objective
    bool psi_enabled = false;

    void check() const {
        if (lambda < 0 || rho < 0 || rho1 < 0 || rho2 < 0)
            throw invalid_input("hyperparameters must be nonnegative");
    }
};

inline double nuclear_norm(const Matrix& W) {
    Eigen::BDCSVD<Matrix> svd(W);
    return svd.singularValues().sum();
}

/// Smallest l1 weight that forces the all-zero lasso solution is
/// 2*||X^T Y||_inf; the default hyperparameter is 1% of that.
inline double default_lambda(const Matrix& X, const Vector& Y) {
    return 0.01 * 2.0 * (X.transpose() * Y).cwiseAbs().maxCoeff();
}

inline double default_lambda(const MultiTaskDataset& ds) {
    double v = 0.0;
    for (const auto& t : ds.tasks) v = std::max(v, default_lambda(t.X, t.Y));
    return v;
}

/// min_w ||Xw - Y||_2^2 + lambda ||w||_1
inline Vector lasso_fit(const Matrix& X, const Vector& Y, double lambda,
                        const SolverConfig& cfg = {}) {
    if (X.rows() == 0) throw invalid_input("lasso_fit: empty data");
    if (X.rows() != Y.size()) throw dimension_error("lasso_fit: X rows != Y length");
    if (lambda < 0) throw invalid_input("lasso_fit: lambda must be >= 0");

    auto smooth = [&](const Matrix& w) { return (X * w - Y).squaredNorm(); };
    auto grad = [&](const Matrix& w) -> Matrix { return 2.0 * X.transpose() * (X * w - Y); };
    auto prox = [&](const Matrix& v, double step) -> Matrix {
        return soft_threshold(v, step * lambda);
    };
    auto nonsmooth = [&](const Matrix& w) { return lambda * w.cwiseAbs().sum(); };

    const Matrix w0 = Matrix::Zero(X.cols(), 1);
    auto sol = apg_solve(smooth, grad, prox, nonsmooth, w0, cfg);
    return sol.W.col(0);
}

/// min_W sum_i ||X_i W_i - Y_i||_2^2 + rho ||W||_*
inline CoefficientMatrix trace_mtl_fit(const MultiTaskDataset& ds, double rho,
                                       const SolverConfig& cfg = {}) {
    ds.check();
    if (!ds.uniform_d()) throw dimension_error("trace_mtl_fit: tasks must share feature dimension");
    if (rho < 0) throw invalid_input("trace_mtl_fit: rho must be >= 0");
    const auto d = ds.tasks.front().d();
    const auto M = ds.num_tasks();

    auto smooth = [&](const Matrix& W) {
        double v = 0.0;
        for (Eigen::Index m = 0; m < M; ++m) {
            const auto& t = ds.tasks[static_cast<std::size_t>(m)];
            v += (t.X * W.col(m) - t.Y).squaredNorm();
        }
        return v;
    };
    auto grad = [&](const Matrix& W) -> Matrix {
        Matrix G(d, M);
        for (Eigen::Index m = 0; m < M; ++m) {
            const auto& t = ds.tasks[static_cast<std::size_t>(m)];
            G.col(m) = 2.0 * t.X.transpose() * (t.X * W.col(m) - t.Y);
        }
        return G;
    };
    auto prox = [&](const Matrix& V, double step) -> Matrix {
        return singular_value_threshold(V, step * rho);
    };
    auto nonsmooth = [&](const Matrix& W) { return rho * nuclear_norm(W); };

    auto sol = apg_solve(smooth, grad, prox, nonsmooth, Matrix::Zero(d, M), cfg);
    CoefficientMatrix W;
    W.values = std::move(sol.W);
    for (const auto& t : ds.tasks) W.task_names.push_back(t.name);
    return W;
}

namespace detail {

/// Psi-augmented design matrices for the graph objective; identity when
/// psi is disabled.
inline std::vector<Matrix> augmented_designs(const MultiTaskDataset& ds, bool psi_enabled) {
    std::vector<Matrix> Xs;
    for (const auto& t : ds.tasks) {
        if (psi_enabled) {
            Xs.push_back(augment_features(t.X, compute_psi(t), true));
        } else {
            Xs.push_back(t.X);
        }
    }
    return Xs;
}

}  // namespace detail

/// min_W sum_i ||(X_i + Psi_i) W_i - Y_i||_2^2 + rho1 ||W S||_F^2 + rho2 ||W||_1
inline Solution graph_sparse_mtl_fit(const MultiTaskDataset& ds, const TaskGraph& g,
                                     const Hyperparams& hp, const SolverConfig& cfg = {}) {
    ds.check();
    hp.check();
    if (!ds.uniform_d())
        throw dimension_error("graph_sparse_mtl_fit: tasks must share feature dimension");
    if (g.M != ds.num_tasks())
        throw dimension_error("graph_sparse_mtl_fit: graph node count != task count");
    const auto Xs = detail::augmented_designs(ds, hp.psi_enabled);
    const auto d = ds.tasks.front().d();
    const auto M = ds.num_tasks();

    auto smooth = [&](const Matrix& W) {
        double v = 0.0;
        for (Eigen::Index m = 0; m < M; ++m)
            v += (Xs[static_cast<std::size_t>(m)] * W.col(m) - ds.tasks[static_cast<std::size_t>(m)].Y)
                     .squaredNorm();
        return v + hp.rho1 * (W * g.S).squaredNorm();
    };
    auto grad = [&](const Matrix& W) -> Matrix {
        Matrix G(d, M);
        for (Eigen::Index m = 0; m < M; ++m) {
            const auto& Xm = Xs[static_cast<std::size_t>(m)];
            G.col(m) = 2.0 * Xm.transpose() * (Xm * W.col(m) - ds.tasks[static_cast<std::size_t>(m)].Y);
        }
        G += 2.0 * hp.rho1 * W * g.L;
        return G;
    };
    auto prox = [&](const Matrix& V, double step) -> Matrix {
        return soft_threshold(V, step * hp.rho2);
    };
    auto nonsmooth = [&](const Matrix& W) { return hp.rho2 * W.cwiseAbs().sum(); };

    return apg_solve(smooth, grad, prox, nonsmooth, Matrix::Zero(d, M), cfg);
}

struct ObjectiveTerms {
    double loss = 0.0;      // sum of squared residuals on (psi-augmented) features
    double graph = 0.0;     // rho1 * ||W S||_F^2
    double sparsity = 0.0;  // rho2 * ||W||_1
    double total() const { return loss + graph + sparsity; }
};

inline ObjectiveTerms objective_value(const Matrix& W, const MultiTaskDataset& ds,
                                      const TaskGraph& g, const Hyperparams& hp) {
    ds.check();
    if (W.cols() != ds.num_tasks() || W.rows() != ds.tasks.front().d())
        throw dimension_error("objective_value: W shape does not match dataset");
    const auto Xs = detail::augmented_designs(ds, hp.psi_enabled);
    ObjectiveTerms terms;
    for (Eigen::Index m = 0; m < ds.num_tasks(); ++m)
        terms.loss += (Xs[static_cast<std::size_t>(m)] * W.col(m) -
                       ds.tasks[static_cast<std::size_t>(m)].Y)
                          .squaredNorm();
    terms.graph = hp.rho1 * graph_penalty(W, g);
    terms.sparsity = hp.rho2 * W.cwiseAbs().sum();
    return terms;
}

inline double predict(const CoefficientMatrix& W, const std::string& task_name, const Vector& x) {
    const auto m = W.task_index(task_name);
    if (x.size() != W.d())
        throw dimension_error("predict: feature length " + std::to_string(x.size()) +
                              " != model dimension " + std::to_string(W.d()));
    return x.dot(W.values.col(m));
}

/// Estimates the task graph from data: per-task lasso coefficients,
/// normalized to unit l2 norm, then an edge wherever the absolute Pearson
/// correlation between two tasks' coefficient vectors reaches the threshold.
inline TaskGraph estimate_structure(const MultiTaskDataset& ds, double lambda,
                                    double corr_threshold, const SolverConfig& cfg = {}) {
    ds.check();
    if (!ds.uniform_d())
        throw dimension_error("estimate_structure: tasks must share feature dimension");
    if (!(lambda > 0)) throw invalid_input("estimate_structure: lambda must be > 0");
    if (corr_threshold < 0 || corr_threshold > 1)
        throw invalid_input("estimate_structure: corr_threshold must be in [0,1]");

    const auto M = ds.num_tasks();
    const auto d = ds.tasks.front().d();
    Matrix coef(d, M);
    std::vector<bool> usable(static_cast<std::size_t>(M), true);
    std::vector<std::string> warnings;
    for (Eigen::Index m = 0; m < M; ++m) {
        const auto& t = ds.tasks[static_cast<std::size_t>(m)];
        Vector w = lasso_fit(t.X, t.Y, lambda, cfg);
        const double norm = w.norm();
        if (norm == 0.0) {
            usable[static_cast<std::size_t>(m)] = false;
            warnings.push_back("task '" + t.name + "' has an all-zero lasso coefficient vector; excluded from edges");
        } else {
            w /= norm;
        }
        coef.col(m) = w;
    }

    std::vector<std::pair<int, int>> edges;
    for (Eigen::Index a = 0; a < M; ++a) {
        for (Eigen::Index b = a + 1; b < M; ++b) {
            if (!usable[static_cast<std::size_t>(a)] || !usable[static_cast<std::size_t>(b)]) continue;
            const Vector u = coef.col(a).array() - coef.col(a).mean();
            const Vector v = coef.col(b).array() - coef.col(b).mean();
            const double denom = u.norm() * v.norm();
            if (denom == 0.0) continue;  // constant vector, correlation undefined
            const double corr = u.dot(v) / denom;
            if (std::abs(corr) >= corr_threshold)
                edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
        }
    }
    auto g = structure_matrix(M, std::move(edges));
    g.warnings = std::move(warnings);
    return g;
}

/// Per-column standardization fit on training data only.
struct Standardizer {
    Vector mean;
    Vector stddev;

    static Standardizer fit(const Matrix& X) {
        Standardizer s;
        s.mean = X.colwise().mean();
        s.stddev.resize(X.cols());
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double var = (X.col(j).array() - s.mean(j)).square().mean();
            const double sd = std::sqrt(var);
            s.stddev(j) = sd > 0.0 ? sd : 1.0;
        }
        return s;
    }

    Matrix transform(const Matrix& X) const {
        if (X.cols() != mean.size()) throw dimension_error("Standardizer: dimension mismatch");
        return (X.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
    }

    Vector transform(const Vector& x) const {
        if (x.size() != mean.size()) throw dimension_error("Standardizer: dimension mismatch");
        return (x - mean).cwiseQuotient(stddev);
    }
};

// ---- model serialization -------------------------------------------------

inline nlohmann::json model_to_json(const CoefficientMatrix& W, const Hyperparams& hp,
                                    const std::vector<Standardizer>* standardizers = nullptr) {
    nlohmann::json j;
    j["task_names"] = W.task_names;
    j["d"] = W.d();
    j["columns"] = nlohmann::json::array();
    for (Eigen::Index m = 0; m < W.num_tasks(); ++m) {
        std::vector<double> col(W.values.col(m).data(), W.values.col(m).data() + W.d());
        j["columns"].push_back(col);
    }
    j["hyperparams"] = {{"lambda", hp.lambda}, {"rho", hp.rho},           {"rho1", hp.rho1},
                        {"rho2", hp.rho2},     {"psi_enabled", hp.psi_enabled}};
    if (standardizers) {
        j["standardizers"] = nlohmann::json::array();
        for (const auto& s : *standardizers) {
            std::vector<double> mean(s.mean.data(), s.mean.data() + s.mean.size());
            std::vector<double> sd(s.stddev.data(), s.stddev.data() + s.stddev.size());
            j["standardizers"].push_back({{"mean", mean}, {"stddev", sd}});
        }
    }
    return j;
}

struct LoadedModel {
    CoefficientMatrix W;
    Hyperparams hp;
    std::optional<std::vector<Standardizer>> standardizers;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
    LoadedModel m;
    m.W.task_names = j.at("task_names").get<std::vector<std::string>>();
    const auto d = j.at("d").get<Eigen::Index>();
    const auto& cols = j.at("columns");
    m.W.values.resize(d, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        auto col = cols[c].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(col.size()) != d)
            throw invalid_input("model JSON: column length != d");
        for (Eigen::Index i = 0; i < d; ++i)
            m.W.values(i, static_cast<Eigen::Index>(c)) = col[static_cast<std::size_t>(i)];
    }
    const auto& hp = j.at("hyperparams");
    m.hp.lambda = hp.at("lambda").get<double>();
    m.hp.rho = hp.at("rho").get<double>();
    m.hp.rho1 = hp.at("rho1").get<double>();
    m.hp.rho2 = hp.at("rho2").get<double>();
    m.hp.psi_enabled = hp.at("psi_enabled").get<bool>();
    if (j.contains("standardizers")) {
        m.standardizers.emplace();
        for (const auto& sj : j.at("standardizers")) {
            Standardizer s;
            auto mean = sj.at("mean").get<std::vector<double>>();
            auto sd = sj.at("stddev").get<std::vector<double>>();
            s.mean = Eigen::Map<Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
            s.stddev = Eigen::Map<Vector>(sd.data(), static_cast<Eigen::Index>(sd.size()));
            m.standardizers->push_back(std::move(s));
        }
    }
    return m;
}

inline void save_model_json(const CoefficientMatrix& W, const Hyperparams& hp,
                            const std::string& path,
                            const std::vector<Standardizer>* standardizers = nullptr) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << model_to_json(W, hp, standardizers).dump(2) << "\n";
}

inline LoadedModel load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path, 0, e.what());
    }
    return model_from_json(j);
}

}  // namespace mtsr
