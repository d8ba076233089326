#include <catch2/catch_amalgamated.hpp>

#include <Eigen/SVD>
#include <filesystem>
#include <random>

#include "mtsr/consistency.hpp"
#include "mtsr/dataset.hpp"
#include "mtsr/models.hpp"
#include "oracle_lasso.hpp"

using namespace mtsr;

namespace {

SolverConfig tight() {
    SolverConfig cfg;
    cfg.tol = 1e-30;  // run to numerical stall
    cfg.max_iters = 100000;
    return cfg;
}

MultiTaskDataset random_dataset(Eigen::Index n, Eigen::Index d, Eigen::Index M,
                                std::uint64_t seed, bool with_raters = false) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> score(1.0, 5.0);
    std::uniform_int_distribution<int> nraters(1, 4);
    MultiTaskDataset ds;
    for (Eigen::Index m = 0; m < M; ++m) {
        TaskDataset t;
        t.task_id = static_cast<int>(m);
        t.name = "task" + std::to_string(m);
        t.X.resize(n, d);
        t.Y.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            t.Y(i) = g(rng);
            for (Eigen::Index j = 0; j < d; ++j) t.X(i, j) = g(rng);
        }
        for (Eigen::Index i = 0; i < n; ++i) t.sample_ids.push_back("s" + std::to_string(i));
        if (with_raters) {
            t.raters.emplace();
            for (Eigen::Index i = 0; i < n; ++i) {
                std::vector<double> rs(static_cast<std::size_t>(nraters(rng)));
                for (auto& r : rs) r = score(rng);
                t.raters->push_back(rs);
            }
        }
        ds.tasks.push_back(std::move(t));
    }
    return ds;
}

}  // namespace

TEST_CASE("lasso_fit examples") {
    SECTION("orthonormal design closed form") {
        Matrix X = Matrix::Identity(2, 2);
        Vector y(2);
        y << 3.0, 0.2;
        Vector w = lasso_fit(X, y, 1.0, tight());
        CHECK_THAT(w(0), Catch::Matchers::WithinAbs(2.5, 1e-8));
        CHECK(w(1) == 0.0);
    }
    SECTION("lambda = 0 reduces to the linear solve") {
        std::mt19937_64 rng(12);
        std::normal_distribution<double> g;
        Matrix X(5, 5);
        Vector y(5);
        for (Eigen::Index i = 0; i < 5; ++i) {
            y(i) = g(rng);
            for (Eigen::Index j = 0; j < 5; ++j) X(i, j) = g(rng);
        }
        X += 3.0 * Matrix::Identity(5, 5);  // keep the instance well conditioned
        Vector w = lasso_fit(X, y, 0.0, tight());
        Vector direct = X.colPivHouseholderQr().solve(y);
        CHECK((w - direct).cwiseAbs().maxCoeff() < 1e-8);
    }
    SECTION("lambda beyond 2||X^T y||_inf forces the zero solution") {
        std::mt19937_64 rng(13);
        std::normal_distribution<double> g;
        Matrix X(8, 4);
        Vector y(8);
        for (Eigen::Index i = 0; i < 8; ++i) {
            y(i) = g(rng);
            for (Eigen::Index j = 0; j < 4; ++j) X(i, j) = g(rng);
        }
        const double lambda_max = 2.0 * (X.transpose() * y).cwiseAbs().maxCoeff();
        CHECK(lasso_fit(X, y, lambda_max * 1.001, tight()).isZero());
        CHECK(!lasso_fit(X, y, lambda_max * 0.5, tight()).isZero());
    }
    SECTION("empty data") {
        CHECK_THROWS_AS(lasso_fit(Matrix::Zero(0, 3), Vector::Zero(0), 1.0), invalid_input);
    }
}

TEST_CASE("trace_mtl_fit") {
    SyntheticSpec spec;
    spec.n = 40;
    spec.d = 10;
    spec.M = 3;
    spec.sparsity = 0.5;
    spec.seed = 77;
    auto [ds, truth] = generate_synthetic(spec);

    SECTION("rho = 0 reduces to per-task least squares") {
        auto W = trace_mtl_fit(ds, 0.0, tight());
        for (const auto& t : ds.tasks) {
            Vector direct = t.X.colPivHouseholderQr().solve(t.Y);
            CHECK((W.values.col(t.task_id) - direct).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
    SECTION("large enough rho collapses W to zero") {
        double rho = 1.0;
        bool zeroed = false;
        for (int i = 0; i < 24 && !zeroed; ++i, rho *= 2.0)
            zeroed = trace_mtl_fit(ds, rho, tight()).values.isZero();
        CHECK(zeroed);
    }
    SECTION("rank-1 ground truth with moderate rho gives near-rank-1 W") {
        SyntheticSpec shared = spec;
        shared.edges = {{0, 1}, {1, 2}};  // all tasks share one column
        auto [ds1, truth1] = generate_synthetic(shared);
        auto W = trace_mtl_fit(ds1, 20.0, tight());
        Eigen::BDCSVD<Matrix> svd(W.values);
        REQUIRE(svd.singularValues()(0) > 0);
        CHECK(svd.singularValues()(1) / svd.singularValues()(0) < 0.01);
    }
    SECTION("unequal feature dimensions are rejected") {
        auto bad = ds;
        bad.tasks[1].X = Matrix::Zero(40, 7);
        CHECK_THROWS_AS(trace_mtl_fit(bad, 1.0), dimension_error);
    }
}

TEST_CASE("graph_sparse_mtl_fit") {
    SyntheticSpec spec;
    spec.n = 40;
    spec.d = 10;
    spec.M = 3;
    spec.sparsity = 0.5;
    spec.edges = {{0, 1}};
    spec.seed = 19;
    auto [ds, truth] = generate_synthetic(spec);
    auto g = structure_matrix(3, {{0, 1}});

    SECTION("rho1 = rho2 = 0 reduces to per-task least squares") {
        Hyperparams hp;
        auto sol = graph_sparse_mtl_fit(ds, g, hp, tight());
        for (const auto& t : ds.tasks) {
            Vector direct = t.X.colPivHouseholderQr().solve(t.Y);
            CHECK((sol.W.col(t.task_id) - direct).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
    SECTION("large rho2 zeroes W; objective is the target energy") {
        double total_energy = 0.0;
        double lambda_max = 0.0;
        for (const auto& t : ds.tasks) {
            total_energy += t.Y.squaredNorm();
            lambda_max = std::max(lambda_max, 2.0 * (t.X.transpose() * t.Y).cwiseAbs().maxCoeff());
        }
        Hyperparams hp;
        hp.rho2 = lambda_max * 1.001;
        auto sol = graph_sparse_mtl_fit(ds, g, hp, tight());
        CHECK(sol.W.isZero());
        CHECK_THAT(sol.final_objective(), Catch::Matchers::WithinRel(total_energy, 1e-12));
    }
    SECTION("graph penalty at the solution shrinks as rho1 grows") {
        Hyperparams hp;
        hp.rho2 = 0.001;
        double prev = std::numeric_limits<double>::infinity();
        for (double rho1 : {1.0, 10.0, 100.0, 1000.0}) {
            hp.rho1 = rho1;
            auto sol = graph_sparse_mtl_fit(ds, g, hp, tight());
            const double pen = graph_penalty(sol.W, g);
            CHECK(pen <= prev + 1e-10);
            prev = pen;
            if (rho1 == 1000.0) {
                // noiseless shared truth: connected columns nearly coincide
                CHECK((sol.W.col(0) - sol.W.col(1)).norm() / sol.W.col(0).norm() < 0.01);
            }
        }
    }
    SECTION("psi requires rater data") {
        Hyperparams hp;
        hp.psi_enabled = true;
        CHECK_THROWS_AS(graph_sparse_mtl_fit(ds, g, hp), invalid_input);
    }
}

TEST_CASE("objective_value") {
    auto ds = random_dataset(6, 4, 2, 42);
    auto g = structure_matrix(2, {{0, 1}});
    Hyperparams hp;
    hp.rho1 = 0.7;
    hp.rho2 = 0.3;

    SECTION("zero W isolates the target energy") {
        auto terms = objective_value(Matrix::Zero(4, 2), ds, g, hp);
        double energy = 0.0;
        for (const auto& t : ds.tasks) energy += t.Y.squaredNorm();
        CHECK_THAT(terms.loss, Catch::Matchers::WithinRel(energy, 1e-12));
        CHECK(terms.graph == 0.0);
        CHECK(terms.sparsity == 0.0);
    }
    SECTION("single task with an empty graph equals the lasso objective") {
        MultiTaskDataset one;
        one.tasks = {ds.tasks[0]};
        auto empty = structure_matrix(1, {});
        Hyperparams hp1;
        hp1.rho2 = 0.3;
        Matrix W = Matrix::Random(4, 1);
        auto terms = objective_value(W, one, empty, hp1);
        const double lasso_obj = oracle::lasso_objective(ds.tasks[0].X, ds.tasks[0].Y, W.col(0), 0.3);
        CHECK_THAT(terms.total(), Catch::Matchers::WithinRel(lasso_obj, 1e-12));
    }
    SECTION("decomposition sums to the total") {
        Matrix W = Matrix::Random(4, 2);
        auto terms = objective_value(W, ds, g, hp);
        CHECK_THAT(terms.total(), Catch::Matchers::WithinRel(terms.loss + terms.graph + terms.sparsity, 1e-12));
        CHECK(terms.graph >= 0.0);
        CHECK(terms.sparsity >= 0.0);
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(objective_value(Matrix::Zero(5, 2), ds, g, hp), dimension_error);
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    // smooth part of the full objective: psi-augmented loss + graph term
    std::mt19937_64 rng(55);
    std::normal_distribution<double> gdist;
    for (int trial = 0; trial < 5; ++trial) {
        auto ds = random_dataset(5, 8, 3, 100 + static_cast<std::uint64_t>(trial), true);
        auto g = structure_matrix(3, {{0, 1}, {1, 2}});
        const double rho1 = 0.9;

        std::vector<Matrix> Xs;
        for (const auto& t : ds.tasks) Xs.push_back(augment_features(t.X, compute_psi(t), true));

        auto smooth = [&](const Matrix& W) {
            double v = 0.0;
            for (Eigen::Index m = 0; m < 3; ++m)
                v += (Xs[static_cast<std::size_t>(m)] * W.col(m) - ds.tasks[static_cast<std::size_t>(m)].Y).squaredNorm();
            return v + rho1 * graph_penalty(W, g);
        };

        Matrix W(8, 3);
        for (Eigen::Index i = 0; i < 8; ++i)
            for (Eigen::Index j = 0; j < 3; ++j) W(i, j) = gdist(rng);

        Matrix analytic(8, 3);
        for (Eigen::Index m = 0; m < 3; ++m)
            analytic.col(m) = 2.0 * Xs[static_cast<std::size_t>(m)].transpose() *
                              (Xs[static_cast<std::size_t>(m)] * W.col(m) - ds.tasks[static_cast<std::size_t>(m)].Y);
        analytic += 2.0 * rho1 * W * g.L;

        const double h = 1e-5;
        Matrix fd(8, 3);
        for (Eigen::Index i = 0; i < 8; ++i)
            for (Eigen::Index j = 0; j < 3; ++j) {
                Matrix Wp = W, Wm = W;
                Wp(i, j) += h;
                Wm(i, j) -= h;
                fd(i, j) = (smooth(Wp) - smooth(Wm)) / (2.0 * h);
            }
        CHECK((analytic - fd).norm() / fd.norm() < 1e-5);
    }
}

TEST_CASE("single-task graph fit reproduces the lasso solution") {
    auto ds = random_dataset(20, 8, 1, 7);
    auto empty = structure_matrix(1, {});
    const double lambda = 0.2;

    Vector w_lasso = lasso_fit(ds.tasks[0].X, ds.tasks[0].Y, lambda, tight());
    Hyperparams hp;
    hp.rho2 = lambda;
    auto sol = graph_sparse_mtl_fit(ds, empty, hp, tight());

    const double f_lasso = oracle::lasso_objective(ds.tasks[0].X, ds.tasks[0].Y, w_lasso, lambda);
    const double f_graph = oracle::lasso_objective(ds.tasks[0].X, ds.tasks[0].Y, sol.W.col(0), lambda);
    CHECK(std::abs(f_lasso - f_graph) < 1e-8);
}

TEST_CASE("nonzero count is non-increasing in rho2") {
    auto ds = random_dataset(25, 15, 2, 23);
    auto g = structure_matrix(2, {{0, 1}});
    Hyperparams hp;
    hp.rho1 = 0.5;
    Eigen::Index prev = std::numeric_limits<Eigen::Index>::max();
    for (double rho2 : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        hp.rho2 = rho2;
        auto sol = graph_sparse_mtl_fit(ds, g, hp, tight());
        const Eigen::Index nnz = (sol.W.array() != 0.0).count();
        CHECK(nnz <= prev);
        prev = nnz;
    }
}

TEST_CASE("objective at the solution never exceeds the zero start") {
    auto ds = random_dataset(10, 12, 3, 91);
    auto g = structure_matrix(3, {{0, 2}});
    Hyperparams hp;
    hp.rho1 = 2.0;
    hp.rho2 = 0.5;
    auto sol = graph_sparse_mtl_fit(ds, g, hp);
    auto at_zero = objective_value(Matrix::Zero(12, 3), ds, g, hp);
    CHECK(sol.final_objective() <= at_zero.total() + 1e-12);
}

TEST_CASE("predict") {
    CoefficientMatrix W;
    W.values = Matrix::Zero(3, 2);
    W.task_names = {"a", "b"};
    W.values.col(1) << 1.5, -2.0, 0.25;

    Vector x = Vector::Zero(3);
    CHECK(predict(W, "a", x) == 0.0);

    x << 0, 1, 0;  // unit basis picks out one coefficient
    CHECK(predict(W, "b", x) == -2.0);

    CHECK_THROWS_AS(predict(W, "zzz", x), invalid_input);
    CHECK_THROWS_AS(predict(W, "a", Vector::Zero(5)), dimension_error);

    SECTION("exact coefficients reproduce noiseless targets") {
        SyntheticSpec spec;
        spec.n = 30;
        spec.d = 6;
        spec.M = 2;
        spec.seed = 3;
        auto [ds, truth] = generate_synthetic(spec);
        for (const auto& t : ds.tasks)
            for (Eigen::Index i = 0; i < t.n(); ++i)
                CHECK_THAT(predict(truth, t.name, t.X.row(i).transpose()),
                           Catch::Matchers::WithinAbs(t.Y(i), 1e-8));
    }
}

TEST_CASE("model JSON round-trip") {
    CoefficientMatrix W;
    W.values = Matrix::Random(4, 2);
    W.task_names = {"malignancy", "texture"};
    Hyperparams hp;
    hp.lambda = 0.125;
    hp.rho1 = 1.5;
    hp.rho2 = 0.25;
    hp.psi_enabled = true;
    std::vector<Standardizer> scalers{Standardizer::fit(Matrix::Random(10, 4)),
                                      Standardizer::fit(Matrix::Random(10, 4))};

    const auto path = (std::filesystem::temp_directory_path() / "mtsr_model_test.json").string();
    save_model_json(W, hp, path, &scalers);
    auto loaded = load_model_json(path);
    std::filesystem::remove(path);

    CHECK(loaded.W.task_names == W.task_names);
    CHECK((loaded.W.values - W.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.hp.rho1 == hp.rho1);
    CHECK(loaded.hp.psi_enabled);
    REQUIRE(loaded.standardizers.has_value());
    CHECK((*loaded.standardizers)[1].mean.isApprox(scalers[1].mean));
}

TEST_CASE("hyperparameter validation") {
    Hyperparams hp;
    hp.rho1 = -1.0;
    CHECK_THROWS_AS(hp.check(), invalid_input);
}
