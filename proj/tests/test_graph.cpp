#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <filesystem>
#include <random>

#include "mtsr/dataset.hpp"
#include "mtsr/models.hpp"
#include "mtsr/task_graph.hpp"

using namespace mtsr;

TEST_CASE("structure_matrix basics") {
    SECTION("single edge") {
        auto g = structure_matrix(2, {{0, 1}});
        Matrix S(2, 1);
        S << 1, -1;
        Matrix L(2, 2);
        L << 1, -1, -1, 1;
        CHECK(g.S.isApprox(S));
        CHECK(g.L.isApprox(L));
    }
    SECTION("complete graph on 3 nodes") {
        auto g = structure_matrix(3, {{0, 1}, {0, 2}, {1, 2}});
        Matrix L(3, 3);
        L << 2, -1, -1, -1, 2, -1, -1, -1, 2;
        CHECK(g.S.rows() == 3);
        CHECK(g.S.cols() == 3);
        CHECK(g.L.isApprox(L));
    }
    SECTION("empty graph") {
        auto g = structure_matrix(4, {});
        CHECK(g.S.cols() == 0);
        CHECK(g.L.isZero());
    }
    SECTION("construction errors") {
        CHECK_THROWS_AS(structure_matrix(3, {{1, 1}}), invalid_input);
        CHECK_THROWS_AS(structure_matrix(3, {{0, 3}}), invalid_input);
        CHECK_THROWS_AS(structure_matrix(3, {{0, 1}, {1, 0}}), invalid_input);
        CHECK_THROWS_AS(structure_matrix(0, {}), invalid_input);
    }
}

TEST_CASE("structure matrix invariants on random graphs") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index M = std::uniform_int_distribution<Eigen::Index>(2, 8)(rng);
        std::vector<std::pair<int, int>> edges;
        for (int a = 0; a < M; ++a)
            for (int b = a + 1; b < M; ++b)
                if (std::bernoulli_distribution(0.4)(rng)) edges.emplace_back(a, b);
        auto g = structure_matrix(M, edges);

        // columns sum to zero with exactly one +1 and one -1
        for (Eigen::Index c = 0; c < g.num_edges(); ++c) {
            CHECK(g.S.col(c).sum() == 0.0);
            CHECK(g.S.col(c).cwiseAbs().sum() == 2.0);
        }
        CHECK((g.L - g.S * g.S.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(g.L.isApprox(g.L.transpose()));
        CHECK(g.L.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
        // PSD with the all-ones vector in the null space
        Eigen::SelfAdjointEigenSolver<Matrix> eig(g.L);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
        CHECK((g.L * Vector::Ones(M)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("graph_penalty examples") {
    auto g = structure_matrix(2, {{0, 1}});
    Matrix W(2, 2);

    W << 1, 1, 2, 2;  // identical columns
    CHECK(graph_penalty(W, g) == 0.0);

    W << 1, 0, 0, 1;
    CHECK_THAT(graph_penalty(W, g), Catch::Matchers::WithinAbs(2.0, 1e-12));

    auto empty = structure_matrix(2, {});
    CHECK(graph_penalty(W, empty) == 0.0);

    CHECK_THROWS_AS(graph_penalty(Matrix::Zero(2, 3), g), dimension_error);
}

TEST_CASE("Frobenius, pairwise and trace forms of the penalty agree") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index M = std::uniform_int_distribution<Eigen::Index>(2, 6)(rng);
        const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(1, 10)(rng);
        std::vector<std::pair<int, int>> edges;
        for (int a = 0; a < M; ++a)
            for (int b = a + 1; b < M; ++b)
                if (std::bernoulli_distribution(0.5)(rng)) edges.emplace_back(a, b);
        auto g = structure_matrix(M, edges);
        Matrix W(d, M);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < M; ++j) W(i, j) = gauss(rng);

        const double frob = graph_penalty(W, g);
        double pairwise = 0.0;
        for (auto [a, b] : g.edges) pairwise += (W.col(a) - W.col(b)).squaredNorm();
        const double trace_form = (W * g.L * W.transpose()).trace();

        CHECK_THAT(pairwise, Catch::Matchers::WithinAbs(frob, 1e-10));
        CHECK_THAT(trace_form, Catch::Matchers::WithinAbs(frob, 1e-10));
        CHECK(frob >= 0.0);
    }
}

TEST_CASE("estimate_structure recovers a planted shared pair") {
    SyntheticSpec spec;
    spec.n = 60;
    spec.d = 20;
    spec.M = 3;
    spec.sparsity = 0.3;
    spec.edges = {{0, 1}};
    spec.noise_sigma = 0.0;
    spec.seed = 21;
    auto [ds, truth] = generate_synthetic(spec);

    SolverConfig cfg;
    cfg.tol = 1e-10;
    cfg.max_iters = 20000;
    auto g = estimate_structure(ds, 0.01, 0.9, cfg);
    CHECK(g.edges == std::vector<std::pair<int, int>>{{0, 1}});

    // oracle check: correlation of the true (shared) columns is 1
    const Vector u = truth.values.col(0).array() - truth.values.col(0).mean();
    const Vector v = truth.values.col(1).array() - truth.values.col(1).mean();
    CHECK_THAT(u.dot(v) / (u.norm() * v.norm()), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("estimate_structure edge cases") {
    SyntheticSpec spec;
    spec.n = 30;
    spec.d = 8;
    spec.M = 1;
    spec.seed = 3;
    auto [one_task, truth1] = generate_synthetic(spec);
    CHECK(estimate_structure(one_task, 0.01, 0.9).edges.empty());

    spec.M = 3;
    auto [ds, truth] = generate_synthetic(spec);
    SECTION("threshold 0 yields the complete graph") {
        auto g = estimate_structure(ds, 0.01, 0.0);
        CHECK(g.num_edges() == 3);
    }
    SECTION("huge lambda zeroes all coefficients and records warnings") {
        auto g = estimate_structure(ds, 1e9, 0.0);
        CHECK(g.edges.empty());
        CHECK(g.warnings.size() == 3);
    }
    SECTION("parameter validation") {
        CHECK_THROWS_AS(estimate_structure(ds, 0.0, 0.9), invalid_input);
        CHECK_THROWS_AS(estimate_structure(ds, 0.1, 1.5), invalid_input);
    }
}

TEST_CASE("estimate_structure is consistent under task relabeling") {
    SyntheticSpec spec;
    spec.n = 50;
    spec.d = 15;
    spec.M = 3;
    spec.edges = {{0, 2}};
    spec.seed = 9;
    auto [ds, truth] = generate_synthetic(spec);

    SolverConfig cfg;
    cfg.tol = 1e-10;
    cfg.max_iters = 20000;
    auto g = estimate_structure(ds, 0.01, 0.9, cfg);

    MultiTaskDataset relabeled;
    relabeled.tasks = {ds.tasks[2], ds.tasks[0], ds.tasks[1]};
    for (auto& t : relabeled.tasks) t.name = "t" + std::to_string(&t - relabeled.tasks.data());
    auto g2 = estimate_structure(relabeled, 0.01, 0.9, cfg);

    // edge (0,2) maps to (old 2 -> new 0, old 0 -> new 1) = (0,1)
    CHECK(g.edges == std::vector<std::pair<int, int>>{{0, 2}});
    CHECK(g2.edges == std::vector<std::pair<int, int>>{{0, 1}});
}

TEST_CASE("graph JSON round-trip") {
    auto g = structure_matrix(4, {{0, 2}, {1, 3}});
    const auto path = (std::filesystem::temp_directory_path() / "mtsr_graph_test.json").string();
    save_graph_json(g, path);
    auto g2 = load_graph_json(path);
    CHECK(g2.M == 4);
    CHECK(g2.edges == g.edges);
    CHECK(g2.L.isApprox(g.L));
    std::filesystem::remove(path);
}
