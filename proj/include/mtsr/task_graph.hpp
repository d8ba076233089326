#pragma once

#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtsr/errors.hpp"
#include "mtsr/types.hpp"

namespace mtsr {

/// Task-relation graph. S is the edge-incidence matrix (M x |E|, one
/// column per edge with +1 at the smaller endpoint and -1 at the larger),
/// L = S S^T is the graph Laplacian.
struct TaskGraph {
    Eigen::Index M = 0;
    std::vector<std::pair<int, int>> edges;  // (a, b) with a < b
    Matrix S;
    Matrix L;
    std::vector<std::string> warnings;  // e.g. tasks excluded from estimation

    Eigen::Index num_edges() const { return static_cast<Eigen::Index>(edges.size()); }
};

inline TaskGraph structure_matrix(Eigen::Index M, std::vector<std::pair<int, int>> edges) {
    if (M < 1) throw invalid_input("structure_matrix: M must be >= 1");
    std::set<std::pair<int, int>> seen;
    for (auto& [a, b] : edges) {
        if (a == b) throw invalid_input("structure_matrix: self-loop at task " + std::to_string(a));
        if (a < 0 || b < 0 || a >= M || b >= M)
            throw invalid_input("structure_matrix: edge endpoint out of range");
        if (a > b) std::swap(a, b);
        if (!seen.insert({a, b}).second)
            throw invalid_input("structure_matrix: duplicate edge (" + std::to_string(a) + "," +
                                std::to_string(b) + ")");
    }
    TaskGraph g;
    g.M = M;
    g.edges = std::move(edges);
    g.S = Matrix::Zero(M, g.num_edges());
    for (Eigen::Index e = 0; e < g.num_edges(); ++e) {
        g.S(g.edges[static_cast<std::size_t>(e)].first, e) = 1.0;
        g.S(g.edges[static_cast<std::size_t>(e)].second, e) = -1.0;
    }
    g.L = g.S * g.S.transpose();
    return g;
}

/// ||W S||_F^2 = sum over edges of ||W_a - W_b||_2^2, with W stored d x M.
inline double graph_penalty(const Matrix& W, const TaskGraph& g) {
    if (W.cols() != g.M)
        throw dimension_error("graph_penalty: W has " + std::to_string(W.cols()) +
                              " columns, graph has " + std::to_string(g.M) + " nodes");
    return (W * g.S).squaredNorm();
}

inline void save_graph_json(const TaskGraph& g, const std::string& path) {
    nlohmann::json j;
    j["M"] = g.M;
    j["edges"] = nlohmann::json::array();
    for (auto [a, b] : g.edges) j["edges"].push_back({a, b});
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline TaskGraph load_graph_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path, 0, e.what());
    }
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    return structure_matrix(j.at("M").get<Eigen::Index>(), std::move(edges));
}

}  // namespace mtsr
