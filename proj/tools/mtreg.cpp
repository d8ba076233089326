// mtreg: multi-task sparse regression runner.
//
// Subcommands: synth, train, predict, evaluate, curve.
// Exit codes: 0 success, 1 usage/precondition, 2 non-convergence, 3 IO.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mtsr/mtsr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNoConverge = 2;
constexpr int kExitIo = 3;

void ensure_writable_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    const auto probe = fs::path(dir) / ".mtreg_probe";
    std::ofstream test(probe);
    if (!test) throw mtsr::io_error("output directory not writable: " + dir);
    test.close();
    fs::remove(probe, ec);
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw mtsr::io_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<std::pair<int, int>> parse_edges(const std::string& spec) {
    std::vector<std::pair<int, int>> edges;
    if (spec.empty()) return edges;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto dash = item.find('-');
        if (dash == std::string::npos)
            throw mtsr::invalid_input("bad edge '" + item + "', expected a-b");
        edges.emplace_back(std::stoi(item.substr(0, dash)), std::stoi(item.substr(dash + 1)));
    }
    return edges;
}

bool parse_on_off(const std::string& v, const std::string& flag) {
    if (v == "on") return true;
    if (v == "off") return false;
    throw mtsr::invalid_input("--" + flag + " must be 'on' or 'off', got '" + v + "'");
}

// Turns a flat JSON config into flags, skipping any key already given on
// the command line (flags override config values).
std::vector<std::string> splice_config(const std::vector<std::string>& args) {
    std::string config_path;
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
        if (args[i] == "--config") config_path = args[i + 1];
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw mtsr::io_error("cannot open config " + config_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw mtsr::invalid_input(std::string("config parse error: ") + e.what());
    }

    std::set<std::string> given(args.begin(), args.end());
    std::vector<std::string> injected;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (given.count("--" + it.key())) continue;
        auto push = [&](const json& v) {
            injected.push_back("--" + it.key());
            if (v.is_string())
                injected.push_back(v.get<std::string>());
            else
                injected.push_back(v.dump());
        };
        if (it.value().is_array())
            for (const auto& v : it.value()) push(v);
        else
            push(it.value());
    }

    // args[0] is the subcommand
    std::vector<std::string> out;
    out.push_back(args.front());
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

struct CommonOpts {
    std::vector<std::string> features;
    std::string scores;
    std::string raters;
    std::string graph = "auto";
    double lambda = 0.0;  // <= 0 -> default rule
    double rho1 = 1.0;
    double rho2 = 0.0;    // <= 0 -> default rule
    std::string psi = "off";
    std::string standardize = "on";
    double corr_threshold = 0.9;
    double exclude_score = std::numeric_limits<double>::quiet_NaN();
    std::string exclude_task;
    int max_iters = 5000;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string config;  // consumed by splice_config; registered so CLI11 accepts it
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_data) {
    auto* f = cmd->add_option("--features", o.features, "feature CSV files, one per task");
    auto* s = cmd->add_option("--scores", o.scores, "scores CSV (id,task,score)");
    if (needs_data) {
        f->required();
        s->required();
    }
    cmd->add_option("--raters", o.raters, "raters CSV (id,task,rater,score)");
    cmd->add_option("--graph", o.graph, "task graph: 'auto' or a JSON file");
    cmd->add_option("--lambda", o.lambda, "l1 weight for structure-estimation lasso (<=0: auto)");
    cmd->add_option("--rho1", o.rho1, "graph penalty weight");
    cmd->add_option("--rho2", o.rho2, "l1 weight of the joint objective (<=0: auto)");
    cmd->add_option("--psi", o.psi, "inconsistency augmentation: on|off");
    cmd->add_option("--standardize", o.standardize, "per-column feature standardization: on|off");
    cmd->add_option("--corr-threshold", o.corr_threshold, "edge threshold on |correlation|");
    cmd->add_option("--exclude-score", o.exclude_score, "drop samples with this score on --exclude-task");
    cmd->add_option("--exclude-task", o.exclude_task, "task whose scores drive --exclude-score");
    cmd->add_option("--max-iters", o.max_iters, "solver iteration cap");
    cmd->add_option("--tol", o.tol, "relative objective-change tolerance");
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--config", o.config, "JSON config file; flags override its values");
}

mtsr::MultiTaskDataset load_data(const CommonOpts& o) {
    std::optional<std::string> raters;
    if (!o.raters.empty()) raters = o.raters;
    auto ds = mtsr::load_multitask_dataset(o.features, o.scores, raters);
    if (!std::isnan(o.exclude_score)) {
        if (o.exclude_task.empty())
            throw mtsr::invalid_input("--exclude-score requires --exclude-task");
        auto res = mtsr::filter_indeterminate(ds, o.exclude_task, o.exclude_score);
        if (res.all_removed) throw mtsr::invalid_input("score filter removed every sample");
        ds = std::move(res.dataset);
    }
    return ds;
}

mtsr::SolverConfig solver_config(const CommonOpts& o) {
    mtsr::SolverConfig cfg;
    cfg.max_iters = o.max_iters;
    cfg.tol = o.tol;
    return cfg;
}

mtsr::Hyperparams hyperparams(const CommonOpts& o, const mtsr::MultiTaskDataset& ds) {
    mtsr::Hyperparams hp;
    const double auto_lambda = mtsr::default_lambda(ds);
    hp.lambda = o.lambda > 0 ? o.lambda : auto_lambda;
    hp.rho1 = o.rho1;
    hp.rho2 = o.rho2 > 0 ? o.rho2 : auto_lambda;
    hp.psi_enabled = parse_on_off(o.psi, "psi");
    return hp;
}

json manifest_json(const CommonOpts& o, const mtsr::Hyperparams& hp) {
    return json{{"features", o.features},
                {"scores", o.scores},
                {"raters", o.raters},
                {"graph", o.graph},
                {"lambda", hp.lambda},
                {"rho1", hp.rho1},
                {"rho2", hp.rho2},
                {"psi", o.psi},
                {"standardize", o.standardize},
                {"corr_threshold", o.corr_threshold},
                {"max_iters", o.max_iters},
                {"tol", o.tol},
                {"seed", o.seed}};
}

int run_synth(Eigen::Index n, Eigen::Index d, Eigen::Index m, double sparsity,
              const std::string& edges, double noise, std::uint64_t seed,
              const std::string& out_dir) {
    mtsr::SyntheticSpec spec;
    spec.n = n;
    spec.d = d;
    spec.M = m;
    spec.sparsity = sparsity;
    spec.edges = parse_edges(edges);
    spec.noise_sigma = noise;
    spec.seed = seed;
    spec.check();

    ensure_writable_dir(out_dir);
    auto [ds, truth] = mtsr::generate_synthetic(spec);
    mtsr::save_multitask_dataset(ds, out_dir);
    mtsr::save_model_json(truth, {}, (fs::path(out_dir) / "truth.json").string());

    json manifest{{"n", n},       {"d", d},           {"m", m},      {"sparsity", sparsity},
                  {"edges", edges}, {"noise", noise}, {"seed", seed}};
    write_json(manifest, (fs::path(out_dir) / "manifest.json").string());
    return kExitOk;
}

int run_train(const CommonOpts& o) {
    auto ds = load_data(o);
    const auto cfg = solver_config(o);
    const auto hp = hyperparams(o, ds);
    if (hp.psi_enabled)
        for (const auto& t : ds.tasks)
            if (!t.raters)
                throw mtsr::invalid_input("--psi on requires rater data for task '" + t.name + "'");

    std::vector<mtsr::Standardizer> scalers;
    const bool standardize = parse_on_off(o.standardize, "standardize");
    if (standardize) {
        for (auto& t : ds.tasks) {
            scalers.push_back(mtsr::Standardizer::fit(t.X));
            t.X = scalers.back().transform(t.X);
        }
    }

    mtsr::TaskGraph g = o.graph == "auto"
                            ? mtsr::estimate_structure(ds, hp.lambda, o.corr_threshold, cfg)
                            : mtsr::load_graph_json(o.graph);
    for (const auto& w : g.warnings) std::cerr << "warning: " << w << "\n";

    auto sol = mtsr::graph_sparse_mtl_fit(ds, g, hp, cfg);

    mtsr::CoefficientMatrix W;
    W.values = sol.W;
    for (const auto& t : ds.tasks) W.task_names.push_back(t.name);

    ensure_writable_dir(o.out_dir);
    mtsr::save_model_json(W, hp, (fs::path(o.out_dir) / "model.json").string(),
                          standardize ? &scalers : nullptr);
    mtsr::save_graph_json(g, (fs::path(o.out_dir) / "graph.json").string());
    {
        const auto path = (fs::path(o.out_dir) / "trace.csv").string();
        std::ofstream out(path);
        if (!out) throw mtsr::io_error("cannot write " + path);
        out << "iteration,objective\n";
        // trace[0] is the starting objective; rows = completed iterations
        for (std::size_t i = 1; i < sol.objective_trace.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, sol.objective_trace[i]);
            out << buf;
        }
    }
    if (hp.psi_enabled) {
        const auto path = (fs::path(o.out_dir) / "psi.csv").string();
        std::ofstream out(path);
        if (!out) throw mtsr::io_error("cannot write " + path);
        out << "id,task,score\n";
        for (const auto& t : ds.tasks) {
            const auto psi = mtsr::compute_psi(t);
            for (Eigen::Index i = 0; i < t.n(); ++i) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), ",%.17g\n", psi.values(i));
                out << t.sample_ids[static_cast<std::size_t>(i)] << "," << t.name << "_psi" << buf;
            }
        }
    }
    auto manifest = manifest_json(o, hp);
    manifest["converged"] = sol.converged;
    manifest["iterations"] = sol.iterations;
    manifest["final_objective"] = sol.final_objective();
    write_json(manifest, (fs::path(o.out_dir) / "manifest.json").string());

    if (!sol.converged) {
        std::cerr << "did not converge in " << sol.iterations
                  << " iterations; final relative objective change "
                  << sol.final_relative_change() << "\n";
        return kExitNoConverge;
    }
    return kExitOk;
}

int run_predict(const std::string& model_path, const std::string& features_path,
                const std::string& task, const std::string& out_path) {
    auto model = mtsr::load_model_json(model_path);
    auto table = mtsr::csv::read_table(features_path);
    if (table.header.empty() || table.header[0] != "id")
        throw mtsr::parse_error(features_path, 1, "features header must start with 'id'");
    const auto d = static_cast<Eigen::Index>(table.header.size()) - 1;
    if (d != model.W.d())
        throw mtsr::dimension_error("feature dimension " + std::to_string(d) +
                                    " does not match model dimension " +
                                    std::to_string(model.W.d()));
    const auto m = model.W.task_index(task);

    std::ofstream out(out_path);
    if (!out) throw mtsr::io_error("cannot write " + out_path);
    out << "id,score\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        mtsr::Vector x(d);
        for (Eigen::Index j = 0; j < d; ++j)
            x(j) = mtsr::csv::parse_double(table.rows[r][static_cast<std::size_t>(j) + 1],
                                           features_path, table.linenos[r]);
        if (model.standardizers)
            x = (*model.standardizers)[static_cast<std::size_t>(m)].transform(x);
        char buf[48];
        std::snprintf(buf, sizeof(buf), ",%.17g\n", mtsr::predict(model.W, task, x));
        out << table.rows[r][0] << buf;
    }
    return kExitOk;
}

int run_evaluate(const CommonOpts& o, const std::string& target, int k, bool curve_only) {
    auto ds = load_data(o);
    const auto cfg = solver_config(o);
    const auto hp = hyperparams(o, ds);

    mtsr::CvOptions opt;
    opt.standardize = parse_on_off(o.standardize, "standardize");
    opt.corr_threshold = o.corr_threshold;
    if (o.lambda > 0) opt.structure_lambda = o.lambda;
    if (o.graph != "auto") opt.graph = mtsr::load_graph_json(o.graph);

    auto report = mtsr::run_cv(ds, hp, cfg, target, k, o.seed, opt);

    ensure_writable_dir(o.out_dir);
    mtsr::save_curve_csv(report.curve, (fs::path(o.out_dir) / "curve.csv").string());
    if (!curve_only) {
        write_json(mtsr::report_to_json(report), (fs::path(o.out_dir) / "report.json").string());
        auto manifest = manifest_json(o, hp);
        manifest["target"] = target;
        manifest["k"] = k;
        write_json(manifest, (fs::path(o.out_dir) / "manifest.json").string());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-task sparse regression toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with known ground truth");
    Eigen::Index sy_n = 50, sy_d = 20, sy_m = 3;
    double sy_sparsity = 0.25, sy_noise = 0.0;
    std::string sy_edges;
    std::uint64_t sy_seed = 0;
    std::string sy_out = ".";
    std::string sy_config;
    synth->add_option("--n", sy_n, "samples per task");
    synth->add_option("--d", sy_d, "feature dimension");
    synth->add_option("--m", sy_m, "task count");
    synth->add_option("--sparsity", sy_sparsity, "fraction of nonzero coefficient rows");
    synth->add_option("--edges", sy_edges, "shared-truth task pairs, e.g. 0-1,2-3");
    synth->add_option("--noise", sy_noise, "target noise standard deviation");
    synth->add_option("--seed", sy_seed, "RNG seed");
    synth->add_option("--out", sy_out, "output directory");
    synth->add_option("--config", sy_config, "JSON config file; flags override its values");

    // train
    auto* train = app.add_subcommand("train", "fit the graph-regularized sparse model");
    CommonOpts tr;
    add_common(train, tr, true);

    // predict
    auto* predict = app.add_subcommand("predict", "score feature rows with a trained model");
    std::string pr_model, pr_features, pr_task, pr_out = "predictions.csv", pr_config;
    predict->add_option("--model", pr_model, "model JSON from train")->required();
    predict->add_option("--features", pr_features, "features CSV")->required();
    predict->add_option("--task", pr_task, "task name to score")->required();
    predict->add_option("--out", pr_out, "output CSV path");
    predict->add_option("--config", pr_config, "JSON config file; flags override its values");

    // evaluate / curve
    auto* evaluate = app.add_subcommand("evaluate", "k-fold cross-validated metrics on one task");
    CommonOpts ev;
    std::string ev_target;
    int ev_k = 10;
    add_common(evaluate, ev, true);
    evaluate->add_option("--target", ev_target, "task to evaluate")->required();
    evaluate->add_option("--k", ev_k, "fold count");

    auto* curve = app.add_subcommand("curve", "evaluate, emitting only the accuracy curve CSV");
    CommonOpts cu;
    std::string cu_target;
    int cu_k = 10;
    add_common(curve, cu, true);
    curve->add_option("--target", cu_target, "task to evaluate")->required();
    curve->add_option("--k", cu_k, "fold count");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        if (!args.empty()) args = splice_config(args);
        std::vector<const char*> cargs{argv[0]};
        for (const auto& a : args) cargs.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(cargs.size()), cargs.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? kExitOk : kExitUsage;
        }

        if (synth->parsed())
            return run_synth(sy_n, sy_d, sy_m, sy_sparsity, sy_edges, sy_noise, sy_seed, sy_out);
        if (train->parsed()) return run_train(tr);
        if (predict->parsed()) return run_predict(pr_model, pr_features, pr_task, pr_out);
        if (evaluate->parsed()) return run_evaluate(ev, ev_target, ev_k, false);
        if (curve->parsed()) return run_evaluate(cu, cu_target, cu_k, true);
        return kExitUsage;
    } catch (const mtsr::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const mtsr::numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoConverge;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
