#pragma once

#include <cassert>
#include <cmath>
#include <vector>

#include "mtsr/errors.hpp"
#include "mtsr/types.hpp"

namespace mtsr {

struct SolverConfig {
    int max_iters = 5000;
    double tol = 1e-6;              // relative objective-change stopping threshold
    double step_init = 1.0;         // initial inverse-Lipschitz guess
    double backtrack_factor = 0.5;
    bool monotone = true;           // keep the best-objective iterate (MFISTA)
    bool restart = true;            // reset momentum when the raw step increases the objective

    void check() const {
        if (max_iters < 1) throw invalid_input("SolverConfig: max_iters must be >= 1");
        if (!(tol > 0.0)) throw invalid_input("SolverConfig: tol must be > 0");
        if (!(step_init > 0.0)) throw invalid_input("SolverConfig: step_init must be > 0");
        if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
            throw invalid_input("SolverConfig: backtrack_factor must be in (0,1)");
    }
};

struct Solution {
    Matrix W;
    std::vector<double> objective_trace;  // total objective per iteration
    int iterations = 0;
    bool converged = false;

    double final_objective() const {
        return objective_trace.empty() ? 0.0 : objective_trace.back();
    }
    double final_relative_change() const {
        if (objective_trace.size() < 2) return 0.0;
        const double prev = objective_trace[objective_trace.size() - 2];
        return std::abs(objective_trace.back() - prev) / std::max(1.0, std::abs(prev));
    }
};

/// Accelerated proximal gradient (FISTA) for min f(W) + h(W) with f smooth
/// convex and prox the exact proximal operator of h. Backtracking line
/// search on the step; momentum t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.
/// Stops when the relative change of the total objective drops below
/// cfg.tol or max_iters is reached.
template <typename SmoothValue, typename SmoothGrad, typename Prox, typename NonsmoothValue>
Solution apg_solve(SmoothValue&& smooth_value, SmoothGrad&& smooth_grad, Prox&& prox,
                   NonsmoothValue&& nonsmooth_value, const Matrix& W0, const SolverConfig& cfg) {
    cfg.check();

    Matrix x = W0;           // kept iterate
    Matrix y = W0;           // momentum point
    Matrix x_prev = W0;
    double t = 1.0;
    double step = cfg.step_init;

    double F_x = smooth_value(x) + nonsmooth_value(x);
    if (!std::isfinite(F_x)) throw numeric_error("apg_solve: non-finite initial objective", 0);

    Solution sol;
    sol.objective_trace.push_back(F_x);

    constexpr double step_floor = 1e-18;

    for (int k = 1; k <= cfg.max_iters; ++k) {
        const double f_y = smooth_value(y);
        const Matrix grad = smooth_grad(y);
        if (!std::isfinite(f_y) || !grad.allFinite())
            throw numeric_error("apg_solve: non-finite objective or gradient", k);

        // Backtrack until the quadratic upper bound at y holds.
        Matrix z;
        while (true) {
            z = prox(y - step * grad, step);
            const Matrix diff = z - y;
            const double bound = f_y + grad.cwiseProduct(diff).sum() +
                                 diff.squaredNorm() / (2.0 * step);
            const double f_z = smooth_value(z);
            if (f_z <= bound + 1e-12 * std::max(1.0, std::abs(bound)) || step <= step_floor) {
                assert(f_z <= bound + 1e-9 * std::max(1.0, std::abs(bound)) || step <= step_floor);
                break;
            }
            step *= cfg.backtrack_factor;
        }

        const double F_z = smooth_value(z) + nonsmooth_value(z);
        if (!std::isfinite(F_z)) throw numeric_error("apg_solve: non-finite objective", k);

        Matrix x_new;
        double F_new;
        const bool rejected = cfg.monotone && F_z > F_x;
        if (rejected) {
            x_new = x;  // keep the best iterate
            F_new = F_x;
        } else {
            x_new = z;
            F_new = F_z;
        }

        const double t_new = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        if (cfg.restart && F_z > F_x) {
            // Momentum overshoot: restart from the kept iterate.
            y = x_new;
            t = 1.0;
        } else {
            // MFISTA momentum; reduces to plain FISTA when x_new == z.
            y = x_new + (t / t_new) * (z - x_new) + ((t - 1.0) / t_new) * (x_new - x_prev);
            t = t_new;
        }

        sol.objective_trace.push_back(F_new);
        sol.iterations = k;

        const double rel_change = std::abs(F_new - F_x) / std::max(1.0, std::abs(F_x));
        x_prev = x;
        x = std::move(x_new);
        F_x = F_new;

        if (!rejected && rel_change < cfg.tol) {
            sol.converged = true;
            break;
        }
    }

    sol.W = std::move(x);
    return sol;
}

}  // namespace mtsr
