#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mtsr/errors.hpp"

namespace mtsr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Per-task linear regressors stacked as columns: values is d x M,
/// column m is the coefficient vector of task m.
struct CoefficientMatrix {
    Matrix values;
    std::vector<std::string> task_names;

    Eigen::Index d() const { return values.rows(); }
    Eigen::Index num_tasks() const { return values.cols(); }

    Eigen::Index task_index(const std::string& name) const {
        for (std::size_t i = 0; i < task_names.size(); ++i)
            if (task_names[i] == name) return static_cast<Eigen::Index>(i);
        throw invalid_input("unknown task: " + name);
    }

    Vector column(const std::string& name) const { return values.col(task_index(name)); }
};

}  // namespace mtsr
