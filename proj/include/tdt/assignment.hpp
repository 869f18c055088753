#pragma once

#include <vector>

#include <Eigen/Dense>

namespace tdt {

struct Assignment {
  std::vector<int> row_to_col;  // -1 for rows left unmatched (more rows than columns)
  double total = 0.0;
};

/// Minimum-cost assignment on a rectangular matrix (Kuhn-Munkres with
/// potentials, O(n^2 m)). min(rows, cols) pairs are matched.
Assignment min_cost_assignment(const Eigen::MatrixXd& cost);

/// Maximum-weight variant; solved by negating the weights.
Assignment max_weight_assignment(const Eigen::MatrixXd& weight);

}  // namespace tdt
