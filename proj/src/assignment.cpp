#include "tdt/assignment.hpp"

#include <limits>
#include <stdexcept>

namespace tdt {

namespace {

// rows <= cols; returns for each row its column
std::vector<int> hungarian(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows()), m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

Assignment min_cost_assignment(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw std::invalid_argument("assignment costs must be finite");
  Assignment out;
  out.row_to_col.assign(static_cast<std::size_t>(cost.rows()), -1);
  if (cost.rows() == 0 || cost.cols() == 0) return out;
  if (cost.rows() <= cost.cols()) {
    out.row_to_col = hungarian(cost);
  } else {
    const auto col_to_row = hungarian(cost.transpose());
    for (std::size_t c = 0; c < col_to_row.size(); ++c) out.row_to_col[col_to_row[c]] = static_cast<int>(c);
  }
  for (std::size_t r = 0; r < out.row_to_col.size(); ++r)
    if (out.row_to_col[r] >= 0) out.total += cost(static_cast<Eigen::Index>(r), out.row_to_col[r]);
  return out;
}

Assignment max_weight_assignment(const Eigen::MatrixXd& weight) {
  Assignment out = min_cost_assignment(-weight);
  out.total = -out.total;
  return out;
}

}  // namespace tdt
