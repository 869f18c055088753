#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tdt {

/// A named trainable tensor. Row-sparse tensors are lookup tables whose
/// gradients touch only the rows that were read.
struct ParamRef {
  std::string name;
  Eigen::MatrixXd* value = nullptr;
  bool row_sparse = false;
};

struct GradTensor {
  bool row_sparse = false;
  Eigen::MatrixXd dense;
  std::map<Eigen::Index, Eigen::RowVectorXd> rows;

  static GradTensor like(const ParamRef& p);

  void add_row(Eigen::Index r, const Eigen::Ref<const Eigen::RowVectorXd>& g);
  /// Dense view of the gradient with the shape of `value`.
  Eigen::MatrixXd to_dense(Eigen::Index n_rows, Eigen::Index n_cols) const;
  bool is_zero() const;
  void clear();
};

using ParamGrads = std::vector<GradTensor>;

ParamGrads zero_grads(const std::vector<ParamRef>& params);

}  // namespace tdt
