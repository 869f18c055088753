#include "tdt/params.hpp"

namespace tdt {

GradTensor GradTensor::like(const ParamRef& p) {
  GradTensor g;
  g.row_sparse = p.row_sparse;
  if (!p.row_sparse) g.dense = Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols());
  return g;
}

void GradTensor::add_row(Eigen::Index r, const Eigen::Ref<const Eigen::RowVectorXd>& g) {
  if (!row_sparse) {
    dense.row(r) += g;
    return;
  }
  auto [it, inserted] = rows.try_emplace(r, g);
  if (!inserted) it->second += g;
}

Eigen::MatrixXd GradTensor::to_dense(Eigen::Index n_rows, Eigen::Index n_cols) const {
  if (!row_sparse) return dense;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_rows, n_cols);
  for (const auto& [r, g] : rows) out.row(r) = g;
  return out;
}

bool GradTensor::is_zero() const {
  if (!row_sparse) return dense.isZero(0.0);
  for (const auto& [r, g] : rows) {
    if (!g.isZero(0.0)) return false;
  }
  return true;
}

void GradTensor::clear() {
  if (row_sparse) {
    rows.clear();
  } else {
    dense.setZero();
  }
}

ParamGrads zero_grads(const std::vector<ParamRef>& params) {
  ParamGrads out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(GradTensor::like(p));
  return out;
}

}  // namespace tdt
