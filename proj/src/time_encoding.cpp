#include "tdt/time_encoding.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tdt {

TimeMethod parse_time_method(std::string_view name) {
  if (name == "sinpe" || name == "SinPE") return TimeMethod::SinPE;
  if (name == "learnpe" || name == "LearnPE") return TimeMethod::LearnPE;
  if (name == "time2vec" || name == "Time2Vec") return TimeMethod::Time2Vec;
  if (name == "none" || name == "disabled") return TimeMethod::Disabled;
  throw std::invalid_argument("unknown time method '" + std::string(name) + "'");
}

std::string_view to_string(TimeMethod m) {
  switch (m) {
    case TimeMethod::SinPE: return "sinpe";
    case TimeMethod::LearnPE: return "learnpe";
    case TimeMethod::Time2Vec: return "time2vec";
    case TimeMethod::Disabled: return "none";
  }
  return "?";
}

void TimeEncoderConfig::validate() const {
  if (d_model <= 0 || d_model % 2 != 0) throw std::invalid_argument("d_model must be a positive even integer");
  if (max_position < 1) throw std::invalid_argument("max_position must be >= 1");
}

Eigen::VectorXd sinpe(double i, int d_model) {
  if (d_model <= 0 || d_model % 2 != 0) throw std::invalid_argument("d_model must be a positive even integer");
  Eigen::VectorXd out(d_model);
  for (int j = 0; 2 * j < d_model; ++j) {
    const double angle = i / std::pow(10000.0, (2.0 * j) / d_model);
    out[2 * j] = std::sin(angle);
    out[2 * j + 1] = std::cos(angle);
  }
  return out;
}

Eigen::Index learnpe_row(std::int64_t i, Eigen::Index rows) {
  if (i < 0) return 0;
  return std::min<Eigen::Index>(static_cast<Eigen::Index>(i), rows - 1);
}

Eigen::VectorXd learnpe(std::int64_t i, const Eigen::MatrixXd& table) {
  return table.row(learnpe_row(i, table.rows())).transpose();
}

Eigen::VectorXd time2vec(double tau, const Time2VecParams& params) {
  const Eigen::Index d = params.omega.size();
  Eigen::VectorXd out(d);
  if (d == 0) return out;
  out[0] = params.omega[0] * tau + params.phi[0];
  for (Eigen::Index k = 1; k < d; ++k) out[k] = std::sin(params.omega[k] * tau + params.phi[k]);
  return out;
}

Time2VecParams init_time2vec(int d_model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lo = std::log(1.0 / 3650.0);
  const double hi = 0.0;
  Time2VecParams p{Eigen::VectorXd(d_model), Eigen::VectorXd(d_model)};
  for (int k = 0; k < d_model; ++k) {
    const double cycles = std::exp(lo + (hi - lo) * unit(rng));
    p.omega[k] = 2.0 * std::numbers::pi * cycles;
    p.phi[k] = 2.0 * std::numbers::pi * unit(rng);
  }
  return p;
}

}  // namespace tdt
