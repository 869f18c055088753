#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

#include "tdt/corpus.hpp"

namespace tdt {

/// How a timestep becomes a dense vector. `Disabled` yields an all-zero time
/// embedding and is used for text-only baselines.
enum class TimeMethod : std::uint8_t { SinPE, LearnPE, Time2Vec, Disabled };

TimeMethod parse_time_method(std::string_view name);
std::string_view to_string(TimeMethod m);

struct TimeEncoderConfig {
  TimeMethod method = TimeMethod::SinPE;
  int d_model = 64;
  int max_position = 4096;
  Granularity granularity = Granularity::Daily;

  void validate() const;
};

/// Sinusoidal encoding: even slots sin(i / 10000^(2j/d)), odd slots the matching cos.
Eigen::VectorXd sinpe(double i, int d_model);

/// Row index used for timestep `i` in a learned table with `rows` rows. Out of
/// range timesteps clamp to the last row.
Eigen::Index learnpe_row(std::int64_t i, Eigen::Index rows);
Eigen::VectorXd learnpe(std::int64_t i, const Eigen::MatrixXd& table);

/// Time2Vec: component 0 is linear in tau, the rest are sin(omega*tau + phi).
struct Time2VecParams {
  Eigen::VectorXd omega;
  Eigen::VectorXd phi;
};

Eigen::VectorXd time2vec(double tau, const Time2VecParams& params);

/// Angular frequencies 2*pi*f with f log-uniform on [1/3650, 1] cycles per
/// timestep, phases uniform on [0, 2*pi).
Time2VecParams init_time2vec(int d_model, std::mt19937_64& rng);

}  // namespace tdt
