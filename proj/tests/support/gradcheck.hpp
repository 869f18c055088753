#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdt/fusion.hpp"

namespace gradcheck {

struct TensorError {
  std::string name;
  double analytic_norm = 0;
  double numeric_norm = 0;
  double rel_error = 0;  // |a - n| / max(|a|, |n|), 0 when both are ~0
  std::size_t entries = 0;
};

struct Report {
  std::vector<TensorError> tensors;
  double worst = 0;
};

/// Triplet loss (BatchAll triplets, margin 2.5 so every hinge stays active)
/// over a small fixed batch, differentiated analytically and by central
/// differences for every parameter tensor. Row-sparse tables are probed only
/// on the rows the batch touches.
Report check(tdt::FusionStrategy strategy, tdt::TimeMethod time, std::uint64_t seed, double h = 1e-5);

}  // namespace gradcheck
