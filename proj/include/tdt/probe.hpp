#pragma once

#include <string>
#include <vector>

#include "tdt/fusion.hpp"

namespace tdt {

struct ProbePoint {
  int offset_days = 0;
  double cosine = 0.0;
};

/// Re-embeds `doc` with its timestamp moved forward by each offset (in days)
/// and reports the cosine against the embedding at its own timestamp.
std::vector<ProbePoint> probe_similarity(const FusionModel& model, const Document& doc,
                                         const std::vector<int>& offsets_days);

/// CSV with header "offset,cosine".
std::string probe_to_csv(const std::vector<ProbePoint>& points);

}  // namespace tdt
