#include "tdt/probe.hpp"

#include <cstdio>
#include <stdexcept>

#include "tdt/training.hpp"

namespace tdt {

std::vector<ProbePoint> probe_similarity(const FusionModel& model, const Document& doc,
                                         const std::vector<int>& offsets_days) {
  const auto tokens = tokenize(doc, model.max_seq_len);
  const Eigen::MatrixXd text = encode(doc, tokens, model.backend);
  const auto at = [&](int offset) {
    const Timestamp t{doc.timestamp.seconds + static_cast<std::int64_t>(offset) * 86400};
    return fuse(text, build_time_matrix(model.time_embedding(model.step_of(t)), text.rows()), model);
  };
  const Eigen::VectorXd anchor = at(0);
  std::vector<ProbePoint> out;
  out.reserve(offsets_days.size());
  for (int offset : offsets_days) {
    if (offset < 0) throw std::invalid_argument("probe offsets must be non-negative");
    out.push_back({offset, cosine_sim(anchor, at(offset))});
  }
  return out;
}

std::string probe_to_csv(const std::vector<ProbePoint>& points) {
  std::string out = "offset,cosine\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", p.offset_days, p.cosine);
    out += buf;
  }
  return out;
}

}  // namespace tdt
