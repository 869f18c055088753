#include "tdt/sparse_vector.hpp"

#include <algorithm>
#include <cmath>

namespace tdt {

SparseVector::SparseVector(std::vector<Entry> entries) {
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.first < b.first; });
  for (const auto& e : entries) {
    if (!entries_.empty() && entries_.back().first == e.first) {
      entries_.back().second += e.second;
    } else {
      entries_.push_back(e);
    }
  }
  std::erase_if(entries_, [](const Entry& e) { return e.second == 0.0; });
}

double SparseVector::norm() const {
  double s = 0.0;
  for (const auto& [i, w] : entries_) s += w * w;
  return std::sqrt(s);
}

double SparseVector::dot(const SparseVector& other) const {
  double s = 0.0;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  while (a != entries_.end() && b != other.entries_.end()) {
    if (a->first < b->first) {
      ++a;
    } else if (b->first < a->first) {
      ++b;
    } else {
      s += a->second * b->second;
      ++a;
      ++b;
    }
  }
  return s;
}

SparseVector SparseVector::normalized() const {
  const double n = norm();
  SparseVector out;
  if (n == 0.0) return out;
  out.entries_ = entries_;
  for (auto& e : out.entries_) e.second /= n;
  return out;
}

SparseVector& SparseVector::operator+=(const SparseVector& other) {
  std::vector<Entry> merged;
  merged.reserve(entries_.size() + other.entries_.size());
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  while (a != entries_.end() || b != other.entries_.end()) {
    if (b == other.entries_.end() || (a != entries_.end() && a->first < b->first)) {
      merged.push_back(*a++);
    } else if (a == entries_.end() || b->first < a->first) {
      merged.push_back(*b++);
    } else {
      const double w = a->second + b->second;
      if (w != 0.0) merged.emplace_back(a->first, w);
      ++a;
      ++b;
    }
  }
  entries_ = std::move(merged);
  return *this;
}

double sparse_cosine(const SparseVector& a, const SparseVector& b) {
  if (a.empty() || b.empty()) return 0.0;
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace tdt
