#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace tdt {

/// Sorted (index, weight) pairs. Zero weights are never stored.
class SparseVector {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  SparseVector() = default;
  /// Sorts and merges duplicate indices; drops zeros.
  explicit SparseVector(std::vector<Entry> entries);

  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  double norm() const;
  double dot(const SparseVector& other) const;
  SparseVector normalized() const;
  SparseVector& operator+=(const SparseVector& other);
  bool operator==(const SparseVector&) const = default;

 private:
  std::vector<Entry> entries_;
};

/// Cosine similarity; 0 when either side is empty or has zero norm.
double sparse_cosine(const SparseVector& a, const SparseVector& b);

}  // namespace tdt
