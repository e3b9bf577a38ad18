#pragma once

#include <cstddef>
#include <vector>

namespace gcnn {

/// Hard cluster labels over input series. Labels are 0-based in memory
/// (0..k-1); exported files use 1-based group ids.
struct GroupAssignment {
  std::vector<std::size_t> labels;
  std::size_t k = 0;

  std::size_t size() const { return labels.size(); }
  // Member indices of each group, ascending.
  std::vector<std::vector<std::size_t>> members() const;
  // Throws std::invalid_argument when a label is out of range or, if
  // requested, a group is empty.
  void validate(bool require_nonempty = true) const;

  // Round-robin labels i mod k; every group nonempty when n >= k.
  static GroupAssignment balanced(std::size_t n, std::size_t k);
  // Contiguous equal blocks of n / k (requires k | n).
  static GroupAssignment blocks(std::size_t n, std::size_t k);

  bool operator==(const GroupAssignment&) const = default;
};

// True when both assignments induce the same partition, ignoring label names.
bool same_partition(const GroupAssignment& a, const GroupAssignment& b);

}  // namespace gcnn
