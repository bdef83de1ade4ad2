#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ibs/errors.hpp"

namespace ibs {

struct SliceSplit {
  int n_rbg_xr = 0;
  int n_rbg_embb = 0;

  friend bool operator==(const SliceSplit&, const SliceSplit&) = default;
};

/// Half-open RBG index interval [begin, end).
struct RbgRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

/// The action is the XR slice RBG count; eMBB gets the rest.
inline SliceSplit apply_inter_slice(int action, int n_rbg) {
  if (action < 0 || action > n_rbg) {
    throw ContractViolation("apply_inter_slice: action " + std::to_string(action) + " outside [0, " +
                            std::to_string(n_rbg) + "]");
  }
  return {action, n_rbg - action};
}

/// XR occupies the low RBG indices, eMBB the high ones.
inline RbgRange xr_range(const SliceSplit& s) { return {0, s.n_rbg_xr}; }
inline RbgRange embb_range(const SliceSplit& s) { return {s.n_rbg_xr, s.n_rbg_xr + s.n_rbg_embb}; }

/// floor(buffer_u / total * n_rbg) per user, in exact integer arithmetic.
inline std::vector<int> proportional_base_counts(std::span<const std::int64_t> buffer_bits, int n_rbg) {
  std::vector<int> counts(buffer_bits.size(), 0);
  const std::int64_t total = std::accumulate(buffer_bits.begin(), buffer_bits.end(), std::int64_t{0});
  if (total == 0) return counts;
  for (std::size_t u = 0; u < buffer_bits.size(); ++u) {
    counts[u] = static_cast<int>((buffer_bits[u] * n_rbg) / total);
  }
  return counts;
}

/// Buffer-proportional intra-slice allocation. Floors first; the RBGs the
/// floors leave over go one each to the largest fractional remainders (ties to
/// the lower user index). With no demand at all the slice is dealt round-robin.
inline std::vector<int> intra_slice_allocate(std::span<const std::int64_t> buffer_bits, int n_rbg) {
  if (n_rbg < 0) throw ContractViolation("intra_slice_allocate: negative RBG budget");
  for (auto b : buffer_bits) {
    if (b < 0) throw ContractViolation("intra_slice_allocate: negative buffer occupancy");
  }
  const std::size_t n_users = buffer_bits.size();
  std::vector<int> counts(n_users, 0);
  if (n_users == 0 || n_rbg == 0) return counts;

  const std::int64_t total = std::accumulate(buffer_bits.begin(), buffer_bits.end(), std::int64_t{0});
  if (total == 0) {
    for (int i = 0; i < n_rbg; ++i) ++counts[static_cast<std::size_t>(i) % n_users];
    return counts;
  }

  counts = proportional_base_counts(buffer_bits, n_rbg);
  int leftover = n_rbg - std::accumulate(counts.begin(), counts.end(), 0);
  // Remainders share the denominator `total`, so the numerators compare exactly.
  std::vector<std::size_t> order(n_users);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (buffer_bits[a] * n_rbg) % total > (buffer_bits[b] * n_rbg) % total;
  });
  for (std::size_t i = 0; leftover > 0; ++i, --leftover) ++counts[order[i % n_users]];
  return counts;
}

/// Contiguous index blocks in user order inside `range`.
inline std::vector<std::vector<int>> assign_rbg_indices(std::span<const int> counts, RbgRange range) {
  int needed = 0;
  for (int c : counts) {
    if (c < 0) throw ContractViolation("assign_rbg_indices: negative count");
    needed += c;
  }
  if (needed > range.size()) {
    throw ContractViolation("assign_rbg_indices: " + std::to_string(needed) + " RBGs requested from a range of " +
                            std::to_string(range.size()));
  }
  std::vector<std::vector<int>> sets(counts.size());
  int next = range.begin;
  for (std::size_t u = 0; u < counts.size(); ++u) {
    for (int k = 0; k < counts[u]; ++k) sets[u].push_back(next++);
  }
  return sets;
}

}  // namespace ibs
