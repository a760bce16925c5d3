#pragma once

#include <span>
#include <utility>
#include <vector>

namespace esvi {

// Truncated simplex assignment: at most `cutoff` (topic, weight) pairs
// kept in a size-bounded min-heap keyed by weight. Ties evict the higher
// topic index, so the retained set matches a sort by (weight desc, topic
// asc).
struct TopKAssignment {
  struct Entry {
    int topic;
    double weight;
  };

  std::vector<Entry> entries;  // heap order, entries[0] = weakest kept

  static bool lower_priority(const Entry& a, const Entry& b) {
    return a.weight < b.weight ||
           (a.weight == b.weight && a.topic > b.topic);
  }

  // Insert when below `cutoff`, otherwise replace the weakest entry if
  // the candidate outranks it.
  void offer(int topic, double weight, int cutoff);

  double total() const;
  // Scale weights so they sum to `target_mass`.
  void renormalize(double target_mass);
  double weight(int topic) const;
  std::vector<Entry> sorted_by_topic() const;
  std::vector<int> topics_sorted() const;
  bool heap_valid() const;

 private:
  void sift_up(std::size_t i);
  void sift_down(std::size_t i);
};

// Keep the `cutoff` largest weights of a dense simplex vector,
// renormalized to sum 1. When nothing is dropped the stored weights equal
// the input exactly.
TopKAssignment topk_truncate(std::span<const double> dense, int cutoff);

// Same, for sparse candidates; renormalizes to `target_mass` only when an
// entry was dropped.
TopKAssignment topk_truncate(std::span<const std::pair<int, double>> candidates,
                             int cutoff, double target_mass);

}  // namespace esvi
