#include "esvi/topk.hpp"

#include <algorithm>
#include <stdexcept>

namespace esvi {

void TopKAssignment::sift_up(std::size_t i) {
  while (i > 0) {
    const std::size_t parent = (i - 1) / 2;
    if (!lower_priority(entries[i], entries[parent])) break;
    std::swap(entries[i], entries[parent]);
    i = parent;
  }
}

void TopKAssignment::sift_down(std::size_t i) {
  const std::size_t n = entries.size();
  for (;;) {
    std::size_t smallest = i;
    const std::size_t left = 2 * i + 1, right = 2 * i + 2;
    if (left < n && lower_priority(entries[left], entries[smallest])) {
      smallest = left;
    }
    if (right < n && lower_priority(entries[right], entries[smallest])) {
      smallest = right;
    }
    if (smallest == i) break;
    std::swap(entries[i], entries[smallest]);
    i = smallest;
  }
}

void TopKAssignment::offer(int topic, double weight, int cutoff) {
  if (static_cast<int>(entries.size()) < cutoff) {
    entries.push_back({topic, weight});
    sift_up(entries.size() - 1);
    return;
  }
  const Entry candidate{topic, weight};
  if (lower_priority(entries[0], candidate)) {
    entries[0] = candidate;
    sift_down(0);
  }
}

double TopKAssignment::total() const {
  double sum = 0.0;
  for (const Entry& e : entries) sum += e.weight;
  return sum;
}

void TopKAssignment::renormalize(double target_mass) {
  const double sum = total();
  if (sum <= 0.0) throw std::runtime_error("topk: cannot renormalize zero mass");
  const double scale = target_mass / sum;
  for (Entry& e : entries) e.weight *= scale;
}

double TopKAssignment::weight(int topic) const {
  for (const Entry& e : entries) {
    if (e.topic == topic) return e.weight;
  }
  return 0.0;
}

std::vector<TopKAssignment::Entry> TopKAssignment::sorted_by_topic() const {
  std::vector<Entry> out = entries;
  std::sort(out.begin(), out.end(),
            [](const Entry& a, const Entry& b) { return a.topic < b.topic; });
  return out;
}

std::vector<int> TopKAssignment::topics_sorted() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const Entry& e : entries) out.push_back(e.topic);
  std::sort(out.begin(), out.end());
  return out;
}

bool TopKAssignment::heap_valid() const {
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (lower_priority(entries[i], entries[(i - 1) / 2])) return false;
  }
  return true;
}

TopKAssignment topk_truncate(std::span<const double> dense, int cutoff) {
  if (cutoff < 1) throw std::invalid_argument("topk cutoff must be >= 1");
  TopKAssignment out;
  out.entries.reserve(std::min<std::size_t>(cutoff, dense.size()));
  for (std::size_t k = 0; k < dense.size(); ++k) {
    out.offer(static_cast<int>(k), dense[k], cutoff);
  }
  if (out.entries.size() < dense.size()) out.renormalize(1.0);
  return out;
}

TopKAssignment topk_truncate(std::span<const std::pair<int, double>> candidates,
                             int cutoff, double target_mass) {
  if (cutoff < 1) throw std::invalid_argument("topk cutoff must be >= 1");
  TopKAssignment out;
  out.entries.reserve(std::min<std::size_t>(cutoff, candidates.size()));
  for (const auto& [topic, weight] : candidates) {
    out.offer(topic, weight, cutoff);
  }
  if (out.entries.size() < candidates.size()) out.renormalize(target_mass);
  return out;
}

}  // namespace esvi
