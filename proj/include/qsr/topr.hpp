#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace qsr {

struct Neighbor {
  std::uint32_t id = 0;
  float score = 0.f;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Bounded best-R collection. Keeps the R best (id, score) pairs seen so far;
/// "best" is the larger score for similarities and the smaller one for
/// distances, with ties going to the lower id.
class TopR {
 public:
  TopR(std::size_t r, bool larger_is_better) : r_(r), larger_(larger_is_better) {
    heap_.reserve(r + 1);
  }

  bool better(const Neighbor& a, const Neighbor& b) const {
    if (a.score != b.score) return larger_ ? a.score > b.score : a.score < b.score;
    return a.id < b.id;
  }

  void push(std::uint32_t id, float score) {
    if (r_ == 0) return;
    const Neighbor n{id, score};
    auto cmp = [this](const Neighbor& a, const Neighbor& b) { return better(a, b); };
    if (heap_.size() < r_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end(), cmp);
    } else if (better(n, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), cmp);
      heap_.back() = n;
      std::push_heap(heap_.begin(), heap_.end(), cmp);
    }
  }

  void merge(const TopR& other) {
    for (const auto& n : other.heap_) push(n.id, n.score);
  }

  std::size_t size() const { return heap_.size(); }

  /// Best first.
  std::vector<Neighbor> sorted() const {
    auto out = heap_;
    std::sort(out.begin(), out.end(), [this](const Neighbor& a, const Neighbor& b) { return better(a, b); });
    return out;
  }

 private:
  std::size_t r_;
  bool larger_;
  std::vector<Neighbor> heap_;  // root is the worst kept entry
};

}  // namespace qsr
