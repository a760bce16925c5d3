#pragma once

#include <atomic>
#include <utility>

namespace esvi {

// Unbounded multi-producer single-consumer queue (Vyukov's non-intrusive
// scheme). push is lock-free from any thread; try_pop is wait-free and
// may only be called by the single consumer. FIFO order is preserved per
// producer. try_pop returns false rather than waiting, including in the
// transient window where a producer has linked its node into the head but
// not yet published the next pointer.
template <typename T>
class MpscQueue {
 public:
  MpscQueue() {
    Node* stub = new Node;
    head_.store(stub, std::memory_order_relaxed);
    tail_ = stub;
  }

  MpscQueue(const MpscQueue&) = delete;
  MpscQueue& operator=(const MpscQueue&) = delete;

  ~MpscQueue() {
    T scratch;
    while (try_pop(scratch)) {
    }
    delete tail_;
  }

  void push(T value) {
    Node* node = new Node;
    node->value = std::move(value);
    Node* prev = head_.exchange(node, std::memory_order_acq_rel);
    prev->next.store(node, std::memory_order_release);
  }

  bool try_pop(T& out) {
    Node* tail = tail_;
    Node* next = tail->next.load(std::memory_order_acquire);
    if (next == nullptr) return false;
    out = std::move(next->value);
    tail_ = next;
    delete tail;
    return true;
  }

  bool empty() const {
    return tail_->next.load(std::memory_order_acquire) == nullptr;
  }

 private:
  struct Node {
    std::atomic<Node*> next{nullptr};
    T value{};
  };

  alignas(64) std::atomic<Node*> head_;
  alignas(64) Node* tail_;
};

}  // namespace esvi
