#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "esvi/corpus.hpp"
#include "esvi/expfam.hpp"
#include "esvi/lda.hpp"
#include "esvi/mpsc_queue.hpp"
#include "esvi/trace.hpp"

namespace esvi {

// Messages circulating through worker inboxes: nomadic parameter tokens
// (one global-state column) and ring-forwarded normalizer deltas.
struct NomadMessage {
  enum class Kind { token, normalizer_delta };
  Kind kind = Kind::token;
  int column = -1;              // token: component k or word v
  std::uint64_t version = 0;    // token: bumped once per processing hold
  int origin = -1;              // delta: worker that accrued it
  std::vector<double> payload;  // delta: per-topic normalizer changes
};

// Per-worker inboxes plus the shutdown routing rule: a push aimed at a
// stopped worker lands on the next live one instead.
class WorkerTopology {
 public:
  explicit WorkerTopology(int workers);

  int workers() const { return static_cast<int>(queues_.size()); }
  void push(int target, NomadMessage msg);
  bool pop(int worker, NomadMessage& out);
  bool queue_empty(int worker) const { return queues_[worker]->empty(); }

  void mark_stopped(int worker) { stopped_[worker].store(true); }
  bool is_stopped(int worker) const { return stopped_[worker].load(); }
  int route(int target) const;  // target itself, or the next live worker

 private:
  std::vector<std::unique_ptr<MpscQueue<NomadMessage>>> queues_;
  std::unique_ptr<std::atomic<bool>[]> stopped_;
};

// Cooperative stop-the-world gate used for evaluation snapshots and
// census checks. Workers poll `pause_requested` between messages and park
// until released; they never hold a lock around parameter state.
class PauseGate {
 public:
  explicit PauseGate(int workers) : workers_(workers) {}

  // coordinator side
  void pause();
  void resume();

  // worker side
  bool pause_requested() const {
    return requested_.load(std::memory_order_acquire);
  }
  void park();

 private:
  int workers_;
  std::atomic<bool> requested_{false};
  int parked_ = 0;
  std::uint64_t generation_ = 0;
  std::mutex mutex_;
  std::condition_variable worker_cv_, coordinator_cv_;
};

// Per-worker view of the slowly changing normalizer vector
// pi_k = sum_v lambda_k^v, kept approximately synchronized by forwarding
// accrued deltas around the worker ring.
struct NormalizerLedger {
  std::vector<double> local_pi;
  std::vector<double> pending;
  int self = 0;

  void accrue_applied();  // pending was filled in place by the update ops
  // Wraps pending into a ring message when nonzero; returns false when
  // there was nothing to send.
  bool flush(NomadMessage& out);
  void apply(const NomadMessage& delta);
};

// Forward a received delta to the next worker in ring order, stopping
// before it would return to its origin.
void ring_forward(WorkerTopology& topology, int self, NomadMessage delta);

struct NomadOptions {
  int workers = 2;
  long long max_updates = 100000;
  long long eval_every = 10000;
  std::uint64_t seed = 42;
  int subset_size = 2;       // mixture engine: columns redistributed jointly
  int hold_max = 0;          // mixture engine: pool size, 0 = subset_size + 2
  int steps_per_hold = 1;    // mixture engine: data sampled per token hold
  int refresh = 4;           // lda top-k: random topics rescored per token
  int sync_every = 1;        // ledger flush cadence, in token holds
  int census_checks = 0;     // extra census instants at random update counts
  double watchdog_seconds = 5.0;
  bool deterministic_time = false;
  bool check_conservation = true;
  int fold_iterations = 20;
  const Corpus* test_corpus = nullptr;  // enables perplexity snapshots (lda)
};

struct NomadStats {
  long long census_checks = 0;
  long long ownership_violations = 0;
  double ledger_max_error = 0.0;  // after final drain (lda)
  std::vector<std::string> diagnostics;
  std::vector<long long> tokens_processed;  // per worker
};

// Asynchronous nomadic ESVI over a generic mixture: component columns
// circulate, each worker redistributes assignment mass for its own data
// over the columns it currently holds.
RunTrace run_async_mixture(GlobalMixtureState& state,
                           const ModelFamily& family, const Corpus& corpus,
                           std::vector<LocalAssignment>& z,
                           const NomadOptions& options,
                           NomadStats* stats = nullptr);

// Asynchronous nomadic ESVI-LDA: word columns circulate, the holder
// updates every local occurrence of the word and ring-broadcasts
// normalizer deltas.
RunTrace run_async_lda(LdaState& state, const Corpus& corpus,
                       const NomadOptions& options,
                       NomadStats* stats = nullptr);

}  // namespace esvi
