#include "esvi/nomad.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

#include "esvi/math.hpp"

namespace esvi {

// ---------------------------------------------------------------------------
// WorkerTopology

WorkerTopology::WorkerTopology(int workers) {
  queues_.reserve(workers);
  for (int i = 0; i < workers; ++i) {
    queues_.push_back(std::make_unique<MpscQueue<NomadMessage>>());
  }
  stopped_ = std::make_unique<std::atomic<bool>[]>(workers);
  for (int i = 0; i < workers; ++i) stopped_[i].store(false);
}

int WorkerTopology::route(int target) const {
  const int p = workers();
  for (int hop = 0; hop < p; ++hop) {
    const int candidate = (target + hop) % p;
    if (!stopped_[candidate].load()) return candidate;
  }
  return target;  // everyone stopped; queues outlive threads and get drained
}

void WorkerTopology::push(int target, NomadMessage msg) {
  queues_[route(target)]->push(std::move(msg));
}

bool WorkerTopology::pop(int worker, NomadMessage& out) {
  return queues_[worker]->try_pop(out);
}

// ---------------------------------------------------------------------------
// PauseGate

void PauseGate::pause() {
  std::unique_lock<std::mutex> lock(mutex_);
  coordinator_cv_.wait(lock, [&] { return parked_ == 0; });
  requested_.store(true, std::memory_order_release);
  coordinator_cv_.wait(lock, [&] { return parked_ == workers_; });
}

void PauseGate::resume() {
  std::unique_lock<std::mutex> lock(mutex_);
  requested_.store(false, std::memory_order_release);
  ++generation_;
  worker_cv_.notify_all();
}

void PauseGate::park() {
  std::unique_lock<std::mutex> lock(mutex_);
  const std::uint64_t entered = generation_;
  ++parked_;
  coordinator_cv_.notify_all();
  worker_cv_.wait(lock, [&] { return generation_ != entered; });
  --parked_;
  coordinator_cv_.notify_all();
}

// ---------------------------------------------------------------------------
// NormalizerLedger

bool NormalizerLedger::flush(NomadMessage& out) {
  bool any = false;
  for (double d : pending) {
    if (d != 0.0) {
      any = true;
      break;
    }
  }
  if (!any) return false;  // zero deltas, no message
  out.kind = NomadMessage::Kind::normalizer_delta;
  out.origin = self;
  out.payload = pending;
  std::fill(pending.begin(), pending.end(), 0.0);
  return true;
}

void NormalizerLedger::apply(const NomadMessage& delta) {
  for (std::size_t k = 0; k < local_pi.size(); ++k) {
    local_pi[k] += delta.payload[k];
  }
}

void ring_forward(WorkerTopology& topology, int self, NomadMessage delta) {
  const int next = (self + 1) % topology.workers();
  if (next != delta.origin) topology.push(next, std::move(delta));
}

// ---------------------------------------------------------------------------
// shared scaffolding

namespace {

using Clock = std::chrono::steady_clock;

struct WorkerSlot {
  std::vector<int> held;  // published before parking / on exit
  std::atomic<long long> tokens_processed{0};
};

struct ControlBlock {
  explicit ControlBlock(int workers) : gate(workers), slots(workers) {
    for (auto& s : slots) s = std::make_unique<WorkerSlot>();
  }
  PauseGate gate;
  std::atomic<bool> stop{false};
  std::atomic<long long> updates{0};
  std::atomic<long long> violations{0};
  std::vector<std::unique_ptr<WorkerSlot>> slots;
};

std::vector<long long> census_instants(std::uint64_t seed, int count,
                                       long long max_updates) {
  std::vector<long long> points;
  std::mt19937_64 rng(seed ^ 0xC3A5C85C97CB3127ULL);
  std::uniform_int_distribution<long long> dist(1, std::max<long long>(1, max_updates));
  for (int i = 0; i < count; ++i) points.push_back(dist(rng));
  std::sort(points.begin(), points.end());
  return points;
}

// Every column id must be found exactly once across the queues and the
// held lists. Queue contents are put back in their original order.
void run_census(WorkerTopology& topology, ControlBlock& control,
                int num_columns, const std::vector<int>* inline_held) {
  std::vector<int> seen(num_columns, 0);
  for (int w = 0; w < topology.workers(); ++w) {
    std::vector<NomadMessage> buffer;
    NomadMessage msg;
    while (topology.pop(w, msg)) buffer.push_back(std::move(msg));
    for (NomadMessage& m : buffer) {
      if (m.kind == NomadMessage::Kind::token) seen[m.column]++;
    }
    for (NomadMessage& m : buffer) topology.push(w, std::move(m));
  }
  if (inline_held != nullptr) {
    for (int c : *inline_held) seen[c]++;
  } else {
    for (const auto& slot : control.slots) {
      for (int c : slot->held) seen[c]++;
    }
  }
  for (int c = 0; c < num_columns; ++c) {
    if (seen[c] != 1) {
      throw std::runtime_error("census failure: column " + std::to_string(c) +
                               " held " + std::to_string(seen[c]) +
                               " times (expected exactly once)");
    }
  }
}

int pick_destination(std::mt19937_64& rng, int self, int workers) {
  if (workers == 1) return 0;
  std::uniform_int_distribution<int> dist(0, workers - 2);
  const int other = dist(rng);
  return other >= self ? other + 1 : other;
}

// Coordinator loop for multi-worker runs: pauses the world at evaluation
// and census instants, watches for starvation, stops at the update budget.
template <typename SnapshotFn>
void coordinate(WorkerTopology& topology, ControlBlock& control,
                const NomadOptions& options, int num_columns,
                SnapshotFn&& snapshot, NomadStats& stats) {
  std::vector<long long> census_points =
      census_instants(options.seed, options.census_checks, options.max_updates);
  std::size_t next_census = 0;
  long long next_eval = options.eval_every;

  long long last_progress_count = 0;
  auto last_progress_time = Clock::now();

  for (;;) {
    const long long now = control.updates.load(std::memory_order_relaxed);
    if (now >= options.max_updates) break;

    bool want_census =
        next_census < census_points.size() && now >= census_points[next_census];
    const bool want_eval = now >= next_eval;
    if (want_census || want_eval) {
      control.gate.pause();
      while (next_census < census_points.size() &&
             control.updates.load() >= census_points[next_census]) {
        run_census(topology, control, num_columns, nullptr);
        ++stats.census_checks;
        ++next_census;
      }
      if (want_eval) {
        snapshot(control.updates.load());
        while (next_eval <= control.updates.load()) next_eval += options.eval_every;
      }
      control.gate.resume();
    }

    if (now != last_progress_count) {
      last_progress_count = now;
      last_progress_time = Clock::now();
    } else {
      const double stalled =
          std::chrono::duration<double>(Clock::now() - last_progress_time)
              .count();
      if (stalled > options.watchdog_seconds) {
        bool any_queued = false;
        for (int w = 0; w < topology.workers(); ++w) {
          if (!topology.queue_empty(w)) any_queued = true;
        }
        if (any_queued) {
          stats.diagnostics.push_back(
              "watchdog: no coordinate updates for " +
              std::to_string(stalled) + "s with nonempty queues");
        }
        last_progress_time = Clock::now();
      }
    }
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  if (next_census < census_points.size()) {
    control.gate.pause();
    while (next_census < census_points.size()) {
      run_census(topology, control, num_columns, nullptr);
      ++stats.census_checks;
      ++next_census;
    }
    control.gate.resume();
  }
  control.stop.store(true, std::memory_order_release);
}

}  // namespace

// ---------------------------------------------------------------------------
// generic mixture engine: component columns circulate

RunTrace run_async_mixture(GlobalMixtureState& state,
                           const ModelFamily& family, const Corpus& corpus,
                           std::vector<LocalAssignment>& z,
                           const NomadOptions& options, NomadStats* stats) {
  const int p = options.workers;
  const int k = state.num_components;
  const int n = corpus.num_data();
  if (p < 1) throw std::invalid_argument("workers must be >= 1");
  if (k < 2) throw std::invalid_argument("nomadic ESVI needs >= 2 components");
  const int subset_size = std::min(std::max(2, options.subset_size), k);

  WorkerTopology topology(p);
  ControlBlock control(p);
  NomadStats local_stats;
  NomadStats& st = stats != nullptr ? *stats : local_stats;
  st.tokens_processed.assign(p, 0);

  auto owner = std::make_unique<std::atomic<int>[]>(k);
  for (int c = 0; c < k; ++c) owner[c].store(-1);

  // distribute component tokens round-robin
  for (int c = 0; c < k; ++c) {
    NomadMessage token;
    token.kind = NomadMessage::Kind::token;
    token.column = c;
    topology.push(c % p, std::move(token));
  }

  RunTrace trace;
  const auto start = Clock::now();
  auto snapshot = [&](long long updates_now) {
    TraceRecord record;
    record.updates = updates_now;
    record.seconds =
        options.deterministic_time
            ? static_cast<double>(trace.records.size())
            : std::chrono::duration<double>(Clock::now() - start).count();
    record.elbo = mixture_elbo_serial(state, family, corpus, z);
    trace.records.push_back(record);
  };
  snapshot(0);

  const bool inline_mode = p == 1;
  std::vector<long long> inline_census =
      census_instants(options.seed, options.census_checks, options.max_updates);

  // Workers keep a small pool of columns and redistribute over a random
  // subset of it each step; FIFO pairing alone never remixes the pairs.
  const int hold_max =
      options.hold_max > 0 ? options.hold_max : std::min(k, subset_size + 2);

  auto worker_fn = [&](int me) {
    std::mt19937_64 rng(options.seed ^
                        (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(me + 1)));
    const int begin = static_cast<int>(static_cast<long long>(n) * me / p);
    const int end = static_cast<int>(static_cast<long long>(n) * (me + 1) / p);
    std::uniform_int_distribution<int> pick_datum(begin, std::max(begin, end - 1));

    std::vector<NomadMessage> pool;
    std::vector<int> chosen;
    std::vector<int> subset;
    long long next_eval = options.eval_every;
    std::size_t next_census = 0;
    int spin_budget = 64;

    auto publish_held = [&] {
      auto& out = control.slots[me]->held;
      out.clear();
      for (const NomadMessage& m : pool) out.push_back(m.column);
    };
    auto release_one = [&](std::size_t index, bool processed) {
      NomadMessage msg = std::move(pool[index]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(index));
      if (processed) {
        msg.version++;
        control.slots[me]->tokens_processed.fetch_add(1,
                                                      std::memory_order_relaxed);
      }
      owner[msg.column].store(-1, std::memory_order_release);
      topology.push(pick_destination(rng, me, p), std::move(msg));
    };

    for (;;) {
      if (control.stop.load(std::memory_order_acquire)) break;
      if (control.gate.pause_requested()) {
        publish_held();
        control.gate.park();
        continue;
      }

      NomadMessage msg;
      while (static_cast<int>(pool.size()) < hold_max && topology.pop(me, msg)) {
        owner[msg.column].store(me, std::memory_order_release);
        pool.push_back(std::move(msg));
        spin_budget = 64 + static_cast<int>(rng() % 192);
      }
      if (pool.size() < 2) {
        if (pool.empty() || spin_budget-- > 0) {
          std::this_thread::yield();
          continue;
        }
        // waited long enough for a partner column; recirculate instead
        release_one(0, false);
        continue;
      }

      sample_without_replacement(rng, static_cast<int>(pool.size()),
                                 std::min(subset_size,
                                          static_cast<int>(pool.size())),
                                 chosen);
      std::sort(chosen.begin(), chosen.end());
      subset.clear();
      for (int index : chosen) subset.push_back(pool[index].column);
      std::sort(subset.begin(), subset.end());
      for (int c : subset) {
        if (owner[c].load(std::memory_order_acquire) != me) {
          control.violations.fetch_add(1, std::memory_order_relaxed);
        }
      }

      for (int s = 0; s < options.steps_per_hold; ++s) {
        const int i = pick_datum(rng);
        esvi_step(state, family, corpus, i, z[i], subset);
        control.updates.fetch_add(static_cast<long long>(subset.size()),
                                  std::memory_order_relaxed);
      }
      // release the used columns, highest pool index first
      for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
        release_one(static_cast<std::size_t>(*it), true);
      }

      if (inline_mode) {
        const long long now = control.updates.load(std::memory_order_relaxed);
        while (next_census < inline_census.size() &&
               now >= inline_census[next_census]) {
          std::vector<int> in_pool;
          for (const NomadMessage& m : pool) in_pool.push_back(m.column);
          run_census(topology, control, k, &in_pool);
          ++st.census_checks;
          ++next_census;
        }
        while (now >= next_eval && next_eval <= options.max_updates) {
          snapshot(next_eval);
          next_eval += options.eval_every;
        }
        if (now >= options.max_updates) {
          control.stop.store(true, std::memory_order_release);
        }
      }
    }
    while (!pool.empty()) release_one(pool.size() - 1, false);
    control.slots[me]->held.clear();
    topology.mark_stopped(me);
  };

  std::vector<std::thread> threads;
  threads.reserve(p);
  for (int w = 0; w < p; ++w) threads.emplace_back(worker_fn, w);

  if (!inline_mode) {
    coordinate(topology, control, options, k, snapshot, st);
  }
  for (auto& t : threads) t.join();

  // drain and final census: exactly one token per component
  {
    std::vector<int> seen(k, 0);
    NomadMessage msg;
    for (int w = 0; w < p; ++w) {
      while (topology.pop(w, msg)) {
        if (msg.kind == NomadMessage::Kind::token) seen[msg.column]++;
      }
    }
    for (int c = 0; c < k; ++c) {
      if (seen[c] != 1) {
        throw std::runtime_error("shutdown census failure at column " +
                                 std::to_string(c));
      }
    }
  }

  snapshot(control.updates.load());
  st.ownership_violations = control.violations.load();
  for (int w = 0; w < p; ++w) {
    st.tokens_processed[w] = control.slots[w]->tokens_processed.load();
  }
  return trace;
}

// ---------------------------------------------------------------------------
// ESVI-LDA engine: word columns circulate

RunTrace run_async_lda(LdaState& state, const Corpus& corpus,
                       const NomadOptions& options, NomadStats* stats) {
  const int p = options.workers;
  const int v = state.vocab_size;
  const int k = state.num_topics;
  if (p < 1) throw std::invalid_argument("workers must be >= 1");

  WorkerTopology topology(p);
  ControlBlock control(p);
  NomadStats local_stats;
  NomadStats& st = stats != nullptr ? *stats : local_stats;
  st.tokens_processed.assign(p, 0);

  auto owner = std::make_unique<std::atomic<int>[]>(v);
  for (int c = 0; c < v; ++c) owner[c].store(-1);

  // per-worker document shard and word -> local slots index
  std::vector<int> doc_begin(p + 1);
  for (int w = 0; w <= p; ++w) {
    doc_begin[w] =
        static_cast<int>(static_cast<long long>(corpus.num_docs) * w / p);
  }
  std::vector<std::vector<std::vector<int>>> shard_slots(p);
  for (int w = 0; w < p; ++w) {
    shard_slots[w] = build_word_slots(corpus, doc_begin[w], doc_begin[w + 1]);
  }

  // every worker starts from the exact normalizer vector
  std::vector<NormalizerLedger> ledgers(p);
  for (int w = 0; w < p; ++w) {
    ledgers[w].local_pi = state.normalizers;
    ledgers[w].pending.assign(k, 0.0);
    ledgers[w].self = w;
  }

  for (int c = 0; c < v; ++c) {
    NomadMessage token;
    token.kind = NomadMessage::Kind::token;
    token.column = c;
    topology.push(c % p, std::move(token));
  }

  RunTrace trace;
  const auto start = Clock::now();
  double prev_elbo = 0.0;
  bool have_prev = false;
  auto snapshot = [&](long long updates_now) {
    TraceRecord record;
    record.updates = updates_now;
    record.seconds =
        options.deterministic_time
            ? static_cast<double>(trace.records.size())
            : std::chrono::duration<double>(Clock::now() - start).count();
    record.elbo = lda_elbo_serial(state, corpus);
    if (options.test_corpus != nullptr) {
      record.perplexity =
          heldout_perplexity(state, *options.test_corpus, options.fold_iterations)
              .perplexity;
    }
    if (options.check_conservation) {
      const LdaConservation c = check_lda_conservation(state, corpus);
      if (c.max_gamma_error > 1e-8 * std::max(1.0, corpus.total_tokens())) {
        throw std::runtime_error("gamma conservation violated at snapshot");
      }
      if (c.lambda_error > 1e-6 * std::max(1.0, corpus.total_tokens())) {
        throw std::runtime_error("lambda conservation violated at snapshot");
      }
    }
    if (have_prev && record.elbo < prev_elbo - 1e-9 * std::abs(prev_elbo)) {
      st.diagnostics.push_back("elbo decreased at snapshot " +
                               std::to_string(trace.records.size()));
    }
    prev_elbo = record.elbo;
    have_prev = true;
    trace.records.push_back(record);
  };
  snapshot(0);

  const bool inline_mode = p == 1;
  std::vector<long long> inline_census =
      census_instants(options.seed, options.census_checks, options.max_updates);

  auto worker_fn = [&](int me) {
    std::mt19937_64 rng(options.seed ^
                        (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(me + 1)));
    NormalizerLedger& ledger = ledgers[me];
    const auto& my_slots = shard_slots[me];
    long long pops = 0;
    long long next_eval = options.eval_every;
    std::size_t next_census = 0;

    for (;;) {
      if (control.stop.load(std::memory_order_acquire)) break;
      if (control.gate.pause_requested()) {
        control.slots[me]->held.clear();
        control.gate.park();
        continue;
      }
      NomadMessage msg;
      if (!topology.pop(me, msg)) {
        std::this_thread::yield();
        continue;
      }

      if (msg.kind == NomadMessage::Kind::normalizer_delta) {
        ledger.apply(msg);
        ring_forward(topology, me, std::move(msg));
        continue;
      }

      const int word = msg.column;
      owner[word].store(me, std::memory_order_release);
      if (owner[word].load(std::memory_order_acquire) != me) {
        control.violations.fetch_add(1, std::memory_order_relaxed);
      }
      long long scored = 0;
      for (int slot : my_slots[word]) {
        scored += lda_update_slot(state, corpus, slot, ledger.local_pi,
                                  ledger.local_pi, ledger.pending,
                                  options.refresh, rng);
      }
      control.updates.fetch_add(scored, std::memory_order_relaxed);
      msg.version++;
      ++pops;
      control.slots[me]->tokens_processed.fetch_add(1, std::memory_order_relaxed);
      owner[word].store(-1, std::memory_order_release);
      topology.push(pick_destination(rng, me, p), std::move(msg));

      if (p > 1 && pops % std::max(1, options.sync_every) == 0) {
        NomadMessage delta;
        if (ledger.flush(delta)) ring_forward(topology, me, std::move(delta));
      }

      if (inline_mode) {
        const long long now = control.updates.load(std::memory_order_relaxed);
        while (next_census < inline_census.size() &&
               now >= inline_census[next_census]) {
          std::vector<int> none;
          run_census(topology, control, v, &none);
          ++st.census_checks;
          ++next_census;
        }
        while (now >= next_eval && next_eval <= options.max_updates) {
          state.normalizers = ledger.local_pi;
          snapshot(next_eval);
          next_eval += options.eval_every;
        }
        if (now >= options.max_updates) {
          control.stop.store(true, std::memory_order_release);
        }
      }
    }
    control.slots[me]->held.clear();
    topology.mark_stopped(me);
  };

  std::vector<std::thread> threads;
  threads.reserve(p);
  for (int w = 0; w < p; ++w) threads.emplace_back(worker_fn, w);

  if (!inline_mode) {
    coordinate(topology, control, options, v, snapshot, st);
  }
  for (auto& t : threads) t.join();

  // drain: tokens feed the shutdown census, leftover ring deltas are
  // delivered by hand so every ledger quiesces
  {
    std::vector<int> seen(v, 0);
    bool moved = true;
    while (moved) {
      moved = false;
      NomadMessage msg;
      for (int w = 0; w < p; ++w) {
        while (topology.pop(w, msg)) {
          moved = true;
          if (msg.kind == NomadMessage::Kind::token) {
            seen[msg.column]++;
          } else {
            ledgers[w].apply(msg);
            const int next = (w + 1) % p;
            if (next != msg.origin) topology.push(next, std::move(msg));
          }
        }
      }
    }
    for (int c = 0; c < v; ++c) {
      if (seen[c] != 1) {
        throw std::runtime_error("shutdown census failure at word column " +
                                 std::to_string(c));
      }
    }
    // flush remaining local pendings around the ring
    for (int w = 0; w < p; ++w) {
      NomadMessage delta;
      if (ledgers[w].flush(delta)) {
        for (int hop = 1; hop < p; ++hop) {
          ledgers[(w + hop) % p].apply(delta);
        }
      }
    }
  }

  // exact normalizers for the final snapshot; record ledger skew
  std::vector<double> exact(k, 0.0);
  for (int word = 0; word < v; ++word) {
    auto col = state.lambda_col(word);
    for (int t = 0; t < k; ++t) exact[t] += col[t];
  }
  state.normalizers = exact;
  for (int w = 0; w < p; ++w) {
    for (int t = 0; t < k; ++t) {
      st.ledger_max_error = std::max(
          st.ledger_max_error, std::abs(ledgers[w].local_pi[t] - exact[t]));
    }
  }

  snapshot(control.updates.load());
  st.ownership_violations = control.violations.load();
  for (int w = 0; w < p; ++w) {
    st.tokens_processed[w] = control.slots[w]->tokens_processed.load();
  }
  return trace;
}

}  // namespace esvi
