#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "esvi/corpus.hpp"
#include "esvi/expfam.hpp"
#include "esvi/families.hpp"
#include "esvi/lda.hpp"
#include "esvi/mpsc_queue.hpp"
#include "esvi/nomad.hpp"
#include "esvi/runner.hpp"

using namespace esvi;

TEST_CASE("push then pop returns the same token with version preserved") {
  WorkerTopology topology(3);
  NomadMessage token;
  token.kind = NomadMessage::Kind::token;
  token.column = 7;
  token.version = 41;
  topology.push(1, std::move(token));

  NomadMessage out;
  REQUIRE(topology.pop(1, out));
  CHECK(out.column == 7);
  CHECK(out.version == 41);
  CHECK_FALSE(topology.pop(1, out));
}

TEST_CASE("two producers interleaving preserve per-producer order") {
  MpscQueue<int> queue;
  constexpr int n = 20000;
  auto producer = [&](int base) {
    for (int i = 0; i < n; ++i) queue.push(base + i);
  };
  std::thread a(producer, 0), b(producer, 1000000);
  int last_a = -1, last_b = 999999;
  int seen = 0;
  while (seen < 2 * n) {
    int value;
    if (!queue.try_pop(value)) {
      std::this_thread::yield();
      continue;
    }
    ++seen;
    if (value < 1000000) {
      CHECK(value > last_a);
      last_a = value;
    } else {
      CHECK(value > last_b);
      last_b = value;
    }
  }
  a.join();
  b.join();
}

TEST_CASE("a million random push/pop operations conserve the token census") {
  constexpr int workers = 8;
  constexpr int columns = 64;
  WorkerTopology topology(workers);
  for (int c = 0; c < columns; ++c) {
    NomadMessage token;
    token.kind = NomadMessage::Kind::token;
    token.column = c;
    topology.push(c % workers, std::move(token));
  }
  std::atomic<long long> ops{0};
  auto worker = [&](int me) {
    std::mt19937_64 rng(me + 1);
    NomadMessage msg;
    while (ops.fetch_add(1, std::memory_order_relaxed) < 1000000) {
      if (topology.pop(me, msg)) {
        topology.push(static_cast<int>(rng() % workers), std::move(msg));
      }
    }
  };
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) threads.emplace_back(worker, w);
  for (auto& t : threads) t.join();

  std::vector<int> seen(columns, 0);
  NomadMessage msg;
  for (int w = 0; w < workers; ++w) {
    while (topology.pop(w, msg)) seen[msg.column]++;
  }
  for (int c = 0; c < columns; ++c) CHECK(seen[c] == 1);
}

TEST_CASE("push to a stopped worker reroutes to a live one") {
  WorkerTopology topology(3);
  topology.mark_stopped(1);
  NomadMessage token;
  token.kind = NomadMessage::Kind::token;
  token.column = 0;
  topology.push(1, std::move(token));
  NomadMessage out;
  CHECK_FALSE(topology.pop(1, out));
  CHECK(topology.pop(2, out));  // next live worker after 1
  CHECK(out.column == 0);
}

TEST_CASE("normalizer ledger: zero deltas produce no message") {
  NormalizerLedger ledger;
  ledger.local_pi.assign(4, 1.0);
  ledger.pending.assign(4, 0.0);
  ledger.self = 0;
  NomadMessage msg;
  CHECK_FALSE(ledger.flush(msg));
}

TEST_CASE("normalizer ring sync quiesces to the true sums") {
  constexpr int workers = 4;
  constexpr int topics = 6;
  WorkerTopology topology(workers);
  std::vector<NormalizerLedger> ledgers(workers);
  std::vector<double> truth(topics, 10.0);
  for (int w = 0; w < workers; ++w) {
    ledgers[w].local_pi.assign(topics, 10.0);
    ledgers[w].pending.assign(topics, 0.0);
    ledgers[w].self = w;
  }

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> delta(-0.5, 0.5);
  // interleaved accruals and flushes
  for (int round = 0; round < 200; ++round) {
    const int w = static_cast<int>(rng() % workers);
    const int k = static_cast<int>(rng() % topics);
    const double d = delta(rng);
    truth[k] += d;
    ledgers[w].local_pi[k] += d;
    ledgers[w].pending[k] += d;
    if (round % 3 == 0) {
      NomadMessage msg;
      if (ledgers[w].flush(msg)) ring_forward(topology, w, std::move(msg));
    }
    // deliver anything queued, single-threaded
    NomadMessage incoming;
    for (int q = 0; q < workers; ++q) {
      while (topology.pop(q, incoming)) {
        ledgers[q].apply(incoming);
        ring_forward(topology, q, std::move(incoming));
      }
    }
  }
  // final quiesce
  for (int w = 0; w < workers; ++w) {
    NomadMessage msg;
    if (ledgers[w].flush(msg)) ring_forward(topology, w, std::move(msg));
  }
  bool moved = true;
  while (moved) {
    moved = false;
    NomadMessage incoming;
    for (int q = 0; q < workers; ++q) {
      while (topology.pop(q, incoming)) {
        moved = true;
        ledgers[q].apply(incoming);
        ring_forward(topology, q, std::move(incoming));
      }
    }
  }
  for (int w = 0; w < workers; ++w) {
    for (int k = 0; k < topics; ++k) {
      CHECK(ledgers[w].local_pi[k] == doctest::Approx(truth[k]).epsilon(1e-12));
    }
  }
}

namespace {

struct MixtureFixture {
  Corpus corpus;
  MultinomialFamily family;
  GlobalMixtureState state;
  std::vector<LocalAssignment> z;

  explicit MixtureFixture(std::uint64_t seed)
      : corpus(make_planted_partition_corpus(24, 16, 4, 30, 301)),
        family(16, 0.05, 0.5),
        state(4, 16) {
    z = init_assignments(corpus, 4, 0, seed);
    batch_refresh_globals(state, family, corpus, z);
  }
};

}  // namespace

TEST_CASE("nomad mixture with one worker is deterministic") {
  NomadOptions options;
  options.workers = 1;
  options.max_updates = 20000;
  options.eval_every = 4000;
  options.seed = 5;
  options.deterministic_time = true;

  MixtureFixture a(9), b(9);
  NomadStats stats_a, stats_b;
  const RunTrace ta =
      run_async_mixture(a.state, a.family, a.corpus, a.z, options, &stats_a);
  const RunTrace tb =
      run_async_mixture(b.state, b.family, b.corpus, b.z, options, &stats_b);
  REQUIRE(ta.records.size() == tb.records.size());
  for (std::size_t i = 0; i < ta.records.size(); ++i) {
    CHECK(ta.records[i].updates == tb.records[i].updates);
    CHECK(ta.records[i].elbo == tb.records[i].elbo);  // bitwise
    CHECK(ta.records[i].seconds == tb.records[i].seconds);
  }
  CHECK(a.state.pi_tilde == b.state.pi_tilde);
  CHECK(stats_a.ownership_violations == 0);
}

TEST_CASE("nomad mixture with one worker tracks the serial esvi driver") {
  // serial driver through the harness
  ExperimentConfig config;
  config.model = Model::mixmult;
  config.algo = Algo::esvi;
  config.topics = 2;
  config.workers = 1;
  config.alpha = 0.5;
  config.eta = 0.05;
  config.seed = 11;
  config.max_updates = 160000;
  config.eval_every = 40000;
  const Corpus corpus = make_planted_partition_corpus(24, 16, 2, 30, 301);
  const RunTrace serial = run_experiment(config, corpus);

  MultinomialFamily family(16, 0.05, 0.5);
  GlobalMixtureState state(2, 16);
  auto z = init_assignments(corpus, 2, 0, config.seed);
  batch_refresh_globals(state, family, corpus, z);
  NomadOptions options;
  options.workers = 1;
  options.max_updates = 160000;
  options.eval_every = 40000;
  options.seed = 11;
  NomadStats stats;
  const RunTrace async =
      run_async_mixture(state, family, corpus, z, options, &stats);
  const double serial_final = serial.records.back().elbo;
  const double async_final = async.records.back().elbo;
  CHECK(std::abs(async_final - serial_final) <= 1e-6 * std::abs(serial_final));
}

TEST_CASE("nomad mixture with several workers agrees with serial esvi") {
  // two components keep the pairwise dynamics single-basin, so the final
  // objectives are comparable across schedules
  const Corpus corpus = make_planted_partition_corpus(24, 16, 2, 30, 301);
  MultinomialFamily family(16, 0.05, 0.5);

  GlobalMixtureState serial_state(2, 16);
  auto serial_z = init_assignments(corpus, 2, 0, 13);
  batch_refresh_globals(serial_state, family, corpus, serial_z);
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> pick(0, 23);
  std::vector<int> subset;
  for (int step = 0; step < 60000; ++step) {
    const int i = pick(rng);
    sample_subset(rng, 2, 2, subset);
    esvi_step(serial_state, family, corpus, i, serial_z[i], subset);
  }
  const double serial_final =
      mixture_elbo_serial(serial_state, family, corpus, serial_z);

  NomadOptions options;
  options.workers = 2;
  options.max_updates = 60000;
  options.eval_every = 15000;
  options.seed = 13;
  options.census_checks = 20;
  GlobalMixtureState parallel_state(2, 16);
  auto parallel_z = init_assignments(corpus, 2, 0, 13);
  batch_refresh_globals(parallel_state, family, corpus, parallel_z);
  NomadStats stats;
  const RunTrace async = run_async_mixture(parallel_state, family, corpus,
                                           parallel_z, options, &stats);

  CHECK(stats.ownership_violations == 0);
  CHECK(stats.census_checks == 20);
  for (long long processed : stats.tokens_processed) CHECK(processed >= 1);
  const double async_final = async.records.back().elbo;
  CHECK(std::abs(async_final - serial_final) <= 5e-3 * std::abs(serial_final));
}

TEST_CASE("nomad mixture instrumentation on a wider component set") {
  MixtureFixture fixture(13);
  NomadOptions options;
  options.workers = 4;
  options.max_updates = 80000;
  options.eval_every = 20000;
  options.seed = 13;
  options.census_checks = 20;
  NomadStats stats;
  const RunTrace async = run_async_mixture(fixture.state, fixture.family,
                                           fixture.corpus, fixture.z, options,
                                           &stats);
  CHECK(stats.ownership_violations == 0);
  CHECK(stats.census_checks == 20);
  for (long long processed : stats.tokens_processed) CHECK(processed >= 1);
  CHECK(async.records.back().elbo > async.records.front().elbo);
}

TEST_CASE("kill-and-drain at random instants conserves every column") {
  std::mt19937_64 rng(501);
  for (int trial = 0; trial < 12; ++trial) {
    NomadOptions options;
    options.workers = 1 + static_cast<int>(rng() % 4);
    options.max_updates = 200 + static_cast<long long>(rng() % 5000);
    options.eval_every = options.max_updates;  // final snapshot only
    options.seed = rng();
    MixtureFixture fixture(options.seed);
    NomadStats stats;
    // the run throws if the shutdown census finds a lost or duplicated column
    CHECK_NOTHROW(run_async_mixture(fixture.state, fixture.family,
                                    fixture.corpus, fixture.z, options,
                                    &stats));
  }
}

TEST_CASE("nomad lda with one worker is deterministic and conserved") {
  SyntheticLdaConfig cfg;
  cfg.num_docs = 20;
  cfg.vocab_size = 40;
  cfg.num_topics = 4;
  cfg.doc_length = 30;
  cfg.seed = 601;
  const Corpus corpus = make_synthetic_lda_corpus(cfg);

  NomadOptions options;
  options.workers = 1;
  options.max_updates = 40000;
  options.eval_every = 10000;
  options.seed = 21;
  options.deterministic_time = true;

  LdaState a = init_lda_state(corpus, 4, 0.1, 0.01, 0, 23);
  LdaState b = init_lda_state(corpus, 4, 0.1, 0.01, 0, 23);
  NomadStats stats_a, stats_b;
  const RunTrace ta = run_async_lda(a, corpus, options, &stats_a);
  const RunTrace tb = run_async_lda(b, corpus, options, &stats_b);
  REQUIRE(ta.records.size() == tb.records.size());
  for (std::size_t i = 0; i < ta.records.size(); ++i) {
    CHECK(ta.records[i].elbo == tb.records[i].elbo);
  }
  CHECK(a.lambda == b.lambda);
  CHECK(stats_a.ownership_violations == 0);
  CHECK(stats_a.ledger_max_error < 1e-8);
}

TEST_CASE("nomad lda with several workers stays conserved and quiesced") {
  SyntheticLdaConfig cfg;
  cfg.num_docs = 24;
  cfg.vocab_size = 50;
  cfg.num_topics = 4;
  cfg.doc_length = 35;
  cfg.seed = 603;
  const Corpus corpus = make_synthetic_lda_corpus(cfg);

  NomadOptions options;
  options.workers = 3;
  options.max_updates = 120000;
  options.eval_every = 30000;
  options.seed = 25;
  options.census_checks = 10;
  options.sync_every = 2;

  LdaState state = init_lda_state(corpus, 4, 0.1, 0.01, 0, 27);
  NomadStats stats;
  const RunTrace trace = run_async_lda(state, corpus, options, &stats);

  CHECK(stats.ownership_violations == 0);
  CHECK(stats.census_checks == 10);
  CHECK(stats.ledger_max_error < 1e-8);
  for (long long processed : stats.tokens_processed) CHECK(processed >= 1);

  const LdaConservation cons = check_lda_conservation(state, corpus);
  CHECK(cons.max_gamma_error < 1e-8 * corpus.total_tokens());
  CHECK(cons.lambda_error < 1e-6 * corpus.total_tokens());

  // the run improved the objective
  CHECK(trace.records.back().elbo > trace.records.front().elbo);
}
