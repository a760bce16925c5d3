// Acceptance suite: runs every acceptance criterion at its stated
// tolerance and prints one PASS/FAIL line per criterion. Exit code is
// the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "esvi/corpus.hpp"
#include "esvi/expfam.hpp"
#include "esvi/families.hpp"
#include "esvi/lda.hpp"
#include "esvi/math.hpp"
#include "esvi/nomad.hpp"
#include "esvi/runner.hpp"
#include "oracles.hpp"

using namespace esvi;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// 50-doc corpus used by the serial-dynamics criteria
Corpus desk_corpus() {
  SyntheticLdaConfig cfg;
  cfg.num_docs = 50;
  cfg.vocab_size = 200;
  cfg.num_topics = 8;
  cfg.doc_length = 60;
  cfg.seed = 1234;
  return make_synthetic_lda_corpus(cfg);
}

// larger corpus with sharp word-topic assignments and diffuse documents;
// used where trajectories of different schedules must land in one basin
Corpus desk_corpus_wide() {
  SyntheticLdaConfig cfg;
  cfg.num_docs = 200;
  cfg.vocab_size = 200;
  cfg.num_topics = 8;
  cfg.doc_length = 100;
  cfg.doc_concentration = 4.0;
  cfg.block_weight = 0.95;
  cfg.seed = 1234;
  return make_synthetic_lda_corpus(cfg);
}

char detail_buffer[512];

// ---------------------------------------------------------------------------

bool criterion1_lemma_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(424242);
  std::uniform_real_distribution<double> score(-6.0, 6.0);
  std::uniform_real_distribution<double> mass(0.01, 3.0);
  double worst_gap = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 23);
    RestrictedProblem p;
    p.subset.resize(n);
    p.scores.resize(n);
    for (int j = 0; j < n; ++j) {
      p.subset[j] = j;
      p.scores[j] = score(rng);
    }
    p.mass = mass(rng);
    const auto closed = update_z_subset(p);
    const double closed_value = restricted_elbo(p, closed);

    const auto numeric = oracles::projected_gradient_opt(p.scores, p.mass, 300);
    worst_gap = std::min(worst_gap, closed_value - restricted_elbo(p, numeric));
    for (int probe = 0; probe < 1000; ++probe) {
      const auto z = oracles::random_feasible(rng, n, p.mass);
      worst_gap = std::min(worst_gap, closed_value - restricted_elbo(p, z));
    }
  }
  const double elapsed = seconds_since(start);
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "1000 instances, worst objective gap %.2e >= -1e-8, %.1fs < 30s",
                worst_gap, elapsed);
  return worst_gap >= -1e-8 && elapsed < 30.0;
}

bool criterion2_serial_monotonicity() {
  const auto start = Clock::now();
  const Corpus corpus = desk_corpus();
  MultinomialFamily family(corpus.vocab_size, 0.05, 0.5);

  int violations = 0;
  double worst_drop = 0.0;

  {
    GlobalMixtureState state(8, corpus.vocab_size);
    auto z = init_assignments(corpus, 8, 0, 99);
    batch_refresh_globals(state, family, corpus, z);
    double prev = mixture_elbo_serial(state, family, corpus, z);
    for (int epoch = 0; epoch < 150; ++epoch) {
      vi_epoch_serial(state, family, corpus, z);
      const double now = mixture_elbo_serial(state, family, corpus, z);
      if (now < prev - 1e-9 * std::abs(prev)) {
        ++violations;
        worst_drop = std::min(worst_drop, now - prev);
      }
      prev = now;
    }
  }
  {
    GlobalMixtureState state(8, corpus.vocab_size);
    auto z = init_assignments(corpus, 8, 0, 99);
    batch_refresh_globals(state, family, corpus, z);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> pick(0, corpus.num_docs - 1);
    std::vector<int> subset;
    double prev = mixture_elbo_serial(state, family, corpus, z);
    for (int step = 0; step < 10000; ++step) {
      const int i = pick(rng);
      sample_subset(rng, 8, 2, subset);
      esvi_step(state, family, corpus, i, z[i], subset);
      const double now = mixture_elbo_serial(state, family, corpus, z);
      if (now < prev - 1e-9 * std::abs(prev)) {
        ++violations;
        worst_drop = std::min(worst_drop, now - prev);
      }
      prev = now;
    }
  }
  const double elapsed = seconds_since(start);
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "150 vi epochs + 10^4 esvi steps, %d drops beyond slack "
                "(worst %.2e), %.1fs < 60s",
                violations, worst_drop, elapsed);
  return violations == 0 && elapsed < 60.0;
}

bool criterion3_incremental_batch() {
  const Corpus corpus = desk_corpus();
  double worst_rel = 0.0;

  {
    MultinomialFamily family(corpus.vocab_size, 0.05, 0.5);
    GlobalMixtureState state(8, corpus.vocab_size);
    auto z = init_assignments(corpus, 8, 0, 17);
    batch_refresh_globals(state, family, corpus, z);
    std::mt19937_64 rng(19);
    std::uniform_int_distribution<int> pick(0, corpus.num_docs - 1);
    std::vector<int> subset;
    for (int step = 0; step < 10000; ++step) {
      const int i = pick(rng);
      if (step % 3 == 0) {
        svi_step(state, family, corpus, i, z[i]);
      } else {
        sample_subset(rng, 8, 2, subset);
        esvi_step(state, family, corpus, i, z[i], subset);
      }
    }
    GlobalMixtureState batch(8, corpus.vocab_size);
    batch_refresh_globals(batch, family, corpus, z);
    for (int k = 0; k < 8; ++k) {
      worst_rel = std::max(worst_rel,
                           std::abs(state.pi_tilde[k] - batch.pi_tilde[k]) /
                               std::max(1.0, std::abs(batch.pi_tilde[k])));
      worst_rel = std::max(worst_rel,
                           std::abs(state.n_tilde[k] - batch.n_tilde[k]) /
                               std::max(1.0, std::abs(batch.n_tilde[k])));
      for (int v = 0; v < corpus.vocab_size; ++v) {
        worst_rel = std::max(worst_rel,
                             std::abs(state.nu(k)[v] - batch.nu(k)[v]) /
                                 std::max(1.0, std::abs(batch.nu(k)[v])));
      }
    }
  }
  {
    LdaState state = init_lda_state(corpus, 8, 0.1, 0.01, 0, 23);
    std::mt19937_64 rng(29);
    std::uniform_int_distribution<int> pick(
        0, static_cast<int>(corpus.words.size()) - 1);
    for (int step = 0; step < 10000; ++step) {
      lda_update_slot(state, corpus, pick(rng), state.normalizers,
                      state.normalizers, {}, 4, rng);
    }
    // batch rebuild from the stored assignments
    std::vector<double> gamma(state.gamma.size(), state.alpha);
    std::vector<double> lambda(state.lambda.size(), state.eta);
    for (std::size_t s = 0; s < corpus.words.size(); ++s) {
      const int d = state.slot_doc[s];
      const int v = corpus.words[s];
      const double c = corpus.counts[s];
      auto phi = state.phi_row(static_cast<int>(s));
      for (int k = 0; k < 8; ++k) {
        gamma[static_cast<std::size_t>(d) * 8 + k] += c * phi[k];
        lambda[static_cast<std::size_t>(v) * 8 + k] += c * phi[k];
      }
    }
    for (std::size_t i = 0; i < gamma.size(); ++i) {
      worst_rel = std::max(worst_rel, std::abs(state.gamma[i] - gamma[i]) /
                                          std::max(1.0, std::abs(gamma[i])));
    }
    for (std::size_t i = 0; i < lambda.size(); ++i) {
      worst_rel = std::max(worst_rel, std::abs(state.lambda[i] - lambda[i]) /
                                          std::max(1.0, std::abs(lambda[i])));
    }
  }
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "10^4 svi/esvi steps + 10^4 lda slot updates, worst relative "
                "drift %.2e <= 1e-8",
                worst_rel);
  return worst_rel <= 1e-8;
}

bool criterion4_conservation() {
  const Corpus corpus = desk_corpus();
  LdaState state = init_lda_state(corpus, 8, 0.1, 0.01, 0, 31);
  std::mt19937_64 rng(37);
  double worst_gamma = 0.0, worst_lambda = 0.0;
  int snapshots = 0;
  for (int epoch = 0; epoch < 30; ++epoch) {
    for (std::size_t s = 0; s < corpus.words.size(); ++s) {
      lda_update_slot(state, corpus, static_cast<int>(s), state.normalizers,
                      state.normalizers, {}, 4, rng);
    }
    const LdaConservation cons = check_lda_conservation(state, corpus);
    worst_gamma = std::max(worst_gamma, cons.max_gamma_error);
    worst_lambda = std::max(worst_lambda, cons.lambda_error);
    ++snapshots;
  }
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "%d snapshots: max |sum(gamma-alpha)-N_d| %.2e <= 1e-8, "
                "|sum(lambda-eta)-tokens| %.2e <= 1e-6",
                snapshots, worst_gamma, worst_lambda);
  return worst_gamma <= 1e-8 && worst_lambda <= 1e-6;
}

bool criterion5_reduction_identities() {
  const Corpus corpus = desk_corpus();
  bool svi_identity = true;
  {
    MultinomialFamily family(corpus.vocab_size, 0.05, 0.5);
    GlobalMixtureState a(8, corpus.vocab_size), b(8, corpus.vocab_size);
    auto za = init_assignments(corpus, 8, 0, 41);
    auto zb = za;
    batch_refresh_globals(a, family, corpus, za);
    batch_refresh_globals(b, family, corpus, zb);
    std::vector<int> full(8);
    for (int k = 0; k < 8; ++k) full[k] = k;
    for (int step = 0; step < 500; ++step) {
      const int i = step % corpus.num_docs;
      esvi_step(a, family, corpus, i, za[i], full);
      svi_step(b, family, corpus, i, zb[i]);
      if (za[i].dense != zb[i].dense || a.pi_tilde != b.pi_tilde ||
          a.nu_tilde != b.nu_tilde) {
        svi_identity = false;
        break;
      }
    }
  }

  bool topk_identity = true;
  {
    // identical serial nomadic schedules, dense vs cutoff = K
    LdaState dense = init_lda_state(corpus, 8, 0.1, 0.01, 0, 43);
    LdaState topk = init_lda_state(corpus, 8, 0.1, 0.01, 8, 43);
    std::mt19937_64 rng_a(47), rng_b(47);
    const auto word_slots = build_word_slots(corpus);
    for (int pass = 0; pass < 8 && topk_identity; ++pass) {
      for (int v = 0; v < corpus.vocab_size; ++v) {
        for (int slot : word_slots[v]) {
          lda_update_slot(dense, corpus, slot, dense.normalizers,
                          dense.normalizers, {}, 4, rng_a);
          lda_update_slot(topk, corpus, slot, topk.normalizers,
                          topk.normalizers, {}, 4, rng_b);
        }
      }
      topk_identity = dense.lambda == topk.lambda &&
                      dense.gamma == topk.gamma &&
                      dense.normalizers == topk.normalizers;
    }

    // and through the harness: record-for-record identical traces
    ExperimentConfig dense_cfg;
    dense_cfg.model = Model::lda;
    dense_cfg.algo = Algo::esvi;
    dense_cfg.topics = 8;
    dense_cfg.seed = 53;
    dense_cfg.max_epochs = 4;
    dense_cfg.deterministic_time = true;
    ExperimentConfig topk_cfg = dense_cfg;
    topk_cfg.algo = Algo::esvi_topk;
    topk_cfg.topk = 8;
    const RunTrace ta = run_experiment(dense_cfg, corpus);
    const RunTrace tb = run_experiment(topk_cfg, corpus);
    if (ta.records.size() != tb.records.size()) topk_identity = false;
    for (std::size_t i = 0; topk_identity && i < ta.records.size(); ++i) {
      topk_identity = ta.records[i].updates == tb.records[i].updates &&
                      ta.records[i].elbo == tb.records[i].elbo;
    }
  }
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "esvi(K)==svi z-update bitwise: %s; topk(C=K)==dense bitwise: %s",
                svi_identity ? "yes" : "no", topk_identity ? "yes" : "no");
  return svi_identity && topk_identity;
}

bool criterion6_parallel_agreement() {
  const auto start = Clock::now();
  const Corpus corpus = desk_corpus_wide();

  ExperimentConfig serial;
  serial.model = Model::lda;
  serial.algo = Algo::esvi;
  serial.topics = 8;
  serial.alpha = 1.0;
  serial.eta = 0.01;
  serial.seed = 9;
  serial.max_epochs = 150;
  const double baseline = run_experiment(serial, corpus).records.back().elbo;

  const long long epoch = static_cast<long long>(corpus.words.size()) * 8;
  double worst_gap = 0.0;
  long long census_total = 0, violations = 0;
  const int census_plan[3] = {34, 33, 33};
  const int workers_plan[3] = {2, 4, 8};
  for (int run = 0; run < 3; ++run) {
    LdaState state = init_lda_state(corpus, 8, 1.0, 0.01, 0, 9);
    NomadOptions options;
    options.workers = workers_plan[run];
    options.max_updates = 150 * epoch;
    options.eval_every = 25 * epoch;
    options.seed = 9;
    options.census_checks = census_plan[run];
    NomadStats stats;
    const RunTrace trace = run_async_lda(state, corpus, options, &stats);
    const double final_elbo = trace.records.back().elbo;
    worst_gap = std::max(worst_gap,
                         std::abs(final_elbo - baseline) / std::abs(baseline));
    census_total += stats.census_checks;
    violations += stats.ownership_violations;
  }
  const double elapsed = seconds_since(start);
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "P=2,4,8 worst relative gap %.4f%% <= 0.5%%, %lld/100 censuses, "
                "%lld non-owner updates, %.1fs < 300s",
                100.0 * worst_gap, census_total, violations, elapsed);
  return worst_gap <= 5e-3 && census_total >= 100 && violations == 0 &&
         elapsed < 300.0;
}

bool criterion7_update_efficiency_trend() {
  const Corpus corpus = desk_corpus();
  int bad_checkpoints = 0;
  int checked = 0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    ExperimentConfig vi;
    vi.model = Model::mixmult;
    vi.algo = Algo::vi;
    vi.topics = 8;
    vi.alpha = 0.5;
    vi.eta = 0.05;
    vi.seed = seed;
    vi.max_updates = 120000;
    vi.eval_every = 3000;
    ExperimentConfig esvi_cfg = vi;
    esvi_cfg.algo = Algo::esvi;
    const RunTrace tv = run_experiment(vi, corpus);
    const RunTrace te = run_experiment(esvi_cfg, corpus);
    const std::size_t n = std::min(tv.records.size(), te.records.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (tv.records[i].updates < 12000) continue;  // first 10% of budget
      ++checked;
      if (te.records[i].elbo <
          tv.records[i].elbo - 1e-9 * std::abs(tv.records[i].elbo)) {
        ++bad_checkpoints;
      }
    }
  }
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "3 seeds, %d checkpoints after 10%% budget, esvi below vi at %d",
                checked, bad_checkpoints);
  return bad_checkpoints == 0;
}

bool criterion8_cutoff_sweep() {
  const Corpus corpus = desk_corpus_wide();
  // K = 8: C in {1, K/8, K/4, K/2, K} deduplicates to {1, 2, 4, 8}
  const int cutoffs[4] = {1, 2, 4, 8};
  RunTrace traces[4];
  for (int i = 0; i < 4; ++i) {
    ExperimentConfig config;
    config.model = Model::lda;
    config.algo = Algo::esvi_topk;
    config.topk = cutoffs[i];
    config.topics = 8;
    config.alpha = 1.0;
    config.eta = 0.01;
    config.seed = 1;
    config.max_epochs = 150;
    traces[i] = run_experiment(config, corpus);
  }
  const double full = traces[3].records.back().elbo;
  const double quarter = traces[1].records.back().elbo;
  const double gap = std::abs(quarter - full) / std::abs(full);

  const std::size_t warmup = traces[0].records.size() / 10;
  int not_worst = 0;
  for (std::size_t i = warmup; i < traces[0].records.size(); ++i) {
    for (int j = 1; j < 4; ++j) {
      if (i < traces[j].records.size() &&
          traces[0].records[i].elbo >= traces[j].records[i].elbo) {
        ++not_worst;
      }
    }
  }
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "final elbo gap K/4 vs K = %.4f%% <= 1%%; C=1 not strictly "
                "worst at %d checkpoints after warmup",
                100.0 * gap, not_worst);
  return gap <= 0.01 && not_worst == 0;
}

bool criterion9_digamma() {
  double worst = 0.0;
  const int points = 100000;
  for (int i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / (points - 1);
    const double x = std::pow(10.0, -3.0 + 9.0 * t);
    worst = std::max(
        worst,
        std::abs(digamma(x) - static_cast<double>(oracles::digamma_ld(x))));
  }
  double worst_recurrence = 0.0;
  for (int i = 0; i < points; i += 10) {
    const double t = static_cast<double>(i) / (points - 1);
    const double x = std::pow(10.0, -3.0 + 9.0 * t);
    worst_recurrence = std::max(
        worst_recurrence, std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x));
  }
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "max error %.2e <= 1e-10 on 10^5-point log grid; recurrence "
                "residual %.2e <= 1e-12",
                worst, worst_recurrence);
  return worst <= 1e-10 && worst_recurrence <= 1e-12;
}

bool criterion10_perplexity_trend() {
  const Corpus corpus = desk_corpus_wide();
  int monotonicity_violations = 0;
  int speedup_failures = 0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    auto [train, test] = split_train_test(corpus, 0.2, seed);
    ExperimentConfig vi;
    vi.model = Model::lda;
    vi.algo = Algo::vi;
    vi.topics = 8;
    vi.alpha = 1.0;
    vi.eta = 0.01;
    vi.seed = seed;
    vi.max_epochs = 30;
    ExperimentConfig esvi_cfg = vi;
    esvi_cfg.algo = Algo::esvi;
    const RunTrace tv = run_experiment(vi, train, &test);
    const RunTrace te = run_experiment(esvi_cfg, train, &test);

    for (const RunTrace* t : {&tv, &te}) {
      for (std::size_t i = 1; i < t->records.size(); ++i) {
        if (*t->records[i].perplexity > *t->records[i - 1].perplexity * 1.01) {
          ++monotonicity_violations;
        }
      }
    }
    const double vi_final = *tv.records.back().perplexity;
    long long esvi_hit = -1;
    for (const TraceRecord& r : te.records) {
      if (*r.perplexity <= vi_final) {
        esvi_hit = r.updates;
        break;
      }
    }
    if (esvi_hit < 0 || esvi_hit >= tv.records.back().updates) {
      ++speedup_failures;
    }
  }
  std::snprintf(detail_buffer, sizeof(detail_buffer),
                "3 seeds: %d snapshots rose beyond 1%%; esvi misses vi's final "
                "perplexity early on %d seeds",
                monotonicity_violations, speedup_failures);
  return monotonicity_violations == 0 && speedup_failures == 0;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    bool (*run)();
  };
  const Criterion criteria[] = {
      {1, "lemma-1 optimality oracle", criterion1_lemma_oracle},
      {2, "serial elbo monotonicity", criterion2_serial_monotonicity},
      {3, "incremental/batch equivalence", criterion3_incremental_batch},
      {4, "gamma/lambda conservation", criterion4_conservation},
      {5, "reduction identities", criterion5_reduction_identities},
      {6, "parallel agreement and census", criterion6_parallel_agreement},
      {7, "esvi beats vi per coordinate update", criterion7_update_efficiency_trend},
      {8, "top-k cutoff sweep", criterion8_cutoff_sweep},
      {9, "digamma accuracy", criterion9_digamma},
      {10, "held-out perplexity trend", criterion10_perplexity_trend},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    detail_buffer[0] = '\0';
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      std::snprintf(detail_buffer, sizeof(detail_buffer), "exception: %s",
                    e.what());
    }
    std::printf("%s  criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", c.id,
                c.name, detail_buffer);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
