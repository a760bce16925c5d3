#include "esvi/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "esvi/families.hpp"
#include "esvi/math.hpp"

namespace esvi {

Algo parse_algo(const std::string& name) {
  if (name == "vi") return Algo::vi;
  if (name == "svi") return Algo::svi;
  if (name == "esvi") return Algo::esvi;
  if (name == "esvi-topk") return Algo::esvi_topk;
  throw std::invalid_argument("unknown algo '" + name +
                              "' (expected vi, svi, esvi, esvi-topk)");
}

Model parse_model(const std::string& name) {
  if (name == "lda") return Model::lda;
  if (name == "gmm") return Model::gmm;
  if (name == "mixmult") return Model::mixmult;
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected lda, gmm, mixmult)");
}

std::string to_string(Algo algo) {
  switch (algo) {
    case Algo::vi: return "vi";
    case Algo::svi: return "svi";
    case Algo::esvi: return "esvi";
    case Algo::esvi_topk: return "esvi-topk";
  }
  return "?";
}

std::string to_string(Model model) {
  switch (model) {
    case Model::lda: return "lda";
    case Model::gmm: return "gmm";
    case Model::mixmult: return "mixmult";
  }
  return "?";
}

long long epoch_coordinate_updates(const ExperimentConfig& config,
                                   const Corpus& corpus) {
  if (config.model == Model::lda) {
    return static_cast<long long>(corpus.words.size()) * config.topics;
  }
  return static_cast<long long>(corpus.num_data()) * config.topics;
}

void validate_config(const ExperimentConfig& config, const Corpus& corpus) {
  if (config.topics < 1) throw std::invalid_argument("topics must be >= 1");
  if (config.workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (!(config.alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (!(config.eta > 0.0)) throw std::invalid_argument("eta must be > 0");
  if (config.topk < 0 || config.topk > config.topics) {
    throw std::invalid_argument("topk cutoff must lie in [0, topics]");
  }
  if (config.algo == Algo::esvi_topk && config.topk < 1) {
    throw std::invalid_argument("esvi-topk requires --topk >= 1");
  }
  if (config.algo == Algo::svi && config.workers > 1) {
    throw std::invalid_argument(
        "svi is inherently serial; it cannot run with workers > 1");
  }
  if ((config.algo == Algo::esvi || config.algo == Algo::esvi_topk) &&
      config.topics < 2) {
    throw std::invalid_argument(
        "esvi redistributes mass over >= 2 coordinates; needs topics >= 2");
  }
  if (config.algo == Algo::esvi_topk && config.model != Model::lda &&
      config.workers > 1) {
    throw std::invalid_argument(
        "esvi-topk truncation can move mass on columns a worker does not "
        "hold; only the lda engine supports it with workers > 1");
  }
  if (config.model == Model::gmm) {
    if (corpus.dense.empty()) {
      throw std::invalid_argument("gmm needs a dense dataset");
    }
  } else if (corpus.num_docs < 1) {
    throw std::invalid_argument("bag-of-words corpus is empty");
  }
  if (config.test_fraction != 0.0 && config.model != Model::lda) {
    throw std::invalid_argument(
        "held-out perplexity is defined for the lda model only");
  }
  if (config.test_fraction < 0.0 || config.test_fraction >= 1.0) {
    throw std::invalid_argument("test fraction must lie in [0, 1)");
  }
  if (config.max_updates <= 0 && config.max_epochs <= 0) {
    throw std::invalid_argument("set --max-updates or --max-epochs");
  }
  if (config.subset_size < 2) {
    throw std::invalid_argument("subset size must be >= 2");
  }
}

std::string describe_config(const ExperimentConfig& config) {
  std::ostringstream ss;
  ss << "model=" << to_string(config.model) << " algo=" << to_string(config.algo)
     << " topics=" << config.topics << " topk=" << config.topk
     << " workers=" << config.workers << " alpha=" << config.alpha
     << " eta=" << config.eta << " seed=" << config.seed
     << " subset=" << config.subset_size;
  return ss.str();
}

namespace {

using Clock = std::chrono::steady_clock;

struct Budget {
  long long max_updates = 0;
  long long eval_every = 0;
};

Budget resolve_budget(const ExperimentConfig& config, const Corpus& corpus) {
  const long long epoch = epoch_coordinate_updates(config, corpus);
  Budget b;
  b.max_updates = config.max_updates > 0 ? config.max_updates
                                         : config.max_epochs * epoch;
  b.eval_every = config.eval_every > 0 ? config.eval_every : epoch;
  if (b.max_updates <= 0) throw std::invalid_argument("empty update budget");
  return b;
}

// Serial evaluation cadence shared by the single-worker drivers:
// snapshots at exact coordinate-update thresholds so equal seeds give
// identical traces.
class SerialEval {
 public:
  SerialEval(const ExperimentConfig& config, Budget budget)
      : config_(config), budget_(budget), start_(Clock::now()) {}

  RunTrace& trace() { return trace_; }
  long long max_updates() const { return budget_.max_updates; }

  template <typename ElboFn>
  void snapshot(long long updates, ElboFn&& elbo_fn) {
    TraceRecord record;
    record.updates = updates;
    record.seconds =
        config_.deterministic_time
            ? static_cast<double>(trace_.records.size())
            : std::chrono::duration<double>(Clock::now() - start_).count();
    record.elbo = elbo_fn(record);
    if (have_prev_ &&
        record.elbo < prev_elbo_ - 1e-9 * std::abs(prev_elbo_)) {
      const std::string msg =
          "elbo decreased beyond slack at update " + std::to_string(updates);
      if (config_.elbo_check == ElboCheck::strict) throw std::runtime_error(msg);
      if (config_.elbo_check == ElboCheck::warn) std::cerr << msg << "\n";
    }
    prev_elbo_ = record.elbo;
    have_prev_ = true;
    trace_.records.push_back(record);
  }

  // true while the budget is not exhausted; runs snapshots due at `updates`
  template <typename ElboFn>
  bool checkpoint(long long updates, ElboFn&& elbo_fn) {
    while (next_eval_ <= updates && next_eval_ <= budget_.max_updates) {
      snapshot(next_eval_, elbo_fn);
      next_eval_ += budget_.eval_every;
    }
    return updates < budget_.max_updates;
  }

  void begin() { next_eval_ = budget_.eval_every; }

 private:
  const ExperimentConfig& config_;
  Budget budget_;
  Clock::time_point start_;
  RunTrace trace_;
  long long next_eval_ = 0;
  double prev_elbo_ = 0.0;
  bool have_prev_ = false;
};

std::unique_ptr<ModelFamily> make_family(const ExperimentConfig& config,
                                         const Corpus& corpus) {
  if (config.model == Model::mixmult) {
    return std::make_unique<MultinomialFamily>(corpus.vocab_size, config.eta,
                                               config.alpha);
  }
  return std::make_unique<DiagonalGaussianFamily>(
      corpus.dense_dim, config.gmm_m0, config.gmm_kappa0, config.gmm_a0,
      config.gmm_b0, config.alpha);
}

// ---- generic mixture drivers ----------------------------------------------

RunTrace run_mixture(const ExperimentConfig& config, const Corpus& corpus,
                     NomadStats* stats) {
  auto family = make_family(config, corpus);
  GlobalMixtureState state(config.topics, family->stat_dim());
  const int cutoff = config.algo == Algo::esvi_topk ? config.topk : 0;
  std::vector<LocalAssignment> z =
      init_assignments(corpus, config.topics, cutoff, config.seed);
  batch_refresh_globals(state, *family, corpus, z);

  const Budget budget = resolve_budget(config, corpus);

  if ((config.algo == Algo::esvi || config.algo == Algo::esvi_topk) &&
      config.workers > 1) {
    NomadOptions options;
    options.workers = config.workers;
    options.max_updates = budget.max_updates;
    options.eval_every = budget.eval_every;
    options.seed = config.seed;
    options.subset_size = config.subset_size;
    options.steps_per_hold = config.steps_per_hold;
    options.census_checks = config.census_checks;
    options.deterministic_time = config.deterministic_time;
    RunTrace trace = run_async_mixture(state, *family, corpus, z, options, stats);
    trace.metadata = describe_config(config);
    return trace;
  }

  SerialEval eval(config, budget);
  eval.begin();
  const int n = corpus.num_data();
  auto elbo_fn = [&](const TraceRecord&) {
    return mixture_elbo_serial(state, *family, corpus, z);
  };
  eval.snapshot(0, elbo_fn);

  std::mt19937_64 rng(config.seed);
  long long updates = 0;

  switch (config.algo) {
    case Algo::vi: {
      const long long per_epoch = epoch_coordinate_updates(config, corpus);
      do {
        if (config.workers > 1) {
          vi_epoch_parallel(state, *family, corpus, z, config.workers);
        } else {
          vi_epoch_serial(state, *family, corpus, z);
        }
        updates += per_epoch;
      } while (eval.checkpoint(updates, elbo_fn));
      break;
    }
    case Algo::svi: {
      std::uniform_int_distribution<int> pick(0, n - 1);
      do {
        const int i = pick(rng);
        svi_step(state, *family, corpus, i, z[i]);
        updates += config.topics;
      } while (eval.checkpoint(updates, elbo_fn));
      break;
    }
    case Algo::esvi: {
      std::uniform_int_distribution<int> pick(0, n - 1);
      std::vector<int> subset;
      const int size = std::min(config.subset_size, config.topics);
      do {
        const int i = pick(rng);
        sample_subset(rng, config.topics, size, subset);
        esvi_step(state, *family, corpus, i, z[i], subset);
        updates += size;
      } while (eval.checkpoint(updates, elbo_fn));
      break;
    }
    case Algo::esvi_topk: {
      std::uniform_int_distribution<int> pick(0, n - 1);
      std::vector<int> subset;
      const int size = std::min(config.subset_size, config.topics);
      do {
        const int i = pick(rng);
        sample_subset(rng, config.topics, size, subset);
        esvi_topk_step(state, *family, corpus, i, z[i], subset, config.topk);
        updates += size;
      } while (eval.checkpoint(updates, elbo_fn));
      break;
    }
  }
  RunTrace trace = std::move(eval.trace());
  trace.metadata = describe_config(config);
  return trace;
}

// ---- lda drivers -----------------------------------------------------------

RunTrace run_lda(const ExperimentConfig& config, const Corpus& corpus,
                 const Corpus* test, NomadStats* stats) {
  const int cutoff = config.algo == Algo::esvi_topk ? config.topk : 0;
  LdaState state = init_lda_state(corpus, config.topics, config.alpha,
                                  config.eta, cutoff, config.seed);
  const Budget budget = resolve_budget(config, corpus);

  if ((config.algo == Algo::esvi || config.algo == Algo::esvi_topk) &&
      config.workers > 1) {
    NomadOptions options;
    options.workers = config.workers;
    options.max_updates = budget.max_updates;
    options.eval_every = budget.eval_every;
    options.seed = config.seed;
    options.refresh = config.refresh;
    options.sync_every = config.sync_every;
    options.census_checks = config.census_checks;
    options.deterministic_time = config.deterministic_time;
    options.fold_iterations = config.fold_iterations;
    options.test_corpus = test;
    RunTrace trace = run_async_lda(state, corpus, options, stats);
    trace.metadata = describe_config(config);
    return trace;
  }

  SerialEval eval(config, budget);
  eval.begin();
  auto elbo_fn = [&](TraceRecord& record) {
    const LdaConservation cons = check_lda_conservation(state, corpus);
    const double scale = std::max(1.0, corpus.total_tokens());
    if (cons.max_gamma_error > 1e-8 * scale || cons.lambda_error > 1e-6 * scale) {
      throw std::runtime_error("lda conservation violated at snapshot");
    }
    if (test != nullptr) {
      record.perplexity =
          heldout_perplexity(state, *test, config.fold_iterations).perplexity;
    }
    return lda_elbo_serial(state, corpus);
  };
  auto elbo_wrap = [&](TraceRecord& record) { return elbo_fn(record); };
  eval.snapshot(0, elbo_wrap);

  std::mt19937_64 rng(config.seed);
  long long updates = 0;

  switch (config.algo) {
    case Algo::vi: {
      const long long per_epoch = epoch_coordinate_updates(config, corpus);
      do {
        if (config.workers > 1) {
          lda_vi_epoch_parallel(state, corpus, config.workers);
        } else {
          lda_vi_epoch_serial(state, corpus);
        }
        updates += per_epoch;
      } while (eval.checkpoint(updates, elbo_wrap));
      break;
    }
    case Algo::svi: {
      // the sampled datum is a document; its tokens are updated in place
      std::uniform_int_distribution<int> pick(0, corpus.num_docs - 1);
      do {
        const int d = pick(rng);
        for (std::int64_t s = corpus.doc_offsets[d];
             s < corpus.doc_offsets[d + 1]; ++s) {
          updates += lda_update_slot(state, corpus, static_cast<int>(s),
                                     state.normalizers, state.normalizers, {},
                                     config.refresh, rng);
        }
      } while (eval.checkpoint(updates, elbo_wrap));
      break;
    }
    case Algo::esvi:
    case Algo::esvi_topk: {
      // serial nomadic schedule: sweep word columns in a seeded random
      // order, updating every local occurrence per visit
      std::vector<int> order(corpus.vocab_size);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      const auto word_slots = build_word_slots(corpus);
      bool running = true;
      while (running) {
        for (int v : order) {
          for (int slot : word_slots[v]) {
            updates += lda_update_slot(state, corpus, slot, state.normalizers,
                                       state.normalizers, {}, config.refresh,
                                       rng);
          }
          if (!eval.checkpoint(updates, elbo_wrap)) {
            running = false;
            break;
          }
        }
      }
      break;
    }
  }
  RunTrace trace = std::move(eval.trace());
  trace.metadata = describe_config(config);
  return trace;
}

}  // namespace

RunTrace run_experiment(const ExperimentConfig& config, const Corpus& train,
                        const Corpus* test, NomadStats* stats) {
  validate_config(config, train);
  RunTrace trace = config.model == Model::lda
                       ? run_lda(config, train, test, stats)
                       : run_mixture(config, train, stats);
  if (!config.out_path.empty()) write_trace(trace, config.out_path);
  return trace;
}

}  // namespace esvi
