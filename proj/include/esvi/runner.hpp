#pragma once

#include <cstdint>
#include <string>

#include "esvi/corpus.hpp"
#include "esvi/nomad.hpp"
#include "esvi/trace.hpp"

namespace esvi {

enum class Algo { vi, svi, esvi, esvi_topk };
enum class Model { lda, gmm, mixmult };

Algo parse_algo(const std::string& name);
Model parse_model(const std::string& name);
std::string to_string(Algo algo);
std::string to_string(Model model);

enum class ElboCheck { off, warn, strict };

struct ExperimentConfig {
  Model model = Model::lda;
  Algo algo = Algo::vi;
  int topics = 8;    // K
  int topk = 0;      // C cutoff; 0 means dense
  int workers = 1;   // P
  double alpha = 0.1;
  double eta = 0.01;
  std::uint64_t seed = 42;
  long long max_epochs = 0;   // used when max_updates == 0
  long long max_updates = 0;  // coordinate-update budget
  long long eval_every = 0;   // 0 -> one epoch-equivalent
  double test_fraction = 0.0;
  std::string out_path;

  int subset_size = 2;    // esvi: coordinates redistributed per step
  int refresh = 4;        // lda top-k: random rescore sample
  int steps_per_hold = 1; // nomad mixture engine
  int sync_every = 1;     // nomad lda: ledger flush cadence
  int census_checks = 0;

  double gmm_m0 = 0.0, gmm_kappa0 = 0.1, gmm_a0 = 1.0, gmm_b0 = 1.0;

  bool deterministic_time = false;
  int fold_iterations = 20;
  ElboCheck elbo_check = ElboCheck::warn;
};

// coordinate updates in one full pass over the data
long long epoch_coordinate_updates(const ExperimentConfig& config,
                                   const Corpus& corpus);

// Throws std::invalid_argument describing the first contradiction found.
void validate_config(const ExperimentConfig& config, const Corpus& corpus);

std::string describe_config(const ExperimentConfig& config);

// Runs the configured optimizer on `train`, evaluating every
// `eval_every` coordinate updates (perplexity against `test` when given,
// LDA only). Writes the CSV when out_path is set.
RunTrace run_experiment(const ExperimentConfig& config, const Corpus& train,
                        const Corpus* test = nullptr,
                        NomadStats* stats = nullptr);

}  // namespace esvi
