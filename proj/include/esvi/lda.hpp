#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "esvi/corpus.hpp"
#include "esvi/topk.hpp"

namespace esvi {

// Variational state for LDA. lambda is stored word-major so that a word
// column lambda^v = lambda_{1:K}^v is contiguous; that column is the unit
// that migrates between workers. Assignments are kept per corpus slot
// (one nonzero (d, v) pair, applied with its count as multiplicity),
// dense or truncated.
struct LdaState {
  int num_topics = 0;
  int vocab_size = 0;
  int num_docs = 0;
  double alpha = 0.1;
  double eta = 0.01;

  std::vector<double> lambda;       // V x K, lambda[v*K + k]
  std::vector<double> gamma;        // D x K
  std::vector<double> normalizers;  // K, pi_k = sum_v lambda_k^v

  bool topk_mode = false;
  int cutoff = 0;
  std::vector<double> phi_dense;          // nnz x K when dense
  std::vector<TopKAssignment> phi_topk;   // nnz when truncated
  std::vector<int> slot_doc;              // nnz, owning document per slot

  std::span<double> lambda_col(int v) {
    return {lambda.data() + static_cast<std::size_t>(v) * num_topics,
            static_cast<std::size_t>(num_topics)};
  }
  std::span<const double> lambda_col(int v) const {
    return {lambda.data() + static_cast<std::size_t>(v) * num_topics,
            static_cast<std::size_t>(num_topics)};
  }
  std::span<double> gamma_row(int d) {
    return {gamma.data() + static_cast<std::size_t>(d) * num_topics,
            static_cast<std::size_t>(num_topics)};
  }
  std::span<const double> gamma_row(int d) const {
    return {gamma.data() + static_cast<std::size_t>(d) * num_topics,
            static_cast<std::size_t>(num_topics)};
  }
  std::span<double> phi_row(int slot) {
    return {phi_dense.data() + static_cast<std::size_t>(slot) * num_topics,
            static_cast<std::size_t>(num_topics)};
  }
  std::span<const double> phi_row(int slot) const {
    return {phi_dense.data() + static_cast<std::size_t>(slot) * num_topics,
            static_cast<std::size_t>(num_topics)};
  }
};

// phi ~ Dirichlet(1) per slot (truncated to `cutoff` when topk), then
// gamma, lambda and the normalizers are rebuilt from phi in one batch pass.
LdaState init_lda_state(const Corpus& corpus, int num_topics, double alpha,
                        double eta, int cutoff, std::uint64_t seed);

// u_k = psi(gamma_d^k) + psi(lambda_k^{w}) - psi(pi_k) for k in `topics`,
// scored against the caller's normalizer view (exact in serial runs, a
// worker's possibly-stale ledger copy under the nomad scheduler).
void compute_phi_scores(const LdaState& state, int d, int v,
                        std::span<const int> topics,
                        std::span<const double> normalizers,
                        std::span<double> out);

// Dense phi update: softmax of the scores over all K topics.
void update_phi_dense(const LdaState& state, int d, int v,
                      std::span<const double> normalizers,
                      std::span<double> out);

// Truncated phi update: redistributes the token's unit mass over the
// stored topics plus `refresh` random topics, then truncates back to the
// cutoff. The refresh draw is skipped when the stored support already
// covers every topic.
TopKAssignment update_phi_topk(const LdaState& state, int d, int v,
                               const TopKAssignment& current,
                               std::span<const double> normalizers,
                               int refresh, std::mt19937_64& rng);

// gamma_d, lambda^v and the normalizer sinks absorb count * (new - old).
// Aborts when a lambda entry falls below eta.
void apply_phi_delta(LdaState& state, int d, int v, double count,
                     std::span<const double> old_phi,
                     std::span<const double> new_phi,
                     std::span<double> normalizers,
                     std::span<double> pending = {});
void apply_phi_delta_sparse(LdaState& state, int d, int v, double count,
                            const TopKAssignment& old_phi,
                            const TopKAssignment& new_phi,
                            std::span<double> normalizers,
                            std::span<double> pending = {});

// Recompute and apply one slot against the given normalizer view.
// Returns the number of topic coordinates scored.
int lda_update_slot(LdaState& state, const Corpus& corpus, int slot,
                    std::span<const double> normalizer_view,
                    std::span<double> normalizer_sink,
                    std::span<double> pending, int refresh,
                    std::mt19937_64& rng);

// Full LDA ELBO with all Dirichlet KL terms.
double lda_elbo_serial(const LdaState& state, const Corpus& corpus);
double lda_elbo_parallel(const LdaState& state, const Corpus& corpus,
                         int threads);

// One batch VI epoch: every phi recomputed from the current (gamma,
// lambda), then gamma/lambda/normalizers rebuilt from phi.
void lda_vi_epoch_serial(LdaState& state, const Corpus& corpus);
void lda_vi_epoch_parallel(LdaState& state, const Corpus& corpus, int threads);

// Document-completion perplexity: fold in the first half of each test
// document by gamma-only fixed-point iterations with lambda frozen, then
// score the second half with posterior-mean predictive probabilities.
struct PerplexityResult {
  double perplexity = 1.0;
  int skipped_docs = 0;  // test documents with fewer than 2 tokens
};
PerplexityResult heldout_perplexity(const LdaState& state, const Corpus& test,
                                    int fold_iterations = 20);

// Conservation diagnostics.
struct LdaConservation {
  double max_gamma_error = 0.0;  // max_d |sum_k (gamma_d^k - alpha) - N_d|
  double lambda_error = 0.0;     // |sum_{k,v} (lambda_k^v - eta) - total tokens|
  double max_normalizer_error = 0.0;
};
LdaConservation check_lda_conservation(const LdaState& state,
                                       const Corpus& corpus);

// slot ids grouped by word, for column-driven update schedules
std::vector<std::vector<int>> build_word_slots(const Corpus& corpus,
                                               int doc_begin = 0,
                                               int doc_end = -1);

}  // namespace esvi
