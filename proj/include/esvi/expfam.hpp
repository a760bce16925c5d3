#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "esvi/corpus.hpp"
#include "esvi/family.hpp"

namespace esvi {

Datum make_datum(const Corpus& corpus, int i);

// Scores u_{i,k} = psi(pi_tilde_k) + <phi(x,k), E[theta_k]> - E[g(theta_k)]
// for each k in `subset`. The psi(sum_k' pi_tilde_k') term is omitted; it
// shifts every score equally and cancels in the softmax, which is what
// lets a worker score components without seeing the full pi_tilde vector.
void compute_u(const GlobalMixtureState& state, const ModelFamily& family,
               const Datum& x, std::span<const int> subset,
               std::span<double> out);

// Full softmax z-update, max-subtracted.
void update_z_full(std::span<const double> u, LocalAssignment& out);

// Closed-form solution of the restricted problem:
// z*_k = C exp(u_k) / sum_{k' in subset} exp(u_k').
std::vector<double> update_z_subset(const RestrictedProblem& problem);

// Restricted objective sum_k z_k (u_k - log z_k) with 0 log 0 = 0.
// Throws if the weights are infeasible for the problem.
double restricted_elbo(const RestrictedProblem& problem,
                       std::span<const double> weights);

// Incremental global updates; both abort on bookkeeping corruption.
void update_pi(GlobalMixtureState& state, const ModelFamily& family, int k,
               double delta);
void update_theta(GlobalMixtureState& state, const ModelFamily& family,
                  const Datum& x, int k, double delta);

// Batch recomputation of pi_tilde, n_tilde, nu_tilde from all assignments.
void batch_refresh_globals(GlobalMixtureState& state,
                           const ModelFamily& family, const Corpus& corpus,
                           std::span<const LocalAssignment> z);

// Assignments drawn from a symmetric Dirichlet(1) per datum (truncated to
// `cutoff` entries when cutoff > 0), followed by one batch global pass.
std::vector<LocalAssignment> init_assignments(const Corpus& corpus, int k,
                                              int cutoff, std::uint64_t seed);

// Full ELBO. The parallel variant distributes the per-datum terms with
// OpenMP; the serial one is the reference used by the tests.
double mixture_elbo_serial(const GlobalMixtureState& state,
                           const ModelFamily& family, const Corpus& corpus,
                           std::span<const LocalAssignment> z);
double mixture_elbo_parallel(const GlobalMixtureState& state,
                             const ModelFamily& family, const Corpus& corpus,
                             std::span<const LocalAssignment> z, int threads);

// One batch VI epoch: z-updates for all data from the current globals,
// then the batch global pass.
void vi_epoch_serial(GlobalMixtureState& state, const ModelFamily& family,
                     const Corpus& corpus, std::span<LocalAssignment> z);
void vi_epoch_parallel(GlobalMixtureState& state, const ModelFamily& family,
                       const Corpus& corpus, std::span<LocalAssignment> z,
                       int threads);

// One SVI step: replace z_i by the full softmax update and fold the
// deltas into the globals.
void svi_step(GlobalMixtureState& state, const ModelFamily& family,
              const Corpus& corpus, int i, LocalAssignment& z_i);

// One ESVI step: redistribute the mass currently on `subset` by the
// closed-form restricted update, then apply the per-component deltas.
// A subset holding zero mass is a no-op.
void esvi_step(GlobalMixtureState& state, const ModelFamily& family,
               const Corpus& corpus, int i, LocalAssignment& z_i,
               std::span<const int> subset);

// ESVI step on a truncated assignment: identical redistribution over
// `subset`, then the merged support is truncated back to `cutoff`
// entries. With cutoff = K this reproduces esvi_step exactly.
void esvi_topk_step(GlobalMixtureState& state, const ModelFamily& family,
                    const Corpus& corpus, int i, LocalAssignment& z_i,
                    std::span<const int> subset, int cutoff);

// Distinct component indices, sorted ascending.
void sample_subset(std::mt19937_64& rng, int num_components, int subset_size,
                   std::vector<int>& out);

}  // namespace esvi
