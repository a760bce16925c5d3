#include "esvi/expfam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "esvi/math.hpp"
#include "esvi/topk.hpp"

namespace esvi {

Datum make_datum(const Corpus& corpus, int i) {
  Datum x;
  if (!corpus.dense.empty()) {
    x.values = corpus.dense_row(i);
  } else {
    x.words = corpus.doc_words(i);
    x.counts = corpus.doc_counts(i);
    x.token_total = corpus.doc_tokens(i);
  }
  return x;
}

void compute_u(const GlobalMixtureState& state, const ModelFamily& family,
               const Datum& x, std::span<const int> subset,
               std::span<double> out) {
  for (std::size_t j = 0; j < subset.size(); ++j) {
    const int k = subset[j];
    const double pi_term = digamma(state.pi_tilde[k]);
    const double data_term =
        family.score_datum(x, k, state.n_tilde[k], state.nu(k));
    if (!std::isfinite(pi_term)) {
      throw std::runtime_error("compute_u: psi(pi_tilde) overflow at component " +
                               std::to_string(k));
    }
    if (!std::isfinite(data_term)) {
      throw std::runtime_error(
          "compute_u: expectation term overflow at component " +
          std::to_string(k));
    }
    out[j] = pi_term + data_term;
  }
}

void update_z_full(std::span<const double> u, LocalAssignment& out) {
  out.is_dense = true;
  out.stored_mass = 1.0;
  out.sparse.clear();
  out.dense.assign(u.begin(), u.end());
  softmax_inplace(out.dense);
}

std::vector<double> update_z_subset(const RestrictedProblem& problem) {
  const std::size_t n = problem.subset.size();
  if (n < 2) throw std::invalid_argument("restricted problem needs |subset| >= 2");
  if (!(problem.mass > 0.0)) {
    throw std::invalid_argument("restricted problem needs C > 0");
  }
  std::vector<double> z(problem.scores.begin(), problem.scores.end());
  softmax_inplace(z);
  for (double& w : z) w *= problem.mass;
  return z;
}

double restricted_elbo(const RestrictedProblem& problem,
                       std::span<const double> weights) {
  if (weights.size() != problem.subset.size()) {
    throw std::invalid_argument("restricted_elbo: size mismatch");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("restricted_elbo: negative weight");
    sum += w;
  }
  if (std::abs(sum - problem.mass) > 1e-8 * (1.0 + std::abs(problem.mass))) {
    throw std::invalid_argument("restricted_elbo: weights do not sum to C");
  }
  double value = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] > 0.0) {
      value += weights[j] * (problem.scores[j] - std::log(weights[j]));
    }
  }
  return value;
}

void update_pi(GlobalMixtureState& state, const ModelFamily& family, int k,
               double delta) {
  state.pi_tilde[k] += delta;
  if (state.pi_tilde[k] < family.dirichlet_prior() - 1e-9) {
    throw std::runtime_error(
        "update_pi: pi_tilde fell below alpha; assignment bookkeeping corrupt");
  }
}

void update_theta(GlobalMixtureState& state, const ModelFamily& family,
                  const Datum& x, int k, double delta) {
  state.n_tilde[k] += delta;
  if (state.n_tilde[k] < family.prior_strength() - 1e-9) {
    throw std::runtime_error(
        "update_theta: n_tilde fell below prior strength; bookkeeping corrupt");
  }
  family.add_scaled_stat(x, k, delta, state.nu(k));
}

void batch_refresh_globals(GlobalMixtureState& state,
                           const ModelFamily& family, const Corpus& corpus,
                           std::span<const LocalAssignment> z) {
  const int k = state.num_components;
  const double alpha = family.dirichlet_prior();
  const double n0 = family.prior_strength();

  std::vector<double> prior_nu(state.stat_dim);
  family.prior_mean(prior_nu);

  std::fill(state.pi_tilde.begin(), state.pi_tilde.end(), alpha);
  std::fill(state.n_tilde.begin(), state.n_tilde.end(), n0);
  for (int c = 0; c < k; ++c) {
    auto nu = state.nu(c);
    for (int j = 0; j < state.stat_dim; ++j) nu[j] = n0 * prior_nu[j];
  }

  const int n = corpus.num_data();
  for (int i = 0; i < n; ++i) {
    const Datum x = make_datum(corpus, i);
    const LocalAssignment& zi = z[i];
    if (zi.is_dense) {
      for (int c = 0; c < k; ++c) {
        const double w = zi.dense[c];
        if (w == 0.0) continue;
        state.pi_tilde[c] += w;
        state.n_tilde[c] += w;
        family.add_scaled_stat(x, c, w, state.nu(c));
      }
    } else {
      for (const auto& [c, w] : zi.sparse) {
        state.pi_tilde[c] += w;
        state.n_tilde[c] += w;
        family.add_scaled_stat(x, c, w, state.nu(c));
      }
    }
  }
}

std::vector<LocalAssignment> init_assignments(const Corpus& corpus, int k,
                                              int cutoff, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = corpus.num_data();
  std::vector<LocalAssignment> z(n);
  std::vector<double> draw(k);
  for (int i = 0; i < n; ++i) {
    draw_uniform_simplex(rng, draw);
    if (cutoff <= 0) {
      z[i].is_dense = true;
      z[i].dense = draw;
      z[i].stored_mass = 1.0;
    } else {
      const TopKAssignment trunc = topk_truncate(draw, cutoff);
      z[i].is_dense = false;
      z[i].stored_mass = 1.0;
      for (const auto& e : trunc.sorted_by_topic()) {
        z[i].sparse.emplace_back(e.topic, e.weight);
      }
    }
  }
  return z;
}

namespace {

// Per-datum ELBO terms: sum_k z_k (u_k - log z_k) minus the shared
// psi(sum pi_tilde) carried by stored_mass.
double datum_elbo(const GlobalMixtureState& state, const ModelFamily& family,
                  const Datum& x, const LocalAssignment& zi,
                  std::span<const int> all, std::vector<double>& u_buf,
                  double psi_pi_sum) {
  compute_u(state, family, x, all, u_buf);
  double acc = -zi.stored_mass * psi_pi_sum;
  if (zi.is_dense) {
    for (int c = 0; c < state.num_components; ++c) {
      const double w = zi.dense[c];
      if (w > 0.0) acc += w * (u_buf[c] - std::log(w));
    }
  } else {
    for (const auto& [c, w] : zi.sparse) {
      if (w > 0.0) acc += w * (u_buf[c] - std::log(w));
    }
  }
  return acc;
}

double elbo_global_terms(const GlobalMixtureState& state,
                         const ModelFamily& family) {
  double value = -dirichlet_kl_symmetric(state.pi_tilde,
                                         family.dirichlet_prior());
  for (int c = 0; c < state.num_components; ++c) {
    value -= family.prior_kl(state.n_tilde[c], state.nu(c));
  }
  return value;
}

std::vector<int> all_components(int k) {
  std::vector<int> all(k);
  for (int c = 0; c < k; ++c) all[c] = c;
  return all;
}

}  // namespace

double mixture_elbo_serial(const GlobalMixtureState& state,
                           const ModelFamily& family, const Corpus& corpus,
                           std::span<const LocalAssignment> z) {
  const std::vector<int> all = all_components(state.num_components);
  double pi_sum = 0.0;
  for (double p : state.pi_tilde) pi_sum += p;
  const double psi_pi_sum = digamma(pi_sum);

  std::vector<double> u_buf(state.num_components);
  double data_part = 0.0;
  const int n = corpus.num_data();
  for (int i = 0; i < n; ++i) {
    data_part += datum_elbo(state, family, make_datum(corpus, i), z[i], all,
                            u_buf, psi_pi_sum);
  }
  return data_part + elbo_global_terms(state, family);
}

double mixture_elbo_parallel(const GlobalMixtureState& state,
                             const ModelFamily& family, const Corpus& corpus,
                             std::span<const LocalAssignment> z, int threads) {
  const std::vector<int> all = all_components(state.num_components);
  double pi_sum = 0.0;
  for (double p : state.pi_tilde) pi_sum += p;
  const double psi_pi_sum = digamma(pi_sum);

  const int n = corpus.num_data();
  double data_part = 0.0;
#pragma omp parallel num_threads(threads) reduction(+ : data_part)
  {
    std::vector<double> u_buf(state.num_components);
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      data_part += datum_elbo(state, family, make_datum(corpus, i), z[i], all,
                              u_buf, psi_pi_sum);
    }
  }
  return data_part + elbo_global_terms(state, family);
}

void vi_epoch_serial(GlobalMixtureState& state, const ModelFamily& family,
                     const Corpus& corpus, std::span<LocalAssignment> z) {
  const std::vector<int> all = all_components(state.num_components);
  std::vector<double> u_buf(state.num_components);
  const int n = corpus.num_data();
  for (int i = 0; i < n; ++i) {
    compute_u(state, family, make_datum(corpus, i), all, u_buf);
    update_z_full(u_buf, z[i]);
  }
  batch_refresh_globals(state, family, corpus, z);
}

void vi_epoch_parallel(GlobalMixtureState& state, const ModelFamily& family,
                       const Corpus& corpus, std::span<LocalAssignment> z,
                       int threads) {
  const std::vector<int> all = all_components(state.num_components);
  const int n = corpus.num_data();
#pragma omp parallel num_threads(threads)
  {
    std::vector<double> u_buf(state.num_components);
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      compute_u(state, family, make_datum(corpus, i), all, u_buf);
      update_z_full(u_buf, z[i]);
    }
  }

  // global pass with per-thread accumulators, merged in thread order
  const int k = state.num_components;
  const int dim = state.stat_dim;
  const double alpha = family.dirichlet_prior();
  const double n0 = family.prior_strength();
  std::vector<double> prior_nu(dim);
  family.prior_mean(prior_nu);

  const int t = std::max(1, threads);
  std::vector<std::vector<double>> pi_acc(t, std::vector<double>(k, 0.0));
  std::vector<std::vector<double>> nu_acc(
      t, std::vector<double>(static_cast<std::size_t>(k) * dim, 0.0));

#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      const Datum x = make_datum(corpus, i);
      for (int c = 0; c < k; ++c) {
        const double w = z[i].dense[c];
        if (w == 0.0) continue;
        pi_acc[tid][c] += w;
        family.add_scaled_stat(
            x, c, w,
            std::span<double>(nu_acc[tid].data() + static_cast<std::size_t>(c) * dim,
                              dim));
      }
    }
  }

  std::fill(state.pi_tilde.begin(), state.pi_tilde.end(), alpha);
  std::fill(state.n_tilde.begin(), state.n_tilde.end(), n0);
  for (int c = 0; c < k; ++c) {
    auto nu = state.nu(c);
    for (int j = 0; j < dim; ++j) nu[j] = n0 * prior_nu[j];
  }
  for (int tid = 0; tid < t; ++tid) {
    for (int c = 0; c < k; ++c) {
      state.pi_tilde[c] += pi_acc[tid][c];
      state.n_tilde[c] += pi_acc[tid][c];
      auto nu = state.nu(c);
      for (int j = 0; j < dim; ++j) {
        nu[j] += nu_acc[tid][static_cast<std::size_t>(c) * dim + j];
      }
    }
  }
}

void svi_step(GlobalMixtureState& state, const ModelFamily& family,
              const Corpus& corpus, int i, LocalAssignment& z_i) {
  const std::vector<int> all = all_components(state.num_components);
  std::vector<double> u_buf(state.num_components);
  const Datum x = make_datum(corpus, i);
  compute_u(state, family, x, all, u_buf);

  LocalAssignment fresh;
  update_z_full(u_buf, fresh);
  for (int c = 0; c < state.num_components; ++c) {
    const double delta = fresh.dense[c] - z_i.dense[c];
    update_pi(state, family, c, delta);
    update_theta(state, family, x, c, delta);
  }
  z_i = std::move(fresh);
}

void esvi_step(GlobalMixtureState& state, const ModelFamily& family,
               const Corpus& corpus, int i, LocalAssignment& z_i,
               std::span<const int> subset) {
  const Datum x = make_datum(corpus, i);
  const bool full = static_cast<int>(subset.size()) == state.num_components;
  double mass = 0.0;
  if (full) {
    mass = z_i.stored_mass;
  } else {
    for (int k : subset) mass += z_i.dense[k];
  }
  if (mass <= 0.0) return;  // redistributing zero mass is vacuous

  RestrictedProblem problem;
  problem.subset.assign(subset.begin(), subset.end());
  problem.scores.resize(subset.size());
  problem.mass = mass;
  compute_u(state, family, x, subset, problem.scores);

  const std::vector<double> fresh = update_z_subset(problem);
  for (std::size_t j = 0; j < subset.size(); ++j) {
    const int k = subset[j];
    const double delta = fresh[j] - z_i.dense[k];
    update_pi(state, family, k, delta);
    update_theta(state, family, x, k, delta);
    z_i.dense[k] = fresh[j];
  }
}

void esvi_topk_step(GlobalMixtureState& state, const ModelFamily& family,
                    const Corpus& corpus, int i, LocalAssignment& z_i,
                    std::span<const int> subset, int cutoff) {
  const Datum x = make_datum(corpus, i);
  double mass = 0.0;
  for (int k : subset) mass += z_i.weight(k);
  if (mass <= 0.0) return;

  RestrictedProblem problem;
  problem.subset.assign(subset.begin(), subset.end());
  problem.scores.resize(subset.size());
  problem.mass = mass;
  compute_u(state, family, x, subset, problem.scores);
  const std::vector<double> fresh = update_z_subset(problem);

  // merge redistributed weights into the stored support
  std::vector<std::pair<int, double>> merged = z_i.sparse;
  for (std::size_t j = 0; j < subset.size(); ++j) {
    const int k = subset[j];
    auto it = std::lower_bound(
        merged.begin(), merged.end(), k,
        [](const auto& e, int key) { return e.first < key; });
    if (it != merged.end() && it->first == k) {
      it->second = fresh[j];
    } else {
      merged.insert(it, {k, fresh[j]});
    }
  }

  std::vector<std::pair<int, double>> kept;
  if (static_cast<int>(merged.size()) > cutoff) {
    const TopKAssignment trunc =
        topk_truncate(std::span<const std::pair<int, double>>(merged), cutoff,
                      z_i.stored_mass);
    for (const auto& e : trunc.sorted_by_topic()) {
      kept.emplace_back(e.topic, e.weight);
    }
  } else {
    kept = std::move(merged);
  }

  // deltas over the union of old and new supports (both sorted by topic)
  std::size_t a = 0, b = 0;
  while (a < z_i.sparse.size() || b < kept.size()) {
    int k;
    double old_w = 0.0, new_w = 0.0;
    if (b >= kept.size() ||
        (a < z_i.sparse.size() && z_i.sparse[a].first < kept[b].first)) {
      k = z_i.sparse[a].first;
      old_w = z_i.sparse[a].second;
      ++a;
    } else if (a >= z_i.sparse.size() || kept[b].first < z_i.sparse[a].first) {
      k = kept[b].first;
      new_w = kept[b].second;
      ++b;
    } else {
      k = kept[b].first;
      old_w = z_i.sparse[a].second;
      new_w = kept[b].second;
      ++a;
      ++b;
    }
    const double delta = new_w - old_w;
    if (delta != 0.0) {
      update_pi(state, family, k, delta);
      update_theta(state, family, x, k, delta);
    }
  }
  z_i.sparse = std::move(kept);
}

void sample_subset(std::mt19937_64& rng, int num_components, int subset_size,
                   std::vector<int>& out) {
  sample_without_replacement(rng, num_components, subset_size, out);
  std::sort(out.begin(), out.end());
}

}  // namespace esvi
