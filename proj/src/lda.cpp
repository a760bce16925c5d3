#include "esvi/lda.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "esvi/math.hpp"

namespace esvi {

LdaState init_lda_state(const Corpus& corpus, int num_topics, double alpha,
                        double eta, int cutoff, std::uint64_t seed) {
  if (num_topics < 1) throw std::invalid_argument("num_topics must be >= 1");
  if (!(alpha > 0.0 && eta > 0.0)) {
    throw std::invalid_argument("alpha and eta must be positive");
  }
  if (cutoff > num_topics) {
    throw std::invalid_argument("topk cutoff cannot exceed num_topics");
  }
  LdaState state;
  state.num_topics = num_topics;
  state.vocab_size = corpus.vocab_size;
  state.num_docs = corpus.num_docs;
  state.alpha = alpha;
  state.eta = eta;
  state.topk_mode = cutoff > 0;
  state.cutoff = state.topk_mode ? cutoff : num_topics;

  const std::size_t nnz = corpus.words.size();
  state.slot_doc.resize(nnz);
  for (int d = 0; d < corpus.num_docs; ++d) {
    for (std::int64_t s = corpus.doc_offsets[d]; s < corpus.doc_offsets[d + 1];
         ++s) {
      state.slot_doc[s] = d;
    }
  }

  state.gamma.assign(static_cast<std::size_t>(corpus.num_docs) * num_topics,
                     alpha);
  state.lambda.assign(static_cast<std::size_t>(corpus.vocab_size) * num_topics,
                      eta);

  std::mt19937_64 rng(seed);
  std::vector<double> draw(num_topics);
  if (state.topk_mode) state.phi_topk.resize(nnz);
  else state.phi_dense.resize(nnz * num_topics);

  for (std::size_t s = 0; s < nnz; ++s) {
    draw_uniform_simplex(rng, draw);
    const int d = state.slot_doc[s];
    const int v = corpus.words[s];
    const double c = corpus.counts[s];
    auto gamma_d = state.gamma_row(d);
    auto lambda_v = state.lambda_col(v);
    if (state.topk_mode) {
      state.phi_topk[s] = topk_truncate(draw, cutoff);
      for (const auto& e : state.phi_topk[s].sorted_by_topic()) {
        gamma_d[e.topic] += c * e.weight;
        lambda_v[e.topic] += c * e.weight;
      }
    } else {
      auto phi = state.phi_row(static_cast<int>(s));
      std::copy(draw.begin(), draw.end(), phi.begin());
      for (int k = 0; k < num_topics; ++k) {
        gamma_d[k] += c * draw[k];
        lambda_v[k] += c * draw[k];
      }
    }
  }

  state.normalizers.assign(num_topics, 0.0);
  for (int v = 0; v < corpus.vocab_size; ++v) {
    auto col = state.lambda_col(v);
    for (int k = 0; k < num_topics; ++k) state.normalizers[k] += col[k];
  }
  return state;
}

void compute_phi_scores(const LdaState& state, int d, int v,
                        std::span<const int> topics,
                        std::span<const double> normalizers,
                        std::span<double> out) {
  auto gamma_d = state.gamma_row(d);
  auto lambda_v = state.lambda_col(v);
  for (std::size_t j = 0; j < topics.size(); ++j) {
    const int k = topics[j];
    if (!(gamma_d[k] > 0.0) || !(lambda_v[k] > 0.0) || !(normalizers[k] > 0.0)) {
      throw std::runtime_error("lda: nonpositive gamma/lambda entry, state corrupt");
    }
    out[j] = digamma(gamma_d[k]) + digamma(lambda_v[k]) - digamma(normalizers[k]);
  }
}

void update_phi_dense(const LdaState& state, int d, int v,
                      std::span<const double> normalizers,
                      std::span<double> out) {
  std::vector<int> all(state.num_topics);
  for (int k = 0; k < state.num_topics; ++k) all[k] = k;
  compute_phi_scores(state, d, v, all, normalizers, out);
  softmax_inplace(out);
}

TopKAssignment update_phi_topk(const LdaState& state, int d, int v,
                               const TopKAssignment& current,
                               std::span<const double> normalizers,
                               int refresh, std::mt19937_64& rng) {
  std::vector<int> active = current.topics_sorted();
  if (static_cast<int>(active.size()) < state.num_topics && refresh > 0) {
    std::vector<int> extra;
    sample_without_replacement(rng, state.num_topics, refresh, extra);
    active.insert(active.end(), extra.begin(), extra.end());
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());
  }

  std::vector<double> scores(active.size());
  compute_phi_scores(state, d, v, active, normalizers, scores);
  softmax_inplace(scores);

  std::vector<std::pair<int, double>> candidates(active.size());
  for (std::size_t j = 0; j < active.size(); ++j) {
    candidates[j] = {active[j], scores[j]};
  }
  return topk_truncate(std::span<const std::pair<int, double>>(candidates),
                       state.cutoff, 1.0);
}

namespace {

void apply_one_delta(LdaState& state, std::span<double> gamma_d,
                     std::span<double> lambda_v, int k, double delta,
                     std::span<double> normalizers,
                     std::span<double> pending) {
  gamma_d[k] += delta;
  lambda_v[k] += delta;
  if (lambda_v[k] < state.eta - 1e-9) {
    throw std::runtime_error("lda: lambda fell below eta, bookkeeping corrupt");
  }
  if (!normalizers.empty()) normalizers[k] += delta;
  if (!pending.empty()) pending[k] += delta;
}

}  // namespace

void apply_phi_delta(LdaState& state, int d, int v, double count,
                     std::span<const double> old_phi,
                     std::span<const double> new_phi,
                     std::span<double> normalizers,
                     std::span<double> pending) {
  auto gamma_d = state.gamma_row(d);
  auto lambda_v = state.lambda_col(v);
  for (int k = 0; k < state.num_topics; ++k) {
    const double delta = count * (new_phi[k] - old_phi[k]);
    if (delta != 0.0) {
      apply_one_delta(state, gamma_d, lambda_v, k, delta, normalizers, pending);
    }
  }
}

void apply_phi_delta_sparse(LdaState& state, int d, int v, double count,
                            const TopKAssignment& old_phi,
                            const TopKAssignment& new_phi,
                            std::span<double> normalizers,
                            std::span<double> pending) {
  auto gamma_d = state.gamma_row(d);
  auto lambda_v = state.lambda_col(v);
  const auto old_entries = old_phi.sorted_by_topic();
  const auto new_entries = new_phi.sorted_by_topic();
  std::size_t a = 0, b = 0;
  while (a < old_entries.size() || b < new_entries.size()) {
    int k;
    double old_w = 0.0, new_w = 0.0;
    if (b >= new_entries.size() ||
        (a < old_entries.size() && old_entries[a].topic < new_entries[b].topic)) {
      k = old_entries[a].topic;
      old_w = old_entries[a].weight;
      ++a;
    } else if (a >= old_entries.size() ||
               new_entries[b].topic < old_entries[a].topic) {
      k = new_entries[b].topic;
      new_w = new_entries[b].weight;
      ++b;
    } else {
      k = new_entries[b].topic;
      old_w = old_entries[a].weight;
      new_w = new_entries[b].weight;
      ++a;
      ++b;
    }
    const double delta = count * (new_w - old_w);
    if (delta != 0.0) {
      apply_one_delta(state, gamma_d, lambda_v, k, delta, normalizers, pending);
    }
  }
}

int lda_update_slot(LdaState& state, const Corpus& corpus, int slot,
                    std::span<const double> normalizer_view,
                    std::span<double> normalizer_sink,
                    std::span<double> pending, int refresh,
                    std::mt19937_64& rng) {
  const int d = state.slot_doc[slot];
  const int v = corpus.words[slot];
  const double c = corpus.counts[slot];
  if (state.topk_mode) {
    TopKAssignment fresh = update_phi_topk(state, d, v, state.phi_topk[slot],
                                           normalizer_view, refresh, rng);
    const int scored = static_cast<int>(
        std::max(fresh.entries.size(), state.phi_topk[slot].entries.size()));
    apply_phi_delta_sparse(state, d, v, c, state.phi_topk[slot], fresh,
                           normalizer_sink, pending);
    state.phi_topk[slot] = std::move(fresh);
    return scored;
  }
  std::vector<double> fresh(state.num_topics);
  update_phi_dense(state, d, v, normalizer_view, fresh);
  apply_phi_delta(state, d, v, c, state.phi_row(slot), fresh, normalizer_sink,
                  pending);
  std::copy(fresh.begin(), fresh.end(), state.phi_row(slot).begin());
  return state.num_topics;
}

namespace {

double lda_doc_elbo(const LdaState& state, const Corpus& corpus, int d,
                    std::span<const double> psi_norm) {
  const int k = state.num_topics;
  auto gamma_d = state.gamma_row(d);
  double gamma_sum = 0.0;
  for (double g : gamma_d) gamma_sum += g;
  const double psi_gamma_sum = digamma(gamma_sum);

  std::vector<double> psi_gamma(k);
  for (int t = 0; t < k; ++t) psi_gamma[t] = digamma(gamma_d[t]);

  double acc = 0.0;
  for (std::int64_t s = corpus.doc_offsets[d]; s < corpus.doc_offsets[d + 1];
       ++s) {
    const int v = corpus.words[s];
    const double c = corpus.counts[s];
    auto lambda_v = state.lambda_col(v);
    if (state.topk_mode) {
      // topic order, so a cutoff-K run sums exactly like the dense path
      for (const auto& e : state.phi_topk[s].sorted_by_topic()) {
        if (e.weight <= 0.0) continue;
        acc += c * e.weight *
               (psi_gamma[e.topic] - psi_gamma_sum + digamma(lambda_v[e.topic]) -
                psi_norm[e.topic] - std::log(e.weight));
      }
    } else {
      auto phi = state.phi_row(static_cast<int>(s));
      for (int t = 0; t < k; ++t) {
        if (phi[t] <= 0.0) continue;
        acc += c * phi[t] *
               (psi_gamma[t] - psi_gamma_sum + digamma(lambda_v[t]) -
                psi_norm[t] - std::log(phi[t]));
      }
    }
  }
  acc -= dirichlet_kl_symmetric(gamma_d, state.alpha);
  return acc;
}

double lda_topic_kl(const LdaState& state) {
  const int k = state.num_topics;
  const int v = state.vocab_size;
  double acc = 0.0;
  std::vector<double> row(v);
  for (int t = 0; t < k; ++t) {
    for (int w = 0; w < v; ++w) {
      row[w] = state.lambda[static_cast<std::size_t>(w) * k + t];
    }
    acc += dirichlet_kl_symmetric(row, state.eta);
  }
  return acc;
}

std::vector<double> exact_normalizers(const LdaState& state) {
  std::vector<double> pi(state.num_topics, 0.0);
  for (int v = 0; v < state.vocab_size; ++v) {
    auto col = state.lambda_col(v);
    for (int k = 0; k < state.num_topics; ++k) pi[k] += col[k];
  }
  return pi;
}

}  // namespace

double lda_elbo_serial(const LdaState& state, const Corpus& corpus) {
  const std::vector<double> pi = exact_normalizers(state);
  std::vector<double> psi_norm(state.num_topics);
  for (int k = 0; k < state.num_topics; ++k) psi_norm[k] = digamma(pi[k]);

  double acc = 0.0;
  for (int d = 0; d < corpus.num_docs; ++d) {
    acc += lda_doc_elbo(state, corpus, d, psi_norm);
  }
  return acc - lda_topic_kl(state);
}

double lda_elbo_parallel(const LdaState& state, const Corpus& corpus,
                         int threads) {
  const std::vector<double> pi = exact_normalizers(state);
  std::vector<double> psi_norm(state.num_topics);
  for (int k = 0; k < state.num_topics; ++k) psi_norm[k] = digamma(pi[k]);

  double acc = 0.0;
#pragma omp parallel for schedule(static) num_threads(threads) reduction(+ : acc)
  for (int d = 0; d < corpus.num_docs; ++d) {
    acc += lda_doc_elbo(state, corpus, d, psi_norm);
  }
  return acc - lda_topic_kl(state);
}

namespace {

void rebuild_lda_globals(LdaState& state, const Corpus& corpus) {
  const int k = state.num_topics;
  std::fill(state.gamma.begin(), state.gamma.end(), state.alpha);
  std::fill(state.lambda.begin(), state.lambda.end(), state.eta);
  for (std::size_t s = 0; s < corpus.words.size(); ++s) {
    const int d = state.slot_doc[s];
    const int v = corpus.words[s];
    const double c = corpus.counts[s];
    auto gamma_d = state.gamma_row(d);
    auto lambda_v = state.lambda_col(v);
    auto phi = state.phi_row(static_cast<int>(s));
    for (int t = 0; t < k; ++t) {
      gamma_d[t] += c * phi[t];
      lambda_v[t] += c * phi[t];
    }
  }
  state.normalizers = exact_normalizers(state);
}

}  // namespace

void lda_vi_epoch_serial(LdaState& state, const Corpus& corpus) {
  if (state.topk_mode) {
    throw std::invalid_argument("batch VI runs on dense assignments only");
  }
  const std::size_t nnz = corpus.words.size();
  std::vector<double> fresh(state.num_topics);
  for (std::size_t s = 0; s < nnz; ++s) {
    // phi rows are not inputs of the scores, so overwrite in place
    update_phi_dense(state, state.slot_doc[s], corpus.words[s],
                     state.normalizers, fresh);
    std::copy(fresh.begin(), fresh.end(),
              state.phi_row(static_cast<int>(s)).begin());
  }
  rebuild_lda_globals(state, corpus);
}

void lda_vi_epoch_parallel(LdaState& state, const Corpus& corpus, int threads) {
  if (state.topk_mode) {
    throw std::invalid_argument("batch VI runs on dense assignments only");
  }
  const long long nnz = static_cast<long long>(corpus.words.size());
#pragma omp parallel num_threads(threads)
  {
    std::vector<double> fresh(state.num_topics);
#pragma omp for schedule(static)
    for (long long s = 0; s < nnz; ++s) {
      update_phi_dense(state, state.slot_doc[s], corpus.words[s],
                       state.normalizers, fresh);
      std::copy(fresh.begin(), fresh.end(),
                state.phi_row(static_cast<int>(s)).begin());
    }
  }
  rebuild_lda_globals(state, corpus);
}

PerplexityResult heldout_perplexity(const LdaState& state, const Corpus& test,
                                    int fold_iterations) {
  const int k = state.num_topics;
  PerplexityResult result;

  const std::vector<double> pi = exact_normalizers(state);
  std::vector<double> psi_norm(k);
  for (int t = 0; t < k; ++t) psi_norm[t] = digamma(pi[t]);

  double log_lik = 0.0;
  double scored_tokens = 0.0;

  std::vector<double> gamma_d(k), phi(k);
  std::vector<int> fold_words, score_words;
  for (int d = 0; d < test.num_docs; ++d) {
    const double n_d = test.doc_tokens(d);
    if (n_d < 2.0) {
      ++result.skipped_docs;
      continue;
    }
    // expand the document and split tokens 50/50, alternating positions
    // so both halves cover the document's vocabulary
    fold_words.clear();
    score_words.clear();
    long long seen = 0;
    auto words = test.doc_words(d);
    auto counts = test.doc_counts(d);
    for (std::size_t j = 0; j < words.size(); ++j) {
      for (long long rep = 0; rep < static_cast<long long>(counts[j]); ++rep) {
        if (seen % 2 == 0) fold_words.push_back(words[j]);
        else score_words.push_back(words[j]);
        ++seen;
      }
    }

    // gamma-only fixed point with lambda frozen
    std::fill(gamma_d.begin(), gamma_d.end(),
              state.alpha + static_cast<double>(fold_words.size()) / k);
    for (int it = 0; it < fold_iterations; ++it) {
      std::vector<double> next(k, state.alpha);
      for (int w : fold_words) {
        auto lambda_v = state.lambda_col(w);
        for (int t = 0; t < k; ++t) {
          phi[t] = digamma(gamma_d[t]) + digamma(lambda_v[t]) - psi_norm[t];
        }
        softmax_inplace(phi);
        for (int t = 0; t < k; ++t) next[t] += phi[t];
      }
      gamma_d = next;
    }

    // posterior-mean predictive probability per held-out token
    double gamma_sum = 0.0;
    for (double g : gamma_d) gamma_sum += g;
    for (int w : score_words) {
      auto lambda_v = state.lambda_col(w);
      double p = 0.0;
      for (int t = 0; t < k; ++t) {
        p += (gamma_d[t] / gamma_sum) * (lambda_v[t] / pi[t]);
      }
      log_lik += std::log(p);
      scored_tokens += 1.0;
    }
  }

  result.perplexity =
      scored_tokens > 0.0 ? std::exp(-log_lik / scored_tokens) : 1.0;
  return result;
}

LdaConservation check_lda_conservation(const LdaState& state,
                                       const Corpus& corpus) {
  LdaConservation out;
  const int k = state.num_topics;
  for (int d = 0; d < corpus.num_docs; ++d) {
    double mass = 0.0;
    for (double g : state.gamma_row(d)) mass += g - state.alpha;
    out.max_gamma_error =
        std::max(out.max_gamma_error, std::abs(mass - corpus.doc_tokens(d)));
  }
  double lambda_mass = 0.0;
  for (double l : state.lambda) lambda_mass += l - state.eta;
  out.lambda_error = std::abs(lambda_mass - corpus.total_tokens());

  const std::vector<double> pi = exact_normalizers(state);
  for (int t = 0; t < k; ++t) {
    out.max_normalizer_error = std::max(
        out.max_normalizer_error, std::abs(pi[t] - state.normalizers[t]));
  }
  return out;
}

std::vector<std::vector<int>> build_word_slots(const Corpus& corpus,
                                               int doc_begin, int doc_end) {
  if (doc_end < 0) doc_end = corpus.num_docs;
  std::vector<std::vector<int>> slots(corpus.vocab_size);
  for (int d = doc_begin; d < doc_end; ++d) {
    for (std::int64_t s = corpus.doc_offsets[d]; s < corpus.doc_offsets[d + 1];
         ++s) {
      slots[corpus.words[s]].push_back(static_cast<int>(s));
    }
  }
  return slots;
}

}  // namespace esvi
