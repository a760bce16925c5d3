#pragma once

#include <cstdint>
#include <istream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace esvi {

// Bag-of-words corpus in CSR layout, plus an optional dense real matrix
// for GMM datasets. Word indices are 0-based internally; the UCI
// docword format on disk is 1-based.
struct Corpus {
  int num_docs = 0;
  int vocab_size = 0;
  std::vector<std::int64_t> doc_offsets;  // num_docs + 1
  std::vector<int> words;                 // nnz entries
  std::vector<double> counts;             // nnz entries, each >= 1
  std::vector<std::string> vocabulary;    // optional, size vocab_size

  // dense rows (num_points x dim, row-major); empty unless a GMM dataset
  std::vector<double> dense;
  int dense_dim = 0;

  // planted component labels from the synthetic generators, for tests
  std::vector<int> labels;

  int num_data() const {
    return dense.empty() ? num_docs
                         : static_cast<int>(dense.size()) / dense_dim;
  }
  int doc_nnz(int d) const {
    return static_cast<int>(doc_offsets[d + 1] - doc_offsets[d]);
  }
  std::span<const int> doc_words(int d) const {
    return {words.data() + doc_offsets[d], static_cast<std::size_t>(doc_nnz(d))};
  }
  std::span<const double> doc_counts(int d) const {
    return {counts.data() + doc_offsets[d],
            static_cast<std::size_t>(doc_nnz(d))};
  }
  double doc_tokens(int d) const;   // sum of counts in document d
  double total_tokens() const;      // sum over all documents
  std::span<const double> dense_row(int i) const {
    return {dense.data() + static_cast<std::size_t>(i) * dense_dim,
            static_cast<std::size_t>(dense_dim)};
  }
};

// UCI bag-of-words reader. `docword` carries three header lines (D, V,
// NNZ) followed by NNZ lines "docID wordID count" with 1-based ids.
// `vocab` (optional) carries one word per line. Malformed input throws
// std::runtime_error naming the offending line.
Corpus load_uci_corpus(std::istream& docword, std::istream* vocab = nullptr);
Corpus load_uci_corpus_file(const std::string& docword_path,
                            const std::string& vocab_path = "");

// Document-level split; `test_fraction` of documents (at least one, and
// leaving at least one for training) become the test side. Deterministic
// under `seed`. Throws std::invalid_argument when a side would be empty.
std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus,
                                           double test_fraction,
                                           std::uint64_t seed);

// Synthetic corpora -------------------------------------------------------

struct SyntheticLdaConfig {
  int num_docs = 50;
  int vocab_size = 200;
  int num_topics = 8;
  int doc_length = 60;
  double topic_concentration = 0.05;  // Dirichlet for planted topics
  double block_weight = 0.8;          // mass pinned on the topic's own block
  double doc_concentration = 0.3;     // Dirichlet for per-doc topic weights
  std::uint64_t seed = 1;
};

// Draws planted topics and documents from the LDA generative process.
// labels[d] holds the dominant planted topic of document d.
Corpus make_synthetic_lda_corpus(const SyntheticLdaConfig& cfg);

// Hard-partition mixture of multinomials: each document draws all tokens
// from a single planted topic with (near-)disjoint vocabulary blocks.
Corpus make_planted_partition_corpus(int num_docs, int vocab_size,
                                     int num_components, int doc_length,
                                     std::uint64_t seed);

// Dense Gaussian blobs: `num_points` rows in `dim` dimensions, cluster
// centers `separation` standard deviations apart.
Corpus make_gaussian_blobs(int num_points, int dim, int num_clusters,
                           double separation, std::uint64_t seed);

}  // namespace esvi
