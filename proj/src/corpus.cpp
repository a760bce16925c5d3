#include "esvi/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "esvi/math.hpp"

namespace esvi {

double Corpus::doc_tokens(int d) const {
  double n = 0.0;
  for (double c : doc_counts(d)) n += c;
  return n;
}

double Corpus::total_tokens() const {
  double n = 0.0;
  for (double c : counts) n += c;
  return n;
}

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("docword parse error at line " +
                           std::to_string(line_no) + ": " + what);
}

long long read_header_line(std::istream& in, std::size_t& line_no,
                           const char* name) {
  std::string line;
  if (!std::getline(in, line)) parse_fail(line_no, std::string("missing ") + name);
  ++line_no;
  long long value = 0;
  std::istringstream ss(line);
  if (!(ss >> value) || value < 0) parse_fail(line_no, std::string("bad ") + name);
  return value;
}

}  // namespace

Corpus load_uci_corpus(std::istream& docword, std::istream* vocab) {
  std::size_t line_no = 0;
  const long long num_docs = read_header_line(docword, line_no, "document count");
  const long long vocab_size = read_header_line(docword, line_no, "vocabulary size");
  const long long nnz = read_header_line(docword, line_no, "nonzero count");

  struct Triple {
    int doc, word;
    double count;
  };
  std::vector<Triple> triples;
  triples.reserve(static_cast<std::size_t>(nnz));

  std::string line;
  while (std::getline(docword, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long d = 0, w = 0;
    double c = 0.0;
    if (!(ss >> d >> w >> c)) parse_fail(line_no, "expected 'docID wordID count'");
    if (d < 1 || d > num_docs) parse_fail(line_no, "docID out of range");
    if (w < 1 || w > vocab_size) parse_fail(line_no, "wordID out of range");
    if (!(c >= 1.0)) parse_fail(line_no, "count must be >= 1");
    triples.push_back({static_cast<int>(d - 1), static_cast<int>(w - 1), c});
  }
  if (static_cast<long long>(triples.size()) != nnz) {
    throw std::runtime_error(
        "docword entry count mismatch: header says " + std::to_string(nnz) +
        ", file has " + std::to_string(triples.size()));
  }

  std::stable_sort(triples.begin(), triples.end(),
                   [](const Triple& a, const Triple& b) {
                     return a.doc != b.doc ? a.doc < b.doc : a.word < b.word;
                   });

  Corpus corpus;
  corpus.num_docs = static_cast<int>(num_docs);
  corpus.vocab_size = static_cast<int>(vocab_size);
  corpus.doc_offsets.assign(num_docs + 1, 0);
  corpus.words.reserve(triples.size());
  corpus.counts.reserve(triples.size());
  for (const Triple& t : triples) {
    corpus.doc_offsets[t.doc + 1]++;
    corpus.words.push_back(t.word);
    corpus.counts.push_back(t.count);
  }
  for (long long d = 0; d < num_docs; ++d) {
    corpus.doc_offsets[d + 1] += corpus.doc_offsets[d];
  }

  if (vocab != nullptr) {
    std::string word;
    while (std::getline(*vocab, word)) {
      if (!word.empty() && word.back() == '\r') word.pop_back();
      corpus.vocabulary.push_back(word);
    }
    if (static_cast<long long>(corpus.vocabulary.size()) < vocab_size) {
      throw std::runtime_error("vocab file has fewer entries than header V");
    }
    corpus.vocabulary.resize(vocab_size);
  }
  return corpus;
}

Corpus load_uci_corpus_file(const std::string& docword_path,
                            const std::string& vocab_path) {
  std::ifstream dw(docword_path);
  if (!dw) throw std::runtime_error("cannot open " + docword_path);
  if (vocab_path.empty()) return load_uci_corpus(dw);
  std::ifstream vf(vocab_path);
  if (!vf) throw std::runtime_error("cannot open " + vocab_path);
  return load_uci_corpus(dw, &vf);
}

namespace {

Corpus take_docs(const Corpus& corpus, const std::vector<int>& docs) {
  Corpus out;
  out.num_docs = static_cast<int>(docs.size());
  out.vocab_size = corpus.vocab_size;
  out.vocabulary = corpus.vocabulary;
  out.doc_offsets.assign(out.num_docs + 1, 0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const int d = docs[i];
    out.doc_offsets[i + 1] = out.doc_offsets[i] + corpus.doc_nnz(d);
    auto w = corpus.doc_words(d);
    auto c = corpus.doc_counts(d);
    out.words.insert(out.words.end(), w.begin(), w.end());
    out.counts.insert(out.counts.end(), c.begin(), c.end());
    if (!corpus.labels.empty()) out.labels.push_back(corpus.labels[d]);
  }
  return out;
}

}  // namespace

std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus,
                                           double test_fraction,
                                           std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  }
  const int d = corpus.num_docs;
  int test_count = static_cast<int>(std::floor(test_fraction * d));
  test_count = std::clamp(test_count, 1, d - 1);
  if (d < 2) throw std::invalid_argument("cannot split a corpus with < 2 documents");

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> test_docs(order.begin(), order.begin() + test_count);
  std::vector<int> train_docs(order.begin() + test_count, order.end());
  std::sort(test_docs.begin(), test_docs.end());
  std::sort(train_docs.begin(), train_docs.end());
  return {take_docs(corpus, train_docs), take_docs(corpus, test_docs)};
}

namespace {

void draw_dirichlet(std::mt19937_64& rng, double concentration,
                    std::span<double> out) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  double sum = 0.0;
  for (double& v : out) {
    v = gamma(rng);
    sum += v;
  }
  if (sum <= 0.0) {
    // extremely small concentrations can underflow every draw
    std::uniform_int_distribution<std::size_t> pick(0, out.size() - 1);
    std::fill(out.begin(), out.end(), 0.0);
    out[pick(rng)] = 1.0;
    return;
  }
  for (double& v : out) v /= sum;
}

int draw_categorical(std::mt19937_64& rng, std::span<const double> p) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double r = unit(rng);
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    r -= p[k];
    if (r <= 0.0) return static_cast<int>(k);
  }
  return static_cast<int>(p.size()) - 1;
}

Corpus from_count_matrix(const std::vector<std::vector<double>>& doc_word,
                         int vocab_size) {
  Corpus corpus;
  corpus.num_docs = static_cast<int>(doc_word.size());
  corpus.vocab_size = vocab_size;
  corpus.doc_offsets.assign(corpus.num_docs + 1, 0);
  for (int d = 0; d < corpus.num_docs; ++d) {
    for (int v = 0; v < vocab_size; ++v) {
      if (doc_word[d][v] > 0.0) {
        corpus.words.push_back(v);
        corpus.counts.push_back(doc_word[d][v]);
      }
    }
    corpus.doc_offsets[d + 1] = static_cast<std::int64_t>(corpus.words.size());
  }
  return corpus;
}

}  // namespace

Corpus make_synthetic_lda_corpus(const SyntheticLdaConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const int k = cfg.num_topics;
  const int v = cfg.vocab_size;

  // Planted topics: a sparse Dirichlet draw boosted on a per-topic
  // vocabulary block so topics stay well separated at desk scale.
  std::vector<std::vector<double>> topics(k, std::vector<double>(v));
  const int block = std::max(1, v / k);
  for (int t = 0; t < k; ++t) {
    draw_dirichlet(rng, cfg.topic_concentration, topics[t]);
    double sum = 0.0;
    for (int w = 0; w < v; ++w) {
      const bool in_block = w >= t * block && w < (t + 1) * block;
      topics[t][w] = (1.0 - cfg.block_weight) * topics[t][w] +
                     (in_block ? cfg.block_weight / block : 0.0);
      sum += topics[t][w];
    }
    for (double& x : topics[t]) x /= sum;
  }

  std::vector<std::vector<double>> doc_word(cfg.num_docs,
                                            std::vector<double>(v, 0.0));
  std::vector<int> labels(cfg.num_docs);
  std::vector<double> theta(k);
  for (int d = 0; d < cfg.num_docs; ++d) {
    draw_dirichlet(rng, cfg.doc_concentration, theta);
    labels[d] = static_cast<int>(
        std::max_element(theta.begin(), theta.end()) - theta.begin());
    for (int n = 0; n < cfg.doc_length; ++n) {
      const int z = draw_categorical(rng, theta);
      const int w = draw_categorical(rng, topics[z]);
      doc_word[d][w] += 1.0;
    }
  }
  Corpus corpus = from_count_matrix(doc_word, v);
  corpus.labels = std::move(labels);
  return corpus;
}

Corpus make_planted_partition_corpus(int num_docs, int vocab_size,
                                     int num_components, int doc_length,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int block = vocab_size / num_components;
  std::vector<std::vector<double>> doc_word(num_docs,
                                            std::vector<double>(vocab_size, 0.0));
  std::vector<int> labels(num_docs);
  for (int d = 0; d < num_docs; ++d) {
    const int z = d % num_components;
    labels[d] = z;
    std::uniform_int_distribution<int> in_block(z * block, (z + 1) * block - 1);
    for (int n = 0; n < doc_length; ++n) {
      doc_word[d][in_block(rng)] += 1.0;
    }
  }
  Corpus corpus = from_count_matrix(doc_word, vocab_size);
  corpus.labels = std::move(labels);
  return corpus;
}

Corpus make_gaussian_blobs(int num_points, int dim, int num_clusters,
                           double separation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Corpus corpus;
  corpus.dense_dim = dim;
  corpus.dense.resize(static_cast<std::size_t>(num_points) * dim);
  corpus.labels.resize(num_points);
  for (int i = 0; i < num_points; ++i) {
    const int z = i % num_clusters;
    corpus.labels[i] = z;
    for (int j = 0; j < dim; ++j) {
      // centers spaced `separation` sigmas apart along each axis
      const double center = separation * z;
      corpus.dense[static_cast<std::size_t>(i) * dim + j] = center + unit(rng);
    }
  }
  return corpus;
}

}  // namespace esvi
