// Command-line front end: loads or generates a corpus, runs one of the
// four optimizers, and writes the ELBO/perplexity trace as CSV.

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "esvi/corpus.hpp"
#include "esvi/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"variational inference engine: vi / svi / esvi / esvi-topk"};
  app.set_config("--config", "", "plain key=value config file; flags win");
  app.allow_config_extras(false);

  std::string model_name = "lda";
  std::string algo_name = "vi";
  esvi::ExperimentConfig config;
  long long seed = 42;

  std::string docword_path, vocab_path;
  bool synthetic = false;
  esvi::SyntheticLdaConfig syn;
  long long gen_seed = 1;
  int blobs_points = 400, blobs_dim = 2, blobs_clusters = 2;
  double blobs_separation = 10.0;

  app.add_option("--model", model_name, "lda, gmm or mixmult")
      ->capture_default_str();
  app.add_option("--algo", algo_name, "vi, svi, esvi or esvi-topk")
      ->capture_default_str();
  app.add_option("--topics", config.topics, "number of mixture components K")
      ->capture_default_str();
  app.add_option("--topk", config.topk, "top-k cutoff C (esvi-topk)")
      ->capture_default_str();
  app.add_option("--workers", config.workers, "worker threads P")
      ->capture_default_str();
  app.add_option("--alpha", config.alpha, "document/mixture Dirichlet prior")
      ->capture_default_str();
  app.add_option("--eta", config.eta, "topic/component Dirichlet prior")
      ->capture_default_str();
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--max-epochs", config.max_epochs,
                 "stop after this many full-data passes");
  app.add_option("--max-updates", config.max_updates,
                 "stop after this many coordinate updates (overrides epochs)");
  app.add_option("--eval-every", config.eval_every,
                 "coordinate updates between trace records");
  app.add_option("--test-fraction", config.test_fraction,
                 "held-out document fraction for perplexity (lda)")
      ->capture_default_str();
  app.add_option("--out", config.out_path, "trace CSV output path");

  app.add_option("--subset-size", config.subset_size,
                 "esvi coordinates redistributed per step")
      ->capture_default_str();
  app.add_option("--refresh", config.refresh,
                 "top-k random rescore sample per token")
      ->capture_default_str();
  app.add_option("--sync-every", config.sync_every,
                 "normalizer ring-sync cadence in token holds")
      ->capture_default_str();
  app.add_flag("--deterministic-time", config.deterministic_time,
               "record snapshot indices instead of wallclock seconds");

  app.add_option("--docword", docword_path, "UCI docword file");
  app.add_option("--vocab", vocab_path, "UCI vocab file");
  app.add_flag("--synthetic", synthetic, "generate a synthetic corpus");
  app.add_option("--docs", syn.num_docs, "synthetic: documents")
      ->capture_default_str();
  app.add_option("--vocab-size", syn.vocab_size, "synthetic: vocabulary size")
      ->capture_default_str();
  app.add_option("--doc-length", syn.doc_length, "synthetic: tokens per doc")
      ->capture_default_str();
  app.add_option("--gen-topics", syn.num_topics, "synthetic: planted topics")
      ->capture_default_str();
  app.add_option("--gen-seed", gen_seed, "synthetic: generator seed")
      ->capture_default_str();
  app.add_option("--blobs-points", blobs_points, "gmm synthetic: points")
      ->capture_default_str();
  app.add_option("--blobs-dim", blobs_dim, "gmm synthetic: dimensions")
      ->capture_default_str();
  app.add_option("--blobs-clusters", blobs_clusters, "gmm synthetic: clusters")
      ->capture_default_str();
  app.add_option("--blobs-separation", blobs_separation,
                 "gmm synthetic: cluster separation in sigmas")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    config.model = esvi::parse_model(model_name);
    config.algo = esvi::parse_algo(algo_name);
    config.seed = static_cast<std::uint64_t>(seed);

    esvi::Corpus corpus;
    if (config.model == esvi::Model::gmm) {
      if (!synthetic && docword_path.empty()) {
        synthetic = true;  // gmm has no on-disk format in scope
      }
      corpus = esvi::make_gaussian_blobs(blobs_points, blobs_dim, blobs_clusters,
                                         blobs_separation,
                                         static_cast<std::uint64_t>(gen_seed));
    } else if (synthetic) {
      syn.seed = static_cast<std::uint64_t>(gen_seed);
      corpus = esvi::make_synthetic_lda_corpus(syn);
    } else if (!docword_path.empty()) {
      corpus = esvi::load_uci_corpus_file(docword_path, vocab_path);
    } else {
      std::cerr << "no corpus: pass --docword or --synthetic\n";
      return 1;
    }

    esvi::Corpus train = std::move(corpus);
    esvi::Corpus test;
    const esvi::Corpus* test_ptr = nullptr;
    if (config.test_fraction > 0.0) {
      auto [tr, te] =
          esvi::split_train_test(train, config.test_fraction, config.seed);
      train = std::move(tr);
      test = std::move(te);
      test_ptr = &test;
    }

    const esvi::RunTrace trace = esvi::run_experiment(config, train, test_ptr);
    const esvi::TraceRecord& last = trace.records.back();
    std::cout << "updates=" << last.updates << " elbo=" << last.elbo;
    if (last.perplexity.has_value()) {
      std::cout << " perplexity=" << *last.perplexity;
    }
    std::cout << "\n";
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
