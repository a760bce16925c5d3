// Times the serial reference kernels against their OpenMP variants on a
// generated corpus and prints a small speedup table.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "esvi/corpus.hpp"
#include "esvi/expfam.hpp"
#include "esvi/families.hpp"
#include "esvi/lda.hpp"

namespace {

using Clock = std::chrono::steady_clock;

template <typename Fn>
double time_of(Fn&& fn) {
  const auto t0 = Clock::now();
  fn();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 4;
  if (argc > 1) threads = std::atoi(argv[1]);
#ifdef _OPENMP
  std::printf("openmp enabled, comparing 1 vs %d threads\n", threads);
#else
  std::printf("built without openmp; parallel variants run serially\n");
#endif

  esvi::SyntheticLdaConfig cfg;
  cfg.num_docs = 1200;
  cfg.vocab_size = 1500;
  cfg.num_topics = 16;
  cfg.doc_length = 120;
  cfg.seed = 7;
  const esvi::Corpus corpus = esvi::make_synthetic_lda_corpus(cfg);
  const int k = 32;

  std::printf("corpus: %d docs, %d words, %.0f tokens\n", corpus.num_docs,
              corpus.vocab_size, corpus.total_tokens());

  {
    esvi::MultinomialFamily family(corpus.vocab_size, 0.01, 0.1);
    esvi::GlobalMixtureState s1(k, family.stat_dim());
    esvi::GlobalMixtureState s2(k, family.stat_dim());
    auto z1 = esvi::init_assignments(corpus, k, 0, 3);
    auto z2 = z1;
    esvi::batch_refresh_globals(s1, family, corpus, z1);
    esvi::batch_refresh_globals(s2, family, corpus, z2);

    const double t_serial =
        time_of([&] { esvi::vi_epoch_serial(s1, family, corpus, z1); });
    const double t_parallel = time_of(
        [&] { esvi::vi_epoch_parallel(s2, family, corpus, z2, threads); });
    std::printf("mixture vi epoch   serial %.3fs  parallel %.3fs  speedup %.2fx\n",
                t_serial, t_parallel, t_serial / t_parallel);

    const double e_serial = time_of([&] {
      volatile double e = esvi::mixture_elbo_serial(s1, family, corpus, z1);
      (void)e;
    });
    const double e_parallel = time_of([&] {
      volatile double e =
          esvi::mixture_elbo_parallel(s2, family, corpus, z2, threads);
      (void)e;
    });
    std::printf("mixture elbo       serial %.3fs  parallel %.3fs  speedup %.2fx\n",
                e_serial, e_parallel, e_serial / e_parallel);
  }

  {
    esvi::LdaState s1 = esvi::init_lda_state(corpus, k, 0.1, 0.01, 0, 3);
    esvi::LdaState s2 = esvi::init_lda_state(corpus, k, 0.1, 0.01, 0, 3);

    const double t_serial =
        time_of([&] { esvi::lda_vi_epoch_serial(s1, corpus); });
    const double t_parallel =
        time_of([&] { esvi::lda_vi_epoch_parallel(s2, corpus, threads); });
    std::printf("lda vi epoch       serial %.3fs  parallel %.3fs  speedup %.2fx\n",
                t_serial, t_parallel, t_serial / t_parallel);

    const double e_serial = time_of([&] {
      volatile double e = esvi::lda_elbo_serial(s1, corpus);
      (void)e;
    });
    const double e_parallel = time_of([&] {
      volatile double e = esvi::lda_elbo_parallel(s2, corpus, threads);
      (void)e;
    });
    std::printf("lda elbo           serial %.3fs  parallel %.3fs  speedup %.2fx\n",
                e_serial, e_parallel, e_serial / e_parallel);
  }
  return 0;
}
