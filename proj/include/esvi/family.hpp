#pragma once

#include <span>
#include <vector>

namespace esvi {

// View of one observation. Mixture-of-multinomials data arrive as
// bag-of-words rows, GMM data as dense rows; a family reads the part it
// understands.
struct Datum {
  std::span<const int> words;
  std::span<const double> counts;
  std::span<const double> values;
  double token_total = 0.0;  // sum of counts, multinomial only
};

// Mixture of exponential families. A family supplies the sufficient
// statistic phi(x, k), the variational expectations E_q[theta_k] and
// E_q[g(theta_k)], and the per-component KL against its conjugate prior.
// The conjugate-prior normalizer h(n_k, nu_k) never needs to be
// evaluated on its own; it only ever appears inside prior_kl, where the
// closed form absorbs it.
class ModelFamily {
 public:
  virtual ~ModelFamily() = default;

  // dimension of phi(x, k) and nu_tilde_k
  virtual int stat_dim() const = 0;

  // symmetric Dirichlet prior over the mixture weights
  virtual double dirichlet_prior() const = 0;

  // prior strength n_k (shared across components) and prior mean nu_k,
  // so that the data-free posterior is (n_k, n_k * nu_k)
  virtual double prior_strength() const = 0;
  virtual void prior_mean(std::span<double> out) const = 0;

  // nu_out += scale * phi(x, k)
  virtual void add_scaled_stat(const Datum& x, int k, double scale,
                               std::span<double> nu_out) const = 0;

  // <phi(x, k), E_q[theta_k]> - E_q[g(theta_k)] evaluated sparsely
  virtual double score_datum(const Datum& x, int k, double n_tilde,
                             std::span<const double> nu_tilde) const = 0;

  // E_q[theta_k] and E_q[g(theta_k)] for the posterior (n_tilde, nu_tilde)
  virtual void expectations(double n_tilde, std::span<const double> nu_tilde,
                            std::span<double> expected_theta,
                            double& expected_log_partition) const = 0;

  // KL( q(theta_k | n_tilde, nu_tilde) || p(theta_k | n_k, nu_k) )
  virtual double prior_kl(double n_tilde,
                          std::span<const double> nu_tilde) const = 0;
};

// Variational global parameters: pi_tilde (Dirichlet over components),
// and per component the conjugate pair (n_tilde_k, nu_tilde_k).
struct GlobalMixtureState {
  int num_components = 0;
  int stat_dim = 0;
  std::vector<double> pi_tilde;  // K
  std::vector<double> n_tilde;   // K
  std::vector<double> nu_tilde;  // K x stat_dim, row-major

  GlobalMixtureState() = default;
  GlobalMixtureState(int k, int dim)
      : num_components(k),
        stat_dim(dim),
        pi_tilde(k, 0.0),
        n_tilde(k, 0.0),
        nu_tilde(static_cast<std::size_t>(k) * dim, 0.0) {}

  std::span<double> nu(int k) {
    return {nu_tilde.data() + static_cast<std::size_t>(k) * stat_dim,
            static_cast<std::size_t>(stat_dim)};
  }
  std::span<const double> nu(int k) const {
    return {nu_tilde.data() + static_cast<std::size_t>(k) * stat_dim,
            static_cast<std::size_t>(stat_dim)};
  }
};

// Per-datum variational assignment on the K-simplex. Dense runs keep the
// full vector; top-k runs keep at most `C_cutoff` (topic, weight) pairs.
// stored_mass is the total mass the entries carry (1.0 everywhere in this
// codebase; kept explicit because subset updates redistribute exactly
// this quantity).
struct LocalAssignment {
  bool is_dense = true;
  double stored_mass = 1.0;
  std::vector<double> dense;                      // K when dense
  std::vector<std::pair<int, double>> sparse;     // sorted by topic when sparse

  double weight(int k) const {
    if (is_dense) return dense[k];
    for (const auto& [topic, w] : sparse) {
      if (topic == k) return w;
    }
    return 0.0;
  }
};

// Restricted z-update problem: redistribute mass C over the coordinate
// subset with scores u.
struct RestrictedProblem {
  std::vector<int> subset;
  std::vector<double> scores;
  double mass = 0.0;
};

}  // namespace esvi
