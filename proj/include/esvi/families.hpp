#pragma once

#include "esvi/family.hpp"

namespace esvi {

// Mixture of multinomials. phi(x, k) is the word-count vector of x
// (independent of k); the conjugate prior is a symmetric Dirichlet(eta)
// per component, so nu_tilde_k acts as a vector of Dirichlet counts.
// E_q[log theta_v] = psi(nu_v) - psi(sum_v nu_v); the log-partition
// expectation is absorbed into that psi(sum) term.
class MultinomialFamily final : public ModelFamily {
 public:
  MultinomialFamily(int vocab_size, double eta, double alpha);

  int vocab_size() const { return vocab_size_; }
  double eta() const { return eta_; }

  int stat_dim() const override { return vocab_size_; }
  double dirichlet_prior() const override { return alpha_; }
  double prior_strength() const override;
  void prior_mean(std::span<double> out) const override;
  void add_scaled_stat(const Datum& x, int k, double scale,
                       std::span<double> nu_out) const override;
  double score_datum(const Datum& x, int k, double n_tilde,
                     std::span<const double> nu_tilde) const override;
  void expectations(double n_tilde, std::span<const double> nu_tilde,
                    std::span<double> expected_theta,
                    double& expected_log_partition) const override;
  double prior_kl(double n_tilde,
                  std::span<const double> nu_tilde) const override;

  // g(theta) = 0 in the absorbed parameterization; kept for the
  // consistency checks in the tests
  double log_partition(std::span<const double>) const { return 0.0; }

 private:
  int vocab_size_;
  double eta_;
  double alpha_;
};

// Diagonal-covariance Gaussian mixture with a per-dimension Normal-Gamma
// conjugate prior (mean m0, scale kappa0, shape a0, rate b0). The
// sufficient statistic interleaves (x_d, x_d^2), so stat_dim = 2 * dim.
class DiagonalGaussianFamily final : public ModelFamily {
 public:
  DiagonalGaussianFamily(int dim, double m0, double kappa0, double a0,
                         double b0, double alpha);

  int dim() const { return dim_; }

  // Posterior Normal-Gamma parameters for one dimension, recovered from
  // the accumulated statistics s1 = sum z x, s2 = sum z x^2 inside
  // nu_tilde.
  struct NormalGamma {
    double mean, scale, shape, rate;
  };
  NormalGamma posterior(double n_tilde, std::span<const double> nu_tilde,
                        int dimension) const;

  int stat_dim() const override { return 2 * dim_; }
  double dirichlet_prior() const override { return alpha_; }
  double prior_strength() const override { return kappa0_; }
  void prior_mean(std::span<double> out) const override;
  void add_scaled_stat(const Datum& x, int k, double scale,
                       std::span<double> nu_out) const override;
  double score_datum(const Datum& x, int k, double n_tilde,
                     std::span<const double> nu_tilde) const override;
  void expectations(double n_tilde, std::span<const double> nu_tilde,
                    std::span<double> expected_theta,
                    double& expected_log_partition) const override;
  double prior_kl(double n_tilde,
                  std::span<const double> nu_tilde) const override;

  // g(theta) for theta = (tau*mu, -tau/2) in one dimension
  static double log_partition(double mu, double tau);

 private:
  int dim_;
  double m0_, kappa0_, a0_, b0_;
  double alpha_;
};

}  // namespace esvi
