#include "esvi/families.hpp"

#include <cmath>
#include <stdexcept>

#include "esvi/math.hpp"

namespace esvi {

// ---------------------------------------------------------------------------
// MultinomialFamily

MultinomialFamily::MultinomialFamily(int vocab_size, double eta, double alpha)
    : vocab_size_(vocab_size), eta_(eta), alpha_(alpha) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
}

double MultinomialFamily::prior_strength() const {
  return eta_ * static_cast<double>(vocab_size_);
}

void MultinomialFamily::prior_mean(std::span<double> out) const {
  const double v = 1.0 / static_cast<double>(vocab_size_);
  for (double& x : out) x = v;
}

void MultinomialFamily::add_scaled_stat(const Datum& x, int /*k*/, double scale,
                                        std::span<double> nu_out) const {
  for (std::size_t j = 0; j < x.words.size(); ++j) {
    nu_out[x.words[j]] += scale * x.counts[j];
  }
}

double MultinomialFamily::score_datum(const Datum& x, int /*k*/,
                                      double /*n_tilde*/,
                                      std::span<const double> nu_tilde) const {
  double total = 0.0;
  for (double c : nu_tilde) {
    if (!(c > 0.0)) throw std::runtime_error("multinomial: nonpositive count");
    total += c;
  }
  const double psi_total = digamma(total);
  double score = 0.0;
  for (std::size_t j = 0; j < x.words.size(); ++j) {
    score += x.counts[j] * digamma(nu_tilde[x.words[j]]);
  }
  return score - x.token_total * psi_total;
}

void MultinomialFamily::expectations(double /*n_tilde*/,
                                     std::span<const double> nu_tilde,
                                     std::span<double> expected_theta,
                                     double& expected_log_partition) const {
  double total = 0.0;
  for (double c : nu_tilde) {
    if (!(c > 0.0)) throw std::runtime_error("multinomial: nonpositive count");
    total += c;
  }
  const double psi_total = digamma(total);
  for (int v = 0; v < vocab_size_; ++v) {
    expected_theta[v] = digamma(nu_tilde[v]) - psi_total;
  }
  expected_log_partition = 0.0;
}

double MultinomialFamily::prior_kl(double /*n_tilde*/,
                                   std::span<const double> nu_tilde) const {
  return dirichlet_kl_symmetric(nu_tilde, eta_);
}

// ---------------------------------------------------------------------------
// DiagonalGaussianFamily

DiagonalGaussianFamily::DiagonalGaussianFamily(int dim, double m0,
                                               double kappa0, double a0,
                                               double b0, double alpha)
    : dim_(dim), m0_(m0), kappa0_(kappa0), a0_(a0), b0_(b0), alpha_(alpha) {
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (!(kappa0 > 0.0 && a0 > 0.0 && b0 > 0.0)) {
    throw std::invalid_argument("kappa0, a0, b0 must be positive");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
}

void DiagonalGaussianFamily::prior_mean(std::span<double> out) const {
  // chosen so that prior_strength * prior_mean = (kappa0*m0, 2*b0 + kappa0*m0^2)
  for (int d = 0; d < dim_; ++d) {
    out[2 * d] = m0_;
    out[2 * d + 1] = (2.0 * b0_ + kappa0_ * m0_ * m0_) / kappa0_;
  }
}

DiagonalGaussianFamily::NormalGamma DiagonalGaussianFamily::posterior(
    double n_tilde, std::span<const double> nu_tilde, int d) const {
  const double s1 = nu_tilde[2 * d];
  const double s2 = nu_tilde[2 * d + 1];
  NormalGamma p;
  p.scale = n_tilde;
  p.mean = s1 / n_tilde;
  p.shape = a0_ + 0.5 * (n_tilde - kappa0_);
  p.rate = 0.5 * (s2 - s1 * s1 / n_tilde);
  if (!(p.shape > 0.0) || !(p.rate > 0.0)) {
    throw std::runtime_error("gaussian: nonpositive posterior shape/rate");
  }
  return p;
}

void DiagonalGaussianFamily::add_scaled_stat(const Datum& x, int /*k*/,
                                             double scale,
                                             std::span<double> nu_out) const {
  for (int d = 0; d < dim_; ++d) {
    const double v = x.values[d];
    nu_out[2 * d] += scale * v;
    nu_out[2 * d + 1] += scale * v * v;
  }
}

double DiagonalGaussianFamily::score_datum(
    const Datum& x, int /*k*/, double n_tilde,
    std::span<const double> nu_tilde) const {
  double score = 0.0;
  for (int d = 0; d < dim_; ++d) {
    const NormalGamma p = posterior(n_tilde, nu_tilde, d);
    const double e_tau = p.shape / p.rate;
    const double e_tau_mu = p.mean * e_tau;
    const double e_tau_mu2 = p.mean * p.mean * e_tau + 1.0 / p.scale;
    const double e_log_tau = digamma(p.shape) - std::log(p.rate);
    const double v = x.values[d];
    // <phi, E[theta]> - E[g] in this dimension
    score += v * e_tau_mu - 0.5 * v * v * e_tau;
    score -= 0.5 * e_tau_mu2 - 0.5 * e_log_tau +
             0.5 * std::log(2.0 * M_PI);
  }
  return score;
}

void DiagonalGaussianFamily::expectations(double n_tilde,
                                          std::span<const double> nu_tilde,
                                          std::span<double> expected_theta,
                                          double& expected_log_partition) const {
  expected_log_partition = 0.0;
  for (int d = 0; d < dim_; ++d) {
    const NormalGamma p = posterior(n_tilde, nu_tilde, d);
    const double e_tau = p.shape / p.rate;
    expected_theta[2 * d] = p.mean * e_tau;
    expected_theta[2 * d + 1] = -0.5 * e_tau;
    const double e_tau_mu2 = p.mean * p.mean * e_tau + 1.0 / p.scale;
    const double e_log_tau = digamma(p.shape) - std::log(p.rate);
    expected_log_partition +=
        0.5 * e_tau_mu2 - 0.5 * e_log_tau + 0.5 * std::log(2.0 * M_PI);
  }
}

double DiagonalGaussianFamily::prior_kl(double n_tilde,
                                        std::span<const double> nu_tilde) const {
  double kl = 0.0;
  for (int d = 0; d < dim_; ++d) {
    const NormalGamma p = posterior(n_tilde, nu_tilde, d);
    // Normal part, conditional on tau
    kl += 0.5 * std::log(p.scale / kappa0_) - 0.5 + 0.5 * kappa0_ / p.scale +
          0.5 * kappa0_ * (p.shape / p.rate) * (p.mean - m0_) * (p.mean - m0_);
    // Gamma part
    kl += (p.shape - a0_) * digamma(p.shape) - std::lgamma(p.shape) +
          std::lgamma(a0_) + a0_ * (std::log(p.rate) - std::log(b0_)) +
          p.shape * (b0_ - p.rate) / p.rate;
  }
  return kl;
}

double DiagonalGaussianFamily::log_partition(double mu, double tau) {
  return 0.5 * tau * mu * mu - 0.5 * std::log(tau) +
         0.5 * std::log(2.0 * M_PI);
}

}  // namespace esvi
