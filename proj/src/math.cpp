#include "esvi/math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace esvi {

double digamma(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("digamma: argument must be positive");
  }
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // psi(x) ~ ln x - 1/(2x) - sum_n B_{2n} / (2n x^{2n})
  const double series =
      inv2 * (1.0 / 12.0 +
              inv2 * (-1.0 / 120.0 +
                      inv2 * (1.0 / 252.0 +
                              inv2 * (-1.0 / 240.0 +
                                      inv2 * (1.0 / 132.0 +
                                              inv2 * (-691.0 / 32760.0 +
                                                      inv2 * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

double dirichlet_kl_symmetric(std::span<const double> a, double b) {
  const std::size_t n = a.size();
  double sum = 0.0;
  for (double v : a) sum += v;
  const double psi_sum = digamma(sum);
  double kl = std::lgamma(sum) - std::lgamma(b * static_cast<double>(n)) +
              static_cast<double>(n) * std::lgamma(b);
  for (double v : a) {
    kl -= std::lgamma(v);
    kl += (v - b) * (digamma(v) - psi_sum);
  }
  return kl;
}

void softmax_inplace(std::span<double> u) {
  double mx = u[0];
  for (double v : u) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : u) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : u) v /= sum;
}

void draw_uniform_simplex(std::mt19937_64& rng, std::span<double> out) {
  std::exponential_distribution<double> expo(1.0);
  double sum = 0.0;
  for (double& v : out) {
    v = expo(rng);
    sum += v;
  }
  for (double& v : out) v /= sum;
}

void sample_without_replacement(std::mt19937_64& rng, int n, int count,
                                std::vector<int>& out) {
  out.clear();
  count = std::min(count, n);
  // Floyd's algorithm
  for (int j = n - count; j < n; ++j) {
    std::uniform_int_distribution<int> d(0, j);
    const int t = d(rng);
    if (std::find(out.begin(), out.end(), t) == out.end()) {
      out.push_back(t);
    } else {
      out.push_back(j);
    }
  }
}

}  // namespace esvi
