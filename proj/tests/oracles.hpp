// Independent reference computations used only by the tests. Everything
// here deliberately avoids the library's own code paths: different
// precision, different algorithms, different shift points.
#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

namespace oracles {

// psi(x) in long double: recurrence shift to >= 48, Bernoulli series
// through z^-18.
long double digamma_ld(long double x);

// softmax in long double
std::vector<long double> softmax_ld(std::span<const double> u);

// Numerically maximize sum_k z_k (u_k - log z_k) subject to z >= 0,
// sum z = C, by projected gradient ascent with backtracking. Returns the
// iterate; independent of the closed form under test.
std::vector<double> projected_gradient_opt(std::span<const double> u, double c,
                                           int iterations = 4000);

// Euclidean projection onto the scaled simplex {z >= 0, sum z = c}.
std::vector<double> project_simplex(std::span<const double> v, double c);

// Restricted objective evaluated in long double.
long double restricted_objective_ld(std::span<const double> u,
                                    std::span<const double> z);

// Random feasible point: c * Dirichlet(1).
std::vector<double> random_feasible(std::mt19937_64& rng, std::size_t n,
                                    double c);

// Adaptive Simpson quadrature of f over [a, b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-12, int depth = 28);

// Moments of the Normal-Gamma distribution
// q(mu, tau) = N(mu | mean, 1/(scale*tau)) Gamma(tau | shape, rate)
// by nested quadrature of an arbitrary integrand f(mu, tau).
double normal_gamma_expect(double mean, double scale, double shape,
                           double rate,
                           const std::function<double(double, double)>& f);

}  // namespace oracles
