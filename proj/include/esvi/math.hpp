#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace esvi {

// Digamma function psi(x) for x > 0.
// Upward recurrence psi(x) = psi(x+1) - 1/x until x >= 6, then the
// asymptotic series through the x^-14 term. Throws std::domain_error
// for x <= 0.
double digamma(double x);

// KL( Dirichlet(a) || Dirichlet(b * 1) ) for a concentration vector `a`
// against a symmetric prior `b`.
double dirichlet_kl_symmetric(std::span<const double> a, double b);

// In-place softmax with max-subtraction. `u` holds scores on input and
// probabilities on output.
void softmax_inplace(std::span<double> u);

// Draws from Dirichlet(1, ..., 1), i.e. uniform on the simplex.
void draw_uniform_simplex(std::mt19937_64& rng, std::span<double> out);

// Sample `count` distinct integers from [0, n) into `out`.
void sample_without_replacement(std::mt19937_64& rng, int n, int count,
                                std::vector<int>& out);

}  // namespace esvi
