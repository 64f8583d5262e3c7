#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lobwm/rng.hpp"

namespace lobwm {

// Diagonal-Gaussian mixture over an m-dimensional latent state.
struct MixtureParams {
  std::size_t components = 0;  // K
  std::size_t dim = 0;         // m
  std::vector<double> weights;  // K, on the simplex
  std::vector<double> means;    // K*m row-major
  std::vector<double> vars;     // K*m, strictly positive

  void validate() const;  // throws ValidationError

  // Splits an mdn_head output vector [w(K), mu(K*m), var(K*m)].
  static MixtureParams from_head_output(std::span<const double> head, std::size_t components,
                                        std::size_t dim);
};

// log p(z) with log-sum-exp stabilization.
double log_likelihood(const MixtureParams& p, std::span<const double> z);

// Component index drawn proportionally to the weights.
std::size_t sample_component(std::span<const double> weights, Rng& rng);

// Draw one latent: pick a component (weights sharpened by 1/temperature),
// then sample N(mu_k, temperature * var_k). temperature -> 0 collapses to the
// argmax-weight component's mean.
std::vector<double> sample(const MixtureParams& p, double temperature, Rng& rng);

}  // namespace lobwm
