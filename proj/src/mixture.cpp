#include "lobwm/mixture.hpp"

#include <algorithm>
#include <cmath>

#include "lobwm/common.hpp"

namespace lobwm {

void MixtureParams::validate() const {
  if (components == 0 || dim == 0) throw ValidationError("mixture: empty parameterization");
  if (weights.size() != components || means.size() != components * dim ||
      vars.size() != components * dim)
    throw ValidationError("mixture: inconsistent parameter sizes");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ValidationError("mixture: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ValidationError("mixture: weights do not sum to 1");
  for (double v : vars)
    if (!(v > 0.0)) throw ValidationError("mixture: non-positive variance");
}

MixtureParams MixtureParams::from_head_output(std::span<const double> head,
                                              std::size_t components, std::size_t dim) {
  if (head.size() != components + 2 * components * dim)
    throw ValidationError("mixture: bad head output size");
  MixtureParams p;
  p.components = components;
  p.dim = dim;
  p.weights.assign(head.begin(), head.begin() + components);
  p.means.assign(head.begin() + components, head.begin() + components + components * dim);
  p.vars.assign(head.begin() + components + components * dim, head.end());
  p.validate();
  return p;
}

double log_likelihood(const MixtureParams& p, std::span<const double> z) {
  p.validate();
  if (z.size() != p.dim) throw ValidationError("mixture: latent size mismatch");
  std::vector<double> comp_log(p.components);
  for (std::size_t k = 0; k < p.components; ++k) {
    double lg = std::log(std::max(p.weights[k], 1e-300));
    for (std::size_t d = 0; d < p.dim; ++d) {
      const double v = p.vars[k * p.dim + d];
      const double diff = z[d] - p.means[k * p.dim + d];
      lg += -0.5 * (std::log(2.0 * M_PI * v) + diff * diff / v);
    }
    comp_log[k] = lg;
  }
  const double mx = *std::max_element(comp_log.begin(), comp_log.end());
  double acc = 0.0;
  for (double lg : comp_log) acc += std::exp(lg - mx);
  return mx + std::log(acc);
}

std::size_t sample_component(std::span<const double> weights, Rng& rng) {
  return rng.pick_weighted(weights);
}

std::vector<double> sample(const MixtureParams& p, double temperature, Rng& rng) {
  p.validate();
  if (!(temperature > 0.0)) throw ValidationError("mixture: temperature must be positive");

  std::size_t k;
  if (temperature == 1.0) {
    k = sample_component(p.weights, rng);
  } else {
    // sharpen/flatten the selection in log space: w_k^(1/T), renormalized
    std::vector<double> logits(p.components);
    for (std::size_t i = 0; i < p.components; ++i)
      logits[i] = std::log(std::max(p.weights[i], 1e-300)) / temperature;
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w(p.components);
    for (std::size_t i = 0; i < p.components; ++i) w[i] = std::exp(logits[i] - mx);
    k = sample_component(w, rng);
  }

  std::vector<double> z(p.dim);
  for (std::size_t d = 0; d < p.dim; ++d) {
    const double sd = std::sqrt(temperature * p.vars[k * p.dim + d]);
    z[d] = p.means[k * p.dim + d] + sd * rng.normal();
  }
  return z;
}

}  // namespace lobwm
