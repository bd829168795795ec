#pragma once

namespace grpolab {

/// Global parameters of the reward scaling law
///   R(t) = alpha * r_init + beta * s + gamma / (1 + exp(-delta * (t - t0))).
struct SigmoidLawParams {
  double alpha = 0.0;  // initial-reward scale
  double beta = 0.0;   // model-size scale
  double gamma = 0.0;  // sigmoid amplitude, >= 0
  double delta = 1.0;  // steepness, > 0
  double t0 = 0.5;     // inflection point on the normalized-step axis, in [0, 1]

  bool operator==(const SigmoidLawParams&) const = default;
};

/// Power-law convergence model
///   (r_max - R) / (r_max - r_min) = N^(-exponent).
/// `exponent` is deliberately not called alpha: it is unrelated to
/// SigmoidLawParams::alpha.
struct PowerLawParams {
  double exponent = 0.3;
  double r_max = 1.0;
  double r_min = 0.0;

  bool operator==(const PowerLawParams&) const = default;
};

/// Values fitted in the source study across all runs. Shipped as
/// data/paper.json as well.
inline constexpr SigmoidLawParams kPublishedGlobals{
    .alpha = 1.009, .beta = 2.500, .gamma = 0.401, .delta = 39.875, .t0 = 0.1};

}  // namespace grpolab
