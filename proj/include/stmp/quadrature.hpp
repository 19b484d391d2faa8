#pragma once

#include <span>
#include <vector>

#include "stmp/score.hpp"
#include "stmp/tensor.hpp"

namespace stmp {

/// Prior for brute-force integration: i.i.d. complex Gaussian mixture per entry.
struct PriorSpec {
  std::vector<MixtureComponent> components;
};

struct QuadratureOptions {
  double rel_tol = 1e-11;
  std::size_t initial_points = 32;  ///< per real axis
  std::size_t max_points_1d = 4096; ///< per real axis, one complex entry
  std::size_t max_points_2d = 64;   ///< per real axis, two complex entries
};

struct PosteriorMoments {
  std::vector<cplx> mean;
  std::vector<double> var;  ///< E|h_i - mean_i|^2 per entry
  double estimated_error = 0.0;
};

/// Posterior mean and variance of h given h_obs = h + CN(0, tau I), by direct
/// numerical integration of p(h) CN(h_obs; h, tau I) / Z on a trapezoid grid
/// refined until successive refinements agree. Supports one or two complex
/// entries. Throws GridTooCoarse when the refinement cap is hit.
PosteriorMoments brute_force_mmse(const PriorSpec& prior, std::span<const cplx> h_obs, double tau,
                                  const QuadratureOptions& options = {});

}  // namespace stmp
