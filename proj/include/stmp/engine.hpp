#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "stmp/denoiser.hpp"
#include "stmp/model.hpp"
#include "stmp/pilot.hpp"
#include "stmp/tensor.hpp"

namespace stmp {

struct VarianceLimits {
  double floor = 1e-12;
  double cap = 1e6;
};

// ---- module A ---------------------------------------------------------------

struct LmmseColumn {
  std::vector<cplx> mean;  ///< length K*N
  double var = 0.0;
};

/// Scalar-variance LMMSE for one antenna column under QQ^H = KP I:
///   x_post = x_pri + v/(KPv + d) Q^H (y - Q x_pri)
///   v_post = v - T P v^2 / (KPv + d)
/// Throws NonPositiveVariance unless v_pri > 0.
LmmseColumn lmmse_update(std::span<const cplx> y_m, const PilotOperator& pilot,
                         std::span<const cplx> x_pri_m, double v_pri, double noise_var);

// ---- EP exchange ------------------------------------------------------------

struct ExtrinsicScalar {
  double var = 0.0;
  bool clamped = false;
};

/// Gaussian division post / pri for one block sharing one variance:
///   1/v_ext = 1/v_post - 1/v_pri,  ext = v_ext (post/v_post - pri/v_pri).
/// A non-positive precision gives the uninformative message (cap, mean =
/// post_mean); otherwise v_ext is clamped into [floor, cap].
ExtrinsicScalar gaussian_ext(std::span<const cplx> post_mean, double v_post,
                             std::span<const cplx> pri_mean, double v_pri,
                             std::span<cplx> ext_mean, VarianceLimits limits = {});

/// Column-wise gaussian_ext over (k, n, m) messages. Returns the number of
/// clamped columns.
std::size_t gaussian_ext(const GaussianMessageSet& post, const GaussianMessageSet& pri,
                         GaussianMessageSet& ext, VarianceLimits limits = {});

// ---- module B: activity and effective-channel denoisers ---------------------

/// Posterior activity probability per device, evaluated in the log domain.
std::vector<double> activity_update(const GaussianMessageSet& x_pri, const GaussianMessageSet& h_ext,
                                    double prior);

/// Product of the two Gaussian messages on x_km:
///   v~ = (1/v_pri + 1/tau_ext)^-1,  x~ = v~ (x_pri/v_pri + h_ext/tau_ext).
GaussianMessageSet x_combine(const GaussianMessageSet& x_pri, const GaussianMessageSet& h_ext);

/// Variance of one entry of the Bernoulli-Gaussian belief, written as
/// lambda (1 - lambda) |x~|^2 + lambda v~ so it is never negative.
inline double bernoulli_gaussian_variance(double lambda, cplx x_tilde, double v_tilde) {
  return lambda * (1.0 - lambda) * std::norm(x_tilde) + lambda * v_tilde;
}

/// Moment-matched projection of the Bernoulli-Gaussian belief: mean lambda_k x~,
/// variance averaged over (k, n) per antenna and clamped into the limits.
GaussianMessageSet x_project(std::span<const double> activity, const GaussianMessageSet& combined,
                             VarianceLimits limits = {});

/// gamma * current + (1 - gamma) * previous, on means and variances.
GaussianMessageSet damp(const GaussianMessageSet& current, const GaussianMessageSet& previous,
                        double gamma);
double damp(double current, double previous, double gamma);

/// 1 where activity >= threshold.
std::vector<std::uint8_t> decide_activity(std::span<const double> activity, double threshold);

// ---- iteration driver -------------------------------------------------------

struct IterationRecord {
  std::uint32_t iter = 0;
  double residual = 0.0;
  double nmse_db = 0.0;     ///< NaN without ground truth
  double v_pri_mean = 0.0;  ///< module-A prior variance averaged over antennas
  double v_post_mean = 0.0; ///< module-B posterior variance averaged over antennas
  double tau_pri = 0.0;     ///< pooled denoiser input variance
  std::uint32_t clamps = 0;
  double ms = 0.0;
};

struct IterationTrace {
  std::vector<IterationRecord> rows;
  std::size_t total_clamps() const;
  /// CSV with header iter,residual,nmse_db,v_pri_mean,v_post_mean,tau_pri,clamps,ms
  void write_csv(std::ostream& os) const;
};

/// Messages available at the end of each iteration.
struct IterationSnapshot {
  std::uint32_t iter = 0;
  const GaussianMessageSet& module_b_prior;
  const DenoiserOutput& channel_post;
  const std::vector<double>& activity;
  const GaussianMessageSet& module_b_post;
  const GaussianMessageSet& module_a_prior_next;
};

struct RunOptions {
  /// Mean large-scale gain; the initial prior variance is activity * init_power.
  double init_power = 1.0;
  /// Effective channel X = alpha H, used only for the per-iteration NMSE.
  const CTensor3* truth = nullptr;
  bool record_time = true;
  std::function<void(const IterationSnapshot&)> on_iteration;
};

struct RunResult {
  CTensor3 h_post;                  ///< channel posterior from the denoiser
  GaussianMessageSet x_post;        ///< module-B posterior of X = alpha H
  std::vector<double> activity;     ///< posterior activity probabilities
  std::vector<std::uint8_t> active; ///< thresholded decisions
  IterationTrace trace;
  std::uint32_t iterations = 0;
  bool converged = false;
};

/// Turbo message passing between the LMMSE module and the activity/channel
/// denoisers, with damping of both module inputs. Stops when the relative
/// change of the module-B posterior mean drops below eng.tol or after
/// eng.max_iters. Throws Diverged on any non-finite message.
RunResult run(const SystemConfig& cfg, const EngineConfig& eng, const PilotOperator& pilot,
              const CTensor3& y, const ChannelDenoiser& denoiser, const RunOptions& options = {});

}  // namespace stmp
