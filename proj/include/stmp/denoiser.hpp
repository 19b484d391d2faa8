#pragma once

#include <memory>
#include <span>
#include <vector>

#include "stmp/score.hpp"
#include "stmp/tensor.hpp"

namespace stmp {

/// Posterior channel message returned by a channel denoiser.
struct DenoiserOutput {
  CTensor3 h_post;              ///< (k, n, m)
  std::vector<double> tau_post; ///< one variance per antenna column
};

/// Arithmetic mean of the per-antenna prior variances.
double pool_variance(std::span<const double> tau);

/// H_post = H_pri + tau * score1(H_pri, tau). Throws OutOfDomain.
CTensor3 tweedie_mean(const CTensor3& h_pri, double tau, const ScoreModel& score);
CTensor3 tweedie_mean(const CTensor3& h_pri, double tau, const CTensor3& score1);

/// tau_post(m) = tau + tau^2/(K N) * sum_{k,n} score2(k, n, m), clamped to
/// [floor, tau]. Throws OutOfDomain, or Error if the model has no second order.
std::vector<double> tweedie_var(const CTensor3& h_pri, double tau, const ScoreModel& score,
                                double floor = 1e-12);
std::vector<double> tweedie_var(const RTensor3& score2, double tau, double floor = 1e-12);

/// Per-device and pooled scales mapping a noisy batch onto unit channel power.
struct ScaleFactors {
  std::vector<double> device;  ///< s_k multiplying H_k
  double signal_power = 0.0;   ///< max(sum_k ||H_k||^2 - KNM tau, floor) / (KNM)
  bool floored = false;        ///< a power floor fired somewhere
};

struct NormalizedBatch {
  CTensor3 h;
  double tau = 0.0;
  ScaleFactors scales;
};

/// s_k = sqrt(NM / max(||H_k||^2 - NM tau, eps)), eps = 1e-9 NM tau;
/// tau_bar = tau KNM / max(sum_k ||H_k||^2 - KNM tau, 1e-9 KNM tau).
NormalizedBatch normalize_inputs(const CTensor3& h_pri, double tau);

/// Inverse of normalize_inputs: means divided by s_k, variances multiplied
/// by the pooled signal power.
DenoiserOutput rescale_outputs(const CTensor3& h_bar_post, std::span<const double> tau_bar_post,
                               const ScaleFactors& scales);

/// Module-B channel denoiser: AWGN observation in, MMSE posterior out.
class ChannelDenoiser {
 public:
  virtual ~ChannelDenoiser() = default;
  virtual DenoiserOutput denoise(const CTensor3& h_pri, std::span<const double> tau_pri) const = 0;
};

/// Tweedie denoiser over any score model. Pipeline per call:
/// pool variance -> (normalize) -> scores -> Tweedie mean/var -> (rescale).
class ScoreDenoiser final : public ChannelDenoiser {
 public:
  struct Options {
    bool normalize = true;
    double var_floor = 1e-12;
  };

  explicit ScoreDenoiser(std::shared_ptr<const ScoreModel> model)
      : ScoreDenoiser(std::move(model), Options{}) {}
  ScoreDenoiser(std::shared_ptr<const ScoreModel> model, Options options);

  DenoiserOutput denoise(const CTensor3& h_pri, std::span<const double> tau_pri) const override;

  const ScoreModel& model() const { return *model_; }
  const Options& options() const { return options_; }

 private:
  std::shared_ptr<const ScoreModel> model_;
  Options options_;
};

}  // namespace stmp
