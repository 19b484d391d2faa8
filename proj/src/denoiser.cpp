#include "stmp/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stmp/errors.hpp"

namespace stmp {
namespace {

void check_domain(const ScoreModel& score, double tau) {
  const auto d = score.domain();
  if (!(tau >= 0.0) || !d.contains(tau))
    throw OutOfDomain("noise variance " + std::to_string(tau) + " outside the domain of " +
                      score.name());
}

double power_floor(double count, double tau) {
  return std::max(1e-9 * count * tau, std::numeric_limits<double>::min());
}

}  // namespace

double pool_variance(std::span<const double> tau) {
  if (tau.empty()) return 0.0;
  double s = 0.0;
  for (double t : tau) s += t;
  return s / static_cast<double>(tau.size());
}

CTensor3 tweedie_mean(const CTensor3& h_pri, double tau, const CTensor3& score1) {
  if (!h_pri.same_shape(score1)) throw DimensionMismatch("score1 shape differs from its input");
  CTensor3 out(h_pri.dim0(), h_pri.dim1(), h_pri.dim2());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = h_pri.data()[i] + tau * score1.data()[i];
  return out;
}

CTensor3 tweedie_mean(const CTensor3& h_pri, double tau, const ScoreModel& score) {
  check_domain(score, tau);
  return tweedie_mean(h_pri, tau, score.score1(h_pri, tau));
}

std::vector<double> tweedie_var(const RTensor3& score2, double tau, double floor) {
  const std::size_t kn = score2.dim0() * score2.dim1();
  const std::size_t m_count = score2.dim2();
  std::vector<double> sum(m_count, 0.0);
  for (std::size_t r = 0; r < kn; ++r)
    for (std::size_t m = 0; m < m_count; ++m) sum[m] += score2.data()[r * m_count + m];
  std::vector<double> out(m_count);
  const double hi = std::max(tau, floor);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double v = tau + tau * tau * sum[m] / static_cast<double>(kn);
    out[m] = std::isfinite(v) ? std::clamp(v, floor, hi) : hi;
  }
  return out;
}

std::vector<double> tweedie_var(const CTensor3& h_pri, double tau, const ScoreModel& score,
                                double floor) {
  if (!score.has_second_order())
    throw Error(score.name() + " has no second-order score; posterior variance unavailable");
  check_domain(score, tau);
  return tweedie_var(score.score2_diag(h_pri, tau), tau, floor);
}

NormalizedBatch normalize_inputs(const CTensor3& h_pri, double tau) {
  const std::size_t k_count = h_pri.dim0();
  const std::size_t block = h_pri.dim1() * h_pri.dim2();
  const double nm = static_cast<double>(block);
  NormalizedBatch out;
  out.h = CTensor3(h_pri.dim0(), h_pri.dim1(), h_pri.dim2());
  out.scales.device.resize(k_count);

  double total = 0.0;
  const double eps = power_floor(nm, tau);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto hk = h_pri.data().subspan(k * block, block);
    const double energy = squared_norm(hk);
    total += energy;
    double signal = energy - nm * tau;
    if (signal < eps) {
      signal = eps;
      out.scales.floored = true;
    }
    const double s = std::sqrt(nm / signal);
    out.scales.device[k] = s;
    for (std::size_t i = 0; i < block; ++i) out.h.data()[k * block + i] = s * hk[i];
  }

  const double knm = nm * static_cast<double>(k_count);
  double signal = total - knm * tau;
  const double eps_total = power_floor(knm, tau);
  if (signal < eps_total) {
    signal = eps_total;
    out.scales.floored = true;
  }
  out.scales.signal_power = signal / knm;
  out.tau = tau / out.scales.signal_power;
  return out;
}

DenoiserOutput rescale_outputs(const CTensor3& h_bar_post, std::span<const double> tau_bar_post,
                               const ScaleFactors& scales) {
  const std::size_t block = h_bar_post.dim1() * h_bar_post.dim2();
  if (scales.device.size() != h_bar_post.dim0())
    throw DimensionMismatch("scale factors do not match the batch");
  DenoiserOutput out;
  out.h_post = CTensor3(h_bar_post.dim0(), h_bar_post.dim1(), h_bar_post.dim2());
  for (std::size_t k = 0; k < h_bar_post.dim0(); ++k) {
    const double s = scales.device[k];
    for (std::size_t i = 0; i < block; ++i)
      out.h_post.data()[k * block + i] = h_bar_post.data()[k * block + i] / s;
  }
  out.tau_post.resize(tau_bar_post.size());
  for (std::size_t m = 0; m < tau_bar_post.size(); ++m)
    out.tau_post[m] = tau_bar_post[m] * scales.signal_power;
  return out;
}

ScoreDenoiser::ScoreDenoiser(std::shared_ptr<const ScoreModel> model, Options options)
    : model_(std::move(model)), options_(options) {
  if (!model_) throw Error("score denoiser needs a model");
}

DenoiserOutput ScoreDenoiser::denoise(const CTensor3& h_pri, std::span<const double> tau_pri) const {
  if (tau_pri.size() != h_pri.dim2())
    throw DimensionMismatch("one prior variance per antenna column expected");
  if (!model_->has_second_order())
    throw Error(model_->name() + " has no second-order score; posterior variance unavailable");
  const double tau = pool_variance(tau_pri);

  const CTensor3* input = &h_pri;
  double tau_eval = tau;
  NormalizedBatch normalized;
  if (options_.normalize) {
    normalized = normalize_inputs(h_pri, tau);
    input = &normalized.h;
    tau_eval = normalized.tau;
  }
  check_domain(*model_, tau_eval);

  CTensor3 s1;
  RTensor3 s2;
  try {
    model_->evaluate(*input, tau_eval, &s1, &s2);
  } catch (const BridgeError& e) {
    throw BridgeError("denoising a batch of " + std::to_string(h_pri.dim0()) +
                          " devices: " + e.what(),
                      e.status());
  }
  if (!s1.same_shape(*input) || !s2.same_shape(RTensor3(input->dim0(), input->dim1(), input->dim2())))
    throw DimensionMismatch(model_->name() + " returned scores of the wrong shape");

  CTensor3 mean = tweedie_mean(*input, tau_eval, s1);
  std::vector<double> var = tweedie_var(s2, tau_eval, 0.0);

  DenoiserOutput out;
  if (options_.normalize) {
    out = rescale_outputs(mean, var, normalized.scales);
  } else {
    out.h_post = std::move(mean);
    out.tau_post = std::move(var);
  }
  const double hi = std::max(tau, options_.var_floor);
  for (double& v : out.tau_post) v = std::clamp(v, options_.var_floor, hi);
  return out;
}

}  // namespace stmp
