#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stmp/model.hpp"
#include "stmp/pilot.hpp"
#include "stmp/rng.hpp"
#include "stmp/tensor.hpp"

namespace stmp {

enum class ChannelKind { iid_gaussian, multipath };
enum class PowerProfile { exponential, uniform };

/// How per-device large-scale gains are expressed.
///   relative:    path loss divided by its mean over the drawn devices
///   absolute:    raw path loss (tiny linear values, e.g. 1e-13)
///   compensated: every gain is 1
enum class GainMode { relative, absolute, compensated };

struct ChannelParams {
  ChannelKind kind = ChannelKind::iid_gaussian;
  std::uint32_t paths = 8;
  double subcarrier_spacing_hz = 30e3;
  double delay_spread_min_ns = 100.0;
  double delay_spread_max_ns = 363.0;
  double distance_min_km = 0.035;
  double distance_max_km = 0.2;
  PowerProfile profile = PowerProfile::exponential;
  double profile_decay = 0.0;  ///< exponential rate per path index; <= 0 means 1/L
  GainMode gain = GainMode::relative;

  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

void validate(const ChannelParams& params);

struct Path {
  cplx beta;
  double power;
  double delay_s;
  double angle_rad;
};

struct PathSet {
  std::vector<Path> paths;
};

/// a_N(tau) = [1, e^{-j 2 pi df tau}, ..., e^{-j 2 pi (N-1) df tau}] / sqrt(N)
std::vector<cplx> steering_time(double delay_s, std::uint32_t n, double spacing_hz);
/// b_M(phi) = [1, e^{-j pi sin phi}, ..., e^{-j pi (M-1) sin phi}] / sqrt(M)
std::vector<cplx> steering_space(double angle_rad, std::uint32_t m);

/// Normalized path powers for L paths under the given profile.
std::vector<double> path_powers(PowerProfile profile, std::uint32_t paths, double decay);

PathSet sample_paths(const ChannelParams& params, Rng& rng);

/// H = sum_l beta_l sqrt(rho_l) a_N(tau_l) b_M(phi_l)^H, returned as a 1 x N x M tensor.
CTensor3 synth_channel(const PathSet& paths, std::uint32_t n, std::uint32_t m, double spacing_hz);

/// Linear gain of -128.1 - 36.7 log10(d) dB. Throws NonPositiveDistance.
double path_loss(double distance_km);
double path_loss_db(double distance_km);

ChannelRealization sample_realization(const SystemConfig& cfg, const ChannelParams& params,
                                      Rng& rng);

/// Y(t, n, m) = (Q x_m)(t, n) + CN(0, noise_var) for every antenna column.
CTensor3 observe(const ChannelRealization& real, const PilotOperator& pilot, double noise_var,
                 Rng& rng);

/// Noise variance for a target SNR: P * mean_k(g_k) / 10^(snr/10).
double noise_for_snr(double snr_db, double power, const std::vector<double>& gains);

/// "CHNL" dump: u32 count, u32 N, u32 M, then count*N*M (f64 re, f64 im).
void write_channel_dump(const std::filesystem::path& path, const CTensor3& channels);
CTensor3 read_channel_dump(const std::filesystem::path& path);

}  // namespace stmp
