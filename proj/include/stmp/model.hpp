#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "stmp/tensor.hpp"

namespace stmp {

/// Dimensions, powers and noise of one grant-free access block.
struct SystemConfig {
  std::uint32_t k = 100;      ///< potential devices
  std::uint32_t n = 8;        ///< pilot subcarriers
  std::uint32_t m = 4;        ///< BS antennas
  std::uint32_t t = 30;       ///< pilot OFDM symbols
  double power = 1.0;         ///< per-device transmit power, linear
  double activity = 0.1;      ///< prior activity probability
  double noise_var = 0.01;    ///< AWGN variance per complex entry
  std::uint64_t seed = 1;

  friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

enum class DenoiserKind { gaussian, gaussian_mixture, bridge };

std::string_view to_string(DenoiserKind kind);
DenoiserKind parse_denoiser_kind(std::string_view text);

struct EngineConfig {
  std::uint32_t max_iters = 30;
  double damping = 0.8;
  double threshold = 0.5;   ///< activity decision threshold on the posterior
  double var_floor = 1e-12;
  double var_cap = 1e6;
  double tol = 1e-4;        ///< relative change of the module-B posterior mean
  DenoiserKind denoiser = DenoiserKind::gaussian;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

/// Throws InvalidConfig naming the first violated field.
void validate(const SystemConfig& cfg);
void validate(const EngineConfig& eng);
void validate(const SystemConfig& cfg, const EngineConfig& eng);

/// One draw of channels and activity. The effective channel is
/// active[k] * h(k, ., .); it is never stored separately.
struct ChannelRealization {
  CTensor3 h;                        ///< (k, n, m)
  std::vector<std::uint8_t> active;  ///< 0/1 per device
  std::vector<double> gain;          ///< large-scale power gain per device

  std::size_t active_count() const;
  CTensor3 effective() const;
};

/// Means over (k, n, m) with one shared variance per antenna column.
struct GaussianMessageSet {
  CTensor3 mean;
  std::vector<double> var;
};

struct ActivityPosterior {
  std::vector<double> prob;
};

}  // namespace stmp
