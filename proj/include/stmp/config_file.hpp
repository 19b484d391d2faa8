#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stmp/channel.hpp"
#include "stmp/model.hpp"
#include "stmp/score.hpp"

namespace stmp {

struct DenoiserSettings {
  double sigma2 = 1.0;          ///< Gaussian prior variance (after normalization when enabled)
  /// Power normalization around the score model; unset means on for the
  /// bridge and off for analytic priors, whose scores are exact at any power.
  std::optional<bool> normalize;
  std::vector<MixtureComponent> gm_components;  ///< empty means one CN(0, sigma2) component
  std::string bridge_addr;      ///< host:port, tcp://host:port or exec:<command>

  friend bool operator==(const DenoiserSettings&, const DenoiserSettings&) = default;
};

/// Everything a flat config file can express.
bool normalize_enabled(const DenoiserSettings& d, DenoiserKind kind);

struct Settings {
  SystemConfig system;
  EngineConfig engine;
  ChannelParams channel;
  DenoiserSettings denoiser;
  std::optional<double> snr_db;  ///< when set, overrides system.noise_var per trial
  std::uint32_t trials = 100;

  friend bool operator==(const Settings&, const Settings&) = default;
};

/// Sets one key. Throws InvalidConfig for unknown keys or malformed values.
void apply_setting(Settings& s, std::string_view key, std::string_view value);

/// Parses `key = value` lines; '#' starts a comment. Throws InvalidConfig
/// naming the line on any error.
Settings parse_settings(std::istream& is);
Settings parse_settings_text(std::string_view text);
Settings load_settings(const std::filesystem::path& path);

/// Emits every key; parse_settings_text(format_settings(s)) == s.
std::string format_settings(const Settings& s);

/// All keys understood by apply_setting.
const std::vector<std::string_view>& known_keys();

void validate(const Settings& s);

}  // namespace stmp
