#include "stmp/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stmp/errors.hpp"

namespace stmp {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc{} || ptr != end || v.empty())
    throw InvalidConfig(std::string(key), "expected a number, got '" + std::string(v) + "'");
  return x;
}

template <class U>
U to_unsigned(std::string_view key, std::string_view v) {
  U x = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc{} || ptr != end || v.empty())
    throw InvalidConfig(std::string(key), "expected a non-negative integer, got '" + std::string(v) + "'");
  return x;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw InvalidConfig(std::string(key), "expected a boolean, got '" + std::string(v) + "'");
}

std::pair<double, double> to_range(std::string_view key, std::string_view v) {
  auto parts = split(v, ',');
  if (parts.size() == 1) {
    const double x = to_double(key, parts[0]);
    return {x, x};
  }
  if (parts.size() != 2) throw InvalidConfig(std::string(key), "expected 'min,max'");
  return {to_double(key, parts[0]), to_double(key, parts[1])};
}

std::vector<MixtureComponent> to_mixture(std::string_view key, std::string_view v) {
  std::vector<MixtureComponent> out;
  if (v.empty()) return out;
  for (auto item : split(v, ';')) {
    if (item.empty()) continue;
    auto f = split(item, ':');
    if (f.size() != 4) throw InvalidConfig(std::string(key), "component must be weight:re:im:var");
    out.push_back({to_double(key, f[0]), cplx(to_double(key, f[1]), to_double(key, f[2])),
                   to_double(key, f[3])});
  }
  return out;
}

std::string num(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

// Nanosecond text whose value divided by 1e9 gives back exactly `seconds`.
std::string_view kind_name(ChannelKind k) { return k == ChannelKind::multipath ? "multipath" : "iid"; }
std::string_view profile_name(PowerProfile p) {
  return p == PowerProfile::uniform ? "uniform" : "exponential";
}
std::string_view gain_name(GainMode g) {
  switch (g) {
    case GainMode::absolute: return "absolute";
    case GainMode::compensated: return "compensated";
    case GainMode::relative: break;
  }
  return "relative";
}

}  // namespace

bool normalize_enabled(const DenoiserSettings& d, DenoiserKind kind) {
  return d.normalize.value_or(kind == DenoiserKind::bridge);
}

const std::vector<std::string_view>& known_keys() {
  static const std::vector<std::string_view> keys = {
      "system.k", "system.n", "system.m", "system.t", "system.p", "system.lambda",
      "system.noise_var", "system.seed", "engine.max_iters", "engine.damping",
      "engine.threshold", "engine.tol", "engine.var_floor", "engine.var_cap", "denoiser.kind",
      "denoiser.sigma2", "denoiser.normalize", "denoiser.gm_components", "denoiser.bridge_addr",
      "channel.kind", "channel.paths", "channel.delay_spread_ns", "channel.subcarrier_spacing_hz",
      "channel.distance_km", "channel.profile", "channel.profile_decay", "channel.gain", "snr.db",
      "harness.trials"};
  return keys;
}

void apply_setting(Settings& s, std::string_view key, std::string_view value) {
  const std::string k(key);
  value = trim(value);
  if (key == "system.k") s.system.k = to_unsigned<std::uint32_t>(key, value);
  else if (key == "system.n") s.system.n = to_unsigned<std::uint32_t>(key, value);
  else if (key == "system.m") s.system.m = to_unsigned<std::uint32_t>(key, value);
  else if (key == "system.t") s.system.t = to_unsigned<std::uint32_t>(key, value);
  else if (key == "system.p") s.system.power = to_double(key, value);
  else if (key == "system.lambda") s.system.activity = to_double(key, value);
  else if (key == "system.noise_var") s.system.noise_var = to_double(key, value);
  else if (key == "system.seed") s.system.seed = to_unsigned<std::uint64_t>(key, value);
  else if (key == "engine.max_iters") s.engine.max_iters = to_unsigned<std::uint32_t>(key, value);
  else if (key == "engine.damping") s.engine.damping = to_double(key, value);
  else if (key == "engine.threshold") s.engine.threshold = to_double(key, value);
  else if (key == "engine.tol") s.engine.tol = to_double(key, value);
  else if (key == "engine.var_floor") s.engine.var_floor = to_double(key, value);
  else if (key == "engine.var_cap") s.engine.var_cap = to_double(key, value);
  else if (key == "denoiser.kind") s.engine.denoiser = parse_denoiser_kind(value);
  else if (key == "denoiser.sigma2") s.denoiser.sigma2 = to_double(key, value);
  else if (key == "denoiser.normalize") {
    if (value == "auto") s.denoiser.normalize.reset();
    else s.denoiser.normalize = to_bool(key, value);
  }
  else if (key == "denoiser.gm_components") s.denoiser.gm_components = to_mixture(key, value);
  else if (key == "denoiser.bridge_addr") s.denoiser.bridge_addr = std::string(value);
  else if (key == "channel.kind") {
    if (value == "iid" || value == "iid_gaussian") s.channel.kind = ChannelKind::iid_gaussian;
    else if (value == "multipath") s.channel.kind = ChannelKind::multipath;
    else throw InvalidConfig(k, "expected iid or multipath");
  } else if (key == "channel.paths") s.channel.paths = to_unsigned<std::uint32_t>(key, value);
  else if (key == "channel.delay_spread_ns") {
    auto [lo, hi] = to_range(key, value);
    s.channel.delay_spread_min_ns = lo;
    s.channel.delay_spread_max_ns = hi;
  } else if (key == "channel.subcarrier_spacing_hz") s.channel.subcarrier_spacing_hz = to_double(key, value);
  else if (key == "channel.distance_km") {
    auto [lo, hi] = to_range(key, value);
    s.channel.distance_min_km = lo;
    s.channel.distance_max_km = hi;
  } else if (key == "channel.profile") {
    if (value == "exponential") s.channel.profile = PowerProfile::exponential;
    else if (value == "uniform") s.channel.profile = PowerProfile::uniform;
    else throw InvalidConfig(k, "expected exponential or uniform");
  } else if (key == "channel.profile_decay") s.channel.profile_decay = to_double(key, value);
  else if (key == "channel.gain") {
    if (value == "relative") s.channel.gain = GainMode::relative;
    else if (value == "absolute") s.channel.gain = GainMode::absolute;
    else if (value == "compensated") s.channel.gain = GainMode::compensated;
    else throw InvalidConfig(k, "expected relative, absolute or compensated");
  } else if (key == "snr.db") {
    if (value.empty() || value == "none") s.snr_db.reset();
    else s.snr_db = to_double(key, value);
  } else if (key == "harness.trials") s.trials = to_unsigned<std::uint32_t>(key, value);
  else throw InvalidConfig(k, "unknown key");
}

Settings parse_settings(std::istream& is) {
  Settings s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view v(line);
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos)
      throw InvalidConfig("line " + std::to_string(line_no), "expected key = value");
    const auto key = trim(v.substr(0, eq));
    try {
      apply_setting(s, key, v.substr(eq + 1));
    } catch (const InvalidConfig& e) {
      throw InvalidConfig(e.field(), e.reason() + " (line " + std::to_string(line_no) + ")");
    }
  }
  return s;
}

Settings parse_settings_text(std::string_view text) {
  std::istringstream is{std::string(text)};
  return parse_settings(is);
}

Settings load_settings(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidConfig(path.string(), "cannot open config file");
  return parse_settings(is);
}

std::string format_settings(const Settings& s) {
  std::ostringstream os;
  os << "system.k = " << s.system.k << '\n'
     << "system.n = " << s.system.n << '\n'
     << "system.m = " << s.system.m << '\n'
     << "system.t = " << s.system.t << '\n'
     << "system.p = " << num(s.system.power) << '\n'
     << "system.lambda = " << num(s.system.activity) << '\n'
     << "system.noise_var = " << num(s.system.noise_var) << '\n'
     << "system.seed = " << s.system.seed << '\n'
     << "engine.max_iters = " << s.engine.max_iters << '\n'
     << "engine.damping = " << num(s.engine.damping) << '\n'
     << "engine.threshold = " << num(s.engine.threshold) << '\n'
     << "engine.tol = " << num(s.engine.tol) << '\n'
     << "engine.var_floor = " << num(s.engine.var_floor) << '\n'
     << "engine.var_cap = " << num(s.engine.var_cap) << '\n'
     << "denoiser.kind = " << to_string(s.engine.denoiser) << '\n'
     << "denoiser.sigma2 = " << num(s.denoiser.sigma2) << '\n'
     << "denoiser.normalize = " << (!s.denoiser.normalize ? "auto" : *s.denoiser.normalize ? "true" : "false") << '\n'
     << "denoiser.gm_components = ";
  for (std::size_t i = 0; i < s.denoiser.gm_components.size(); ++i) {
    const auto& c = s.denoiser.gm_components[i];
    os << (i ? ";" : "") << num(c.weight) << ':' << num(c.mean.real()) << ':' << num(c.mean.imag())
       << ':' << num(c.var);
  }
  os << '\n'
     << "denoiser.bridge_addr = " << s.denoiser.bridge_addr << '\n'
     << "channel.kind = " << kind_name(s.channel.kind) << '\n'
     << "channel.paths = " << s.channel.paths << '\n'
     << "channel.delay_spread_ns = " << num(s.channel.delay_spread_min_ns) << ','
     << num(s.channel.delay_spread_max_ns) << '\n'
     << "channel.subcarrier_spacing_hz = " << num(s.channel.subcarrier_spacing_hz) << '\n'
     << "channel.distance_km = " << num(s.channel.distance_min_km) << ','
     << num(s.channel.distance_max_km) << '\n'
     << "channel.profile = " << profile_name(s.channel.profile) << '\n'
     << "channel.profile_decay = " << num(s.channel.profile_decay) << '\n'
     << "channel.gain = " << gain_name(s.channel.gain) << '\n'
     << "snr.db = " << (s.snr_db ? num(*s.snr_db) : std::string("none")) << '\n'
     << "harness.trials = " << s.trials << '\n';
  return os.str();
}

void validate(const Settings& s) {
  validate(s.system, s.engine);
  validate(s.channel);
  if (s.trials < 1) throw InvalidConfig("harness.trials", "need at least one trial");
  if (!(s.denoiser.sigma2 > 0.0)) throw InvalidConfig("denoiser.sigma2", "must be positive");
  if (s.snr_db && !std::isfinite(*s.snr_db)) throw InvalidConfig("snr.db", "must be finite");
  if (s.engine.denoiser == DenoiserKind::bridge && s.denoiser.bridge_addr.empty())
    throw InvalidConfig("denoiser.bridge_addr", "bridge denoiser needs an address");
  if (s.engine.denoiser == DenoiserKind::gaussian_mixture && !s.denoiser.gm_components.empty())
    try {
      (void)gm_score(s.denoiser.gm_components);
    } catch (const DegenerateMixture& e) {
      throw InvalidConfig("denoiser.gm_components", e.what());
    }
}

}  // namespace stmp
