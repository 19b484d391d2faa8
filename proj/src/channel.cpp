#include "stmp/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "stmp/binary_io.hpp"
#include "stmp/errors.hpp"

namespace stmp {

void validate(const ChannelParams& p) {
  if (!(p.subcarrier_spacing_hz > 0.0))
    throw InvalidConfig("channel.subcarrier_spacing_hz", "spacing must be positive");
  if (!(p.delay_spread_min_ns >= 0.0 && p.delay_spread_min_ns <= p.delay_spread_max_ns))
    throw InvalidConfig("channel.delay_spread_ns", "need 0 <= min <= max");
  if (!(p.distance_min_km > 0.0 && p.distance_min_km <= p.distance_max_km))
    throw InvalidConfig("channel.distance_km", "need 0 < min <= max");
}

std::vector<cplx> steering_time(double delay_s, std::uint32_t n, double spacing_hz) {
  std::vector<cplx> a(n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::uint32_t i = 0; i < n; ++i)
    a[i] = std::polar(norm, -2.0 * std::numbers::pi * i * spacing_hz * delay_s);
  return a;
}

std::vector<cplx> steering_space(double angle_rad, std::uint32_t m) {
  std::vector<cplx> b(m);
  const double norm = 1.0 / std::sqrt(static_cast<double>(m));
  const double s = std::sin(angle_rad);
  for (std::uint32_t i = 0; i < m; ++i) b[i] = std::polar(norm, -std::numbers::pi * i * s);
  return b;
}

std::vector<double> path_powers(PowerProfile profile, std::uint32_t paths, double decay) {
  std::vector<double> rho(paths, 1.0);
  if (paths == 0) return rho;
  if (profile == PowerProfile::exponential) {
    const double rate = decay > 0.0 ? decay : 1.0 / paths;
    for (std::uint32_t l = 0; l < paths; ++l) rho[l] = std::exp(-rate * l);
  }
  double total = 0.0;
  for (double r : rho) total += r;
  for (double& r : rho) r /= total;
  return rho;
}

PathSet sample_paths(const ChannelParams& params, Rng& rng) {
  std::uniform_real_distribution<double> spread_dist(params.delay_spread_min_ns * 1e-9,
                                                     params.delay_spread_max_ns * 1e-9);
  const double spread = spread_dist(rng);
  std::uniform_real_distribution<double> delay_dist(0.0, spread);
  const double half = std::numbers::pi / 2.0;
  std::uniform_real_distribution<double> angle_dist(std::nextafter(-half, 0.0), half);
  const auto rho = path_powers(params.profile, params.paths, params.profile_decay);
  PathSet set;
  set.paths.reserve(params.paths);
  for (std::uint32_t l = 0; l < params.paths; ++l) {
    Path p;
    p.delay_s = delay_dist(rng);
    p.angle_rad = angle_dist(rng);
    p.beta = complex_normal(rng);
    p.power = rho[l];
    set.paths.push_back(p);
  }
  return set;
}

CTensor3 synth_channel(const PathSet& set, std::uint32_t n, std::uint32_t m, double spacing_hz) {
  CTensor3 h(1, n, m);
  for (const auto& p : set.paths) {
    const auto a = steering_time(p.delay_s, n, spacing_hz);
    const auto b = steering_space(p.angle_rad, m);
    const cplx c = p.beta * std::sqrt(p.power);
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = 0; j < m; ++j) h(0, i, j) += c * a[i] * std::conj(b[j]);
  }
  return h;
}

double path_loss_db(double distance_km) {
  if (!(distance_km > 0.0)) throw NonPositiveDistance("path loss needs a positive distance");
  return -128.1 - 36.7 * std::log10(distance_km);
}

double path_loss(double distance_km) { return std::pow(10.0, path_loss_db(distance_km) / 10.0); }

ChannelRealization sample_realization(const SystemConfig& cfg, const ChannelParams& params,
                                      Rng& rng) {
  ChannelRealization real;
  real.h = CTensor3(cfg.k, cfg.n, cfg.m);
  real.active.resize(cfg.k);
  real.gain.resize(cfg.k);

  std::bernoulli_distribution coin(std::clamp(cfg.activity, 0.0, 1.0));
  for (auto& a : real.active) a = coin(rng) ? 1 : 0;

  std::uniform_real_distribution<double> dist(params.distance_min_km, params.distance_max_km);
  for (auto& g : real.gain) g = path_loss(dist(rng));
  if (params.gain == GainMode::compensated) {
    std::fill(real.gain.begin(), real.gain.end(), 1.0);
  } else if (params.gain == GainMode::relative) {
    double mean = 0.0;
    for (double g : real.gain) mean += g;
    mean /= cfg.k;
    for (double& g : real.gain) g /= mean;
  }

  const std::size_t block = static_cast<std::size_t>(cfg.n) * cfg.m;
  for (std::uint32_t k = 0; k < cfg.k; ++k) {
    cplx* dst = real.h.data().data() + k * block;
    if (params.kind == ChannelKind::iid_gaussian) {
      for (std::size_t i = 0; i < block; ++i) dst[i] = complex_normal(rng, real.gain[k]);
    } else {
      const auto paths = sample_paths(params, rng);
      const auto hk = synth_channel(paths, cfg.n, cfg.m, params.subcarrier_spacing_hz);
      const double amp = std::sqrt(real.gain[k]);
      for (std::size_t i = 0; i < block; ++i) dst[i] = amp * hk.data()[i];
    }
  }
  return real;
}

CTensor3 observe(const ChannelRealization& real, const PilotOperator& pilot, double noise_var,
                 Rng& rng) {
  const auto& h = real.h;
  if (h.dim0() != pilot.k() || h.dim1() != pilot.n() || real.active.size() != h.dim0())
    throw DimensionMismatch("observe: channel and pilot dimensions disagree");
  const std::size_t m_count = h.dim2();
  const CTensor3 x = real.effective();
  CTensor3 y(pilot.t(), pilot.n(), m_count);
  std::vector<cplx> col(h.dim0() * h.dim1()), out(static_cast<std::size_t>(pilot.t()) * pilot.n());
  for (std::size_t m = 0; m < m_count; ++m) {
    gather_column(x, m, col);
    pilot.apply(col, out);
    for (auto& v : out) v += complex_normal(rng, noise_var);
    scatter_column(out, m, y);
  }
  return y;
}

double noise_for_snr(double snr_db, double power, const std::vector<double>& gains) {
  double mean = 0.0;
  for (double g : gains) mean += g;
  mean /= static_cast<double>(gains.size());
  return power * mean / std::pow(10.0, snr_db / 10.0);
}

void write_channel_dump(const std::filesystem::path& path, const CTensor3& channels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write("CHNL", 4);
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(channels.dim0()));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(channels.dim1()));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(channels.dim2()));
  for (const auto& z : channels.data()) {
    binio::write<double>(os, z.real());
    binio::write<double>(os, z.imag());
  }
  if (!os) throw FormatError("write failed: " + path.string());
}

CTensor3 read_channel_dump(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  binio::expect_magic(is, "CHNL");
  const auto count = binio::read<std::uint32_t>(is);
  const auto n = binio::read<std::uint32_t>(is);
  const auto m = binio::read<std::uint32_t>(is);
  CTensor3 h(count, n, m);
  for (auto& z : h.data()) {
    const double re = binio::read<double>(is);
    const double im = binio::read<double>(is);
    z = {re, im};
  }
  return h;
}

}  // namespace stmp
