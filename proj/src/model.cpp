#include "stmp/model.hpp"

#include <cmath>
#include <string>

#include "stmp/errors.hpp"

namespace stmp {

std::string_view to_string(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::gaussian: return "gaussian";
    case DenoiserKind::gaussian_mixture: return "gaussian_mixture";
    case DenoiserKind::bridge: return "bridge";
  }
  return "gaussian";
}

DenoiserKind parse_denoiser_kind(std::string_view text) {
  if (text == "gaussian") return DenoiserKind::gaussian;
  if (text == "gaussian_mixture" || text == "gm") return DenoiserKind::gaussian_mixture;
  if (text == "bridge") return DenoiserKind::bridge;
  throw InvalidConfig("denoiser.kind", "unknown denoiser '" + std::string(text) + "'");
}

void validate(const SystemConfig& cfg) {
  if (cfg.k < 1) throw InvalidConfig("K", "K must be at least 1");
  if (cfg.n < 1) throw InvalidConfig("N", "N must be at least 1");
  if (cfg.m < 1) throw InvalidConfig("M", "M must be at least 1");
  if (cfg.t < 1) throw InvalidConfig("T", "T must be at least 1");
  if (cfg.t > cfg.k) throw InvalidConfig("T", "T must not exceed K");
  if (!(cfg.power > 0.0) || !std::isfinite(cfg.power))
    throw InvalidConfig("P", "transmit power must be positive");
  if (!(cfg.activity > 0.0 && cfg.activity <= 1.0))
    throw InvalidConfig("lambda", "activity probability must lie in (0, 1]");
  if (!(cfg.noise_var > 0.0) || !std::isfinite(cfg.noise_var))
    throw InvalidConfig("noise_var", "noise variance must be positive");
}

void validate(const EngineConfig& eng) {
  if (eng.max_iters < 1) throw InvalidConfig("max_iters", "need at least one iteration");
  if (!(eng.damping > 0.0 && eng.damping <= 1.0))
    throw InvalidConfig("damping", "damping must lie in (0, 1]");
  if (!(eng.threshold > 0.0 && eng.threshold < 1.0))
    throw InvalidConfig("threshold", "threshold must lie in (0, 1)");
  if (!(eng.var_floor > 0.0))
    throw InvalidConfig("var_floor", "variance floor must be positive");
  if (!(eng.var_floor < eng.var_cap) || !std::isfinite(eng.var_cap))
    throw InvalidConfig("var_cap", "variance cap must exceed the floor");
  if (!(eng.tol > 0.0)) throw InvalidConfig("tol", "tolerance must be positive");
}

void validate(const SystemConfig& cfg, const EngineConfig& eng) {
  validate(cfg);
  validate(eng);
}

std::size_t ChannelRealization::active_count() const {
  std::size_t c = 0;
  for (auto a : active) c += a ? 1 : 0;
  return c;
}

CTensor3 ChannelRealization::effective() const {
  CTensor3 x = h;
  const std::size_t block = h.dim1() * h.dim2();
  for (std::size_t k = 0; k < h.dim0(); ++k) {
    if (active[k]) continue;
    for (std::size_t i = 0; i < block; ++i) x.data()[k * block + i] = cplx{};
  }
  return x;
}

}  // namespace stmp
