#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "stmp/tensor.hpp"

namespace stmp {

using Rng = std::mt19937_64;

/// splitmix64 finalizer (Steele, Lea, Flood 2014): increment
/// 0x9e3779b97f4a7c15, multipliers 0xbf58476d1ce4e5b9 and 0x94d049bb133111eb.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of trial `trial` at sweep point `point`. Each coordinate goes through
/// its own finalizer round, so adding trials never perturbs existing ones.
constexpr std::uint64_t trial_seed(std::uint64_t master, std::uint64_t point,
                                   std::uint64_t trial) {
  return splitmix64(splitmix64(splitmix64(master) ^ point) ^ trial);
}

/// Draws from CN(0, var).
inline cplx complex_normal(Rng& rng, double var = 1.0) {
  std::normal_distribution<double> nd(0.0, std::sqrt(var / 2.0));
  const double re = nd(rng);
  const double im = nd(rng);
  return {re, im};
}

}  // namespace stmp
