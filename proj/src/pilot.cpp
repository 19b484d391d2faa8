#include "stmp/pilot.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "fft.hpp"
#include "stmp/binary_io.hpp"
#include "stmp/errors.hpp"

namespace stmp {

PilotOperator::PilotOperator(std::uint32_t k, std::uint32_t n, std::uint32_t t, double power,
                             std::vector<std::uint32_t> rows)
    : k_(k), n_(n), t_(t), power_(power), rows_(std::move(rows)) {}

PilotOperator PilotOperator::build(const SystemConfig& cfg, Rng& rng) {
  if (cfg.t > cfg.k) throw InvalidConfig("T", "T must not exceed K");
  if (cfg.t < 1 || cfg.n < 1) throw InvalidConfig("T", "need at least one symbol and subcarrier");
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(cfg.n) * cfg.t);
  std::vector<std::uint32_t> pool(cfg.k);
  for (std::uint32_t n = 0; n < cfg.n; ++n) {
    std::iota(pool.begin(), pool.end(), 0u);
    // Partial Fisher-Yates: the first T slots become a uniform draw without
    // replacement, in uniformly random order.
    for (std::uint32_t t = 0; t < cfg.t; ++t) {
      std::uniform_int_distribution<std::uint32_t> pick(t, cfg.k - 1);
      std::swap(pool[t], pool[pick(rng)]);
      rows[static_cast<std::size_t>(n) * cfg.t + t] = pool[t];
    }
  }
  return PilotOperator(cfg.k, cfg.n, cfg.t, cfg.power, std::move(rows));
}

PilotOperator PilotOperator::from_rows(std::uint32_t k, std::uint32_t n, std::uint32_t t,
                                       double power, std::vector<std::uint32_t> rows) {
  if (t > k) throw InvalidConfig("T", "T must not exceed K");
  if (rows.size() != static_cast<std::size_t>(n) * t)
    throw DimensionMismatch("pilot row table has the wrong length");
  for (std::uint32_t nn = 0; nn < n; ++nn) {
    std::vector<bool> seen(k, false);
    for (std::uint32_t tt = 0; tt < t; ++tt) {
      const auto r = rows[static_cast<std::size_t>(nn) * t + tt];
      if (r >= k) throw InvalidConfig("rows", "row index out of range");
      if (seen[r]) throw InvalidConfig("rows", "rows must be distinct per subcarrier");
      seen[r] = true;
    }
  }
  if (!(power > 0.0)) throw InvalidConfig("P", "transmit power must be positive");
  return PilotOperator(k, n, t, power, std::move(rows));
}

double PilotOperator::scale() const { return std::sqrt(static_cast<double>(k_) * power_); }

void PilotOperator::apply(std::span<const cplx> x, std::span<cplx> y) const {
  const std::size_t kn = static_cast<std::size_t>(k_) * n_;
  const std::size_t tn = static_cast<std::size_t>(t_) * n_;
  if (x.size() != kn || y.size() != tn)
    throw DimensionMismatch("pilot apply: expected x of length K*N and y of length T*N");
  // sqrt(KP) * (1/sqrt(K)) folds into sqrt(P) on the unnormalized transform.
  const double s = std::sqrt(power_);
  std::vector<cplx> in(k_), out(k_);
  for (std::uint32_t n = 0; n < n_; ++n) {
    for (std::uint32_t k = 0; k < k_; ++k) in[k] = x[static_cast<std::size_t>(k) * n_ + n];
    detail::fft_forward(in.data(), out.data(), k_);
    for (std::uint32_t t = 0; t < t_; ++t)
      y[static_cast<std::size_t>(t) * n_ + n] = s * out[row(n, t)];
  }
}

std::vector<cplx> PilotOperator::apply(std::span<const cplx> x) const {
  std::vector<cplx> y(static_cast<std::size_t>(t_) * n_);
  apply(x, y);
  return y;
}

void PilotOperator::adjoint(std::span<const cplx> y, std::span<cplx> x) const {
  const std::size_t kn = static_cast<std::size_t>(k_) * n_;
  const std::size_t tn = static_cast<std::size_t>(t_) * n_;
  if (x.size() != kn || y.size() != tn)
    throw DimensionMismatch("pilot adjoint: expected y of length T*N and x of length K*N");
  const double s = std::sqrt(power_);
  std::vector<cplx> bins(k_), out(k_);
  for (std::uint32_t n = 0; n < n_; ++n) {
    std::fill(bins.begin(), bins.end(), cplx{});
    for (std::uint32_t t = 0; t < t_; ++t) bins[row(n, t)] = y[static_cast<std::size_t>(t) * n_ + n];
    detail::fft_backward(bins.data(), out.data(), k_);
    for (std::uint32_t k = 0; k < k_; ++k) x[static_cast<std::size_t>(k) * n_ + n] = s * out[k];
  }
}

std::vector<cplx> PilotOperator::adjoint(std::span<const cplx> y) const {
  std::vector<cplx> x(static_cast<std::size_t>(k_) * n_);
  adjoint(y, x);
  return x;
}

Eigen::MatrixXcd PilotOperator::dense() const {
  const std::size_t rows = static_cast<std::size_t>(n_) * t_;
  const std::size_t cols = static_cast<std::size_t>(n_) * k_;
  if (rows * cols > (std::size_t{1} << 22)) throw TooLarge("dense pilot matrix exceeds 2^22 entries");
  Eigen::MatrixXcd q = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(rows),
                                              static_cast<Eigen::Index>(cols));
  const double amp = scale() / std::sqrt(static_cast<double>(k_));
  for (std::uint32_t t = 0; t < t_; ++t) {
    for (std::uint32_t n = 0; n < n_; ++n) {
      const auto r = row(n, t);
      for (std::uint32_t k = 0; k < k_; ++k) {
        // Reduce the exponent modulo K before forming the angle.
        const auto e = (static_cast<std::uint64_t>(r) * k) % k_;
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(e) / k_;
        q(static_cast<Eigen::Index>(t) * n_ + n, static_cast<Eigen::Index>(k) * n_ + n) =
            amp * cplx(std::cos(ang), std::sin(ang));
      }
    }
  }
  return q;
}

void write_pilot_file(const std::filesystem::path& path, const PilotOperator& op) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write("PILT", 4);
  binio::write<std::uint32_t>(os, op.k());
  binio::write<std::uint32_t>(os, op.n());
  binio::write<std::uint32_t>(os, op.t());
  binio::write<double>(os, op.power());
  for (auto r : op.rows()) binio::write<std::uint32_t>(os, r);
  if (!os) throw FormatError("write failed: " + path.string());
}

PilotOperator read_pilot_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  binio::expect_magic(is, "PILT");
  const auto k = binio::read<std::uint32_t>(is);
  const auto n = binio::read<std::uint32_t>(is);
  const auto t = binio::read<std::uint32_t>(is);
  const auto p = binio::read<double>(is);
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(n) * t);
  for (auto& r : rows) r = binio::read<std::uint32_t>(is);
  return PilotOperator::from_rows(k, n, t, p, std::move(rows));
}

}  // namespace stmp
