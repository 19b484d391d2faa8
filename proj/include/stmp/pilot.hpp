#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stmp/model.hpp"
#include "stmp/rng.hpp"
#include "stmp/tensor.hpp"

namespace stmp {

enum class PilotKind { dft };

/// Partial-orthogonal pilot matrix Q (NT x NK) built from rows of the
/// K-point unitary DFT matrix, scaled by sqrt(K P).
///
/// For subcarrier n and symbol t, device k sends
///   q_{ktn} = sqrt(K P) * U(rows(n, t), k),  U(i, k) = exp(-j 2 pi i k / K) / sqrt(K).
/// Q is never materialized on the fast path: apply() is a length-K FFT per
/// subcarrier followed by row selection, adjoint() a scatter plus inverse FFT.
///
/// Vector conventions:
///   x (device side): length K*N, index k*N + n
///   y (symbol side): length T*N, index t*N + n
class PilotOperator {
 public:
  /// Draws T distinct rows per subcarrier, independently across subcarriers.
  static PilotOperator build(const SystemConfig& cfg, Rng& rng);

  /// Wraps an explicit row table laid out (n outer, t inner).
  static PilotOperator from_rows(std::uint32_t k, std::uint32_t n, std::uint32_t t,
                                 double power, std::vector<std::uint32_t> rows);

  PilotKind kind() const { return PilotKind::dft; }
  std::uint32_t k() const { return k_; }
  std::uint32_t n() const { return n_; }
  std::uint32_t t() const { return t_; }
  double power() const { return power_; }
  double scale() const;  ///< sqrt(K P)
  std::uint32_t row(std::uint32_t n, std::uint32_t t) const { return rows_[n * t_ + t]; }
  const std::vector<std::uint32_t>& rows() const { return rows_; }

  void apply(std::span<const cplx> x, std::span<cplx> y) const;
  std::vector<cplx> apply(std::span<const cplx> x) const;
  void adjoint(std::span<const cplx> y, std::span<cplx> x) const;
  std::vector<cplx> adjoint(std::span<const cplx> y) const;

  /// Explicit NT x NK matrix, for small-instance checks. Throws TooLarge when
  /// NT*NK exceeds 2^22 entries.
  Eigen::MatrixXcd dense() const;

  friend bool operator==(const PilotOperator& a, const PilotOperator& b) {
    return a.k_ == b.k_ && a.n_ == b.n_ && a.t_ == b.t_ && a.power_ == b.power_ &&
           a.rows_ == b.rows_;
  }

 private:
  PilotOperator(std::uint32_t k, std::uint32_t n, std::uint32_t t, double power,
                std::vector<std::uint32_t> rows);

  std::uint32_t k_ = 0, n_ = 0, t_ = 0;
  double power_ = 0.0;
  std::vector<std::uint32_t> rows_;
};

/// "PILT" file: u32 K, u32 N, u32 T, f64 P, then N*T u32 rows (n outer).
void write_pilot_file(const std::filesystem::path& path, const PilotOperator& op);
PilotOperator read_pilot_file(const std::filesystem::path& path);

}  // namespace stmp
