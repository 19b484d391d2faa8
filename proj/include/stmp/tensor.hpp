#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace stmp {

using cplx = std::complex<double>;

/// Dense rank-3 tensor stored k-major, then n, then m.
///
/// Channel batches are indexed (device k, subcarrier n, antenna m); the
/// observation reuses the same container indexed (symbol t, subcarrier n,
/// antenna m). The layout matches the score-bridge wire order.
template <class T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, T fill = T{})
      : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, fill) {}

  std::size_t dim0() const { return d0_; }
  std::size_t dim1() const { return d1_; }
  std::size_t dim2() const { return d2_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j, std::size_t l) {
    return data_[(i * d1_ + j) * d2_ + l];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t l) const {
    return data_[(i * d1_ + j) * d2_ + l];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Tensor3& o) const {
    return d0_ == o.d0_ && d1_ == o.d1_ && d2_ == o.d2_;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<T> data_;
};

using CTensor3 = Tensor3<cplx>;
using RTensor3 = Tensor3<double>;

/// Copies antenna column m of a (k, n, m) tensor into a k-major (k, n) vector.
inline void gather_column(const CTensor3& x, std::size_t m, std::span<cplx> out) {
  const std::size_t rows = x.dim0() * x.dim1();
  for (std::size_t r = 0; r < rows; ++r) out[r] = x.data()[r * x.dim2() + m];
}

inline void scatter_column(std::span<const cplx> col, std::size_t m, CTensor3& x) {
  const std::size_t rows = x.dim0() * x.dim1();
  for (std::size_t r = 0; r < rows; ++r) x.data()[r * x.dim2() + m] = col[r];
}

inline double squared_norm(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return s;
}

}  // namespace stmp
