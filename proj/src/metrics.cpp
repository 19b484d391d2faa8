#include "stmp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "stmp/errors.hpp"

namespace stmp {

double nmse(const CTensor3& truth_x, const CTensor3& estimate) {
  if (!truth_x.same_shape(estimate)) throw DimensionMismatch("nmse: shapes differ");
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < truth_x.size(); ++i) {
    err += std::norm(truth_x.data()[i] - estimate.data()[i]);
    ref += std::norm(truth_x.data()[i]);
  }
  if (!(ref > 0.0)) throw NoActiveDevices("nmse: no active device carries energy");
  return err / ref;
}

double nmse(const CTensor3& truth_h, const std::vector<std::uint8_t>& active,
            const CTensor3& estimate) {
  if (active.size() != truth_h.dim0()) throw DimensionMismatch("nmse: activity length differs");
  if (std::none_of(active.begin(), active.end(), [](auto a) { return a != 0; }))
    throw NoActiveDevices("nmse: no active devices");
  CTensor3 x = truth_h;
  const std::size_t block = x.dim1() * x.dim2();
  for (std::size_t k = 0; k < x.dim0(); ++k)
    if (!active[k])
      std::fill_n(x.data().begin() + static_cast<std::ptrdiff_t>(k * block), block, cplx{});
  return nmse(x, estimate);
}

double to_db(double ratio) {
  if (!(ratio > 0.0)) return kNmseFloorDb;
  return std::max(10.0 * std::log10(ratio), kNmseFloorDb);
}

DetectionError detection_error(const std::vector<std::uint8_t>& truth,
                               const std::vector<std::uint8_t>& decided) {
  if (truth.size() != decided.size()) throw DimensionMismatch("detection_error: lengths differ");
  DetectionError e;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] && !decided[k]) ++e.missed;
    if (!truth[k] && decided[k]) ++e.false_alarms;
  }
  e.pe = truth.empty() ? 0.0 : static_cast<double>(e.missed + e.false_alarms) / truth.size();
  return e;
}

}  // namespace stmp
