#pragma once

#include <cstdint>
#include <vector>

#include "stmp/tensor.hpp"

namespace stmp {

/// NMSE reported in dB when the linear ratio is exactly zero.
inline constexpr double kNmseFloorDb = -300.0;

/// sum_k ||a_k H_k - est_k||^2 / sum_k ||a_k H_k||^2. Throws NoActiveDevices
/// when the truth has no energy.
double nmse(const CTensor3& truth_h, const std::vector<std::uint8_t>& active,
            const CTensor3& estimate);
/// Same ratio against a truth tensor that is already effective (zeros for
/// inactive devices).
double nmse(const CTensor3& truth_x, const CTensor3& estimate);

double to_db(double ratio);

struct DetectionError {
  std::uint32_t missed = 0;
  std::uint32_t false_alarms = 0;
  double pe = 0.0;  ///< (missed + false alarms) / K
};

DetectionError detection_error(const std::vector<std::uint8_t>& truth,
                               const std::vector<std::uint8_t>& decided);

}  // namespace stmp
