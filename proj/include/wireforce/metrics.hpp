#ifndef WIREFORCE_METRICS_HPP
#define WIREFORCE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <string_view>

#include "wireforce/rod.hpp"

namespace wireforce {

inline constexpr double kMetricsEps = 1e-9;  // N

struct MetricsEntry {
  double rel_l2 = 0.0;
  double angle_rad = 0.0;
  double angle_deg = 0.0;
  bool angle_defined = true;  // false when either force is shorter than eps
  double pos_diff = 0.0;      // m
};

inline MetricsEntry compute_metrics(const Vec3& f_act, const Vec3& f_est, const Vec3& p_act, const Vec3& p_est,
                                    double eps = kMetricsEps) {
  MetricsEntry m;
  m.rel_l2 = (f_est - f_act).norm() / (f_act.norm() + eps);
  if (f_act.norm() < eps || f_est.norm() < eps) {
    m.angle_defined = false;
  } else {
    const double cosine = std::clamp(f_act.dot(f_est) / (f_act.norm() * f_est.norm()), -1.0, 1.0);
    m.angle_rad = std::acos(cosine);
    m.angle_deg = m.angle_rad * 180.0 / std::numbers::pi;
  }
  m.pos_diff = (p_est - p_act).norm();
  return m;
}

enum class AngleUnit { Degrees, Radians };

/// One table row: "id: rel_l2, angle, position mm". Undefined angles print as "nan".
inline std::string format_metrics_row(std::string_view id, const MetricsEntry& m,
                                      AngleUnit unit = AngleUnit::Degrees) {
  const double angle = unit == AngleUnit::Degrees ? m.angle_deg : m.angle_rad;
  char buf[160];
  if (m.angle_defined) {
    std::snprintf(buf, sizeof buf, ": %.4f, %.4f, %.4f mm", m.rel_l2, angle, m.pos_diff * 1000.0);
  } else {
    std::snprintf(buf, sizeof buf, ": %.4f, nan, %.4f mm", m.rel_l2, m.pos_diff * 1000.0);
  }
  return std::string(id) + buf;
}

}  // namespace wireforce

#endif  // WIREFORCE_METRICS_HPP
