#ifndef WIREFORCE_SMOOTHING_HPP
#define WIREFORCE_SMOOTHING_HPP

// Smoothing of observed (noisy) rod shapes and arc-length resampling.
//
// Each pass moves interior nodes a little towards their neighbours. After pass
// i the objective J_i = (E_0 - E_i) - m_p * sum_k |x_k^(i) - x_k^(0)| trades the
// drop in elastic energy against how far the nodes moved; the loop continues
// while J keeps increasing and returns the shape before the first non-increase.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "wireforce/error.hpp"
#include "wireforce/rod.hpp"

namespace wireforce {

struct SmoothingParams {
  std::optional<double> m_p;            // J/m; when unset, E_0 / (displacement_fraction * L)
  double displacement_fraction = 0.3;   // total displacement, as a fraction of L, worth the whole E_0
  int max_steps = 10000;
  double lambda = 0.5;                  // Laplacian step weight
  std::size_t resample_to = 0;          // piece count after smoothing; 0 keeps the input count

  void validate() const {
    if (m_p && !(*m_p > 0.0)) throw Error(ErrorKind::InvalidArgument, "m_p must be positive");
    if (!(displacement_fraction > 0.0)) throw Error(ErrorKind::InvalidArgument, "displacement_fraction must be positive");
    if (max_steps < 0) throw Error(ErrorKind::InvalidArgument, "max_steps must be non-negative");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw Error(ErrorKind::InvalidArgument, "lambda must lie in (0, 1]");
    if (resample_to != 0 && resample_to < 4) throw Error(ErrorKind::InvalidArgument, "resample_to must be at least 4");
  }
};

struct SmoothingResult {
  RodState rod;
  std::vector<double> objective;  // J_0 = 0, J_1, ... for every pass evaluated
  std::size_t steps = 0;          // passes kept in the returned shape
  double m_p = 0.0;
};

/// One uniform Laplacian pass with both endpoints pinned.
inline Points laplacian_step(const Points& x, double lambda) {
  Points out = x;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) out[i] = x[i] + 0.5 * lambda * (x[i - 1] - 2.0 * x[i] + x[i + 1]);
  return out;
}

/// Arc-length uniform resampling of the polyline; endpoints stay fixed. The
/// weight per piece is rescaled so the total weight is unchanged.
inline RodState resample(const RodState& rod, std::size_t piece_count) {
  if (piece_count < 4) throw Error(ErrorKind::InvalidArgument, "resample needs at least 4 pieces");
  const auto& x = rod.nodes();
  const std::size_t n = rod.piece_count();
  std::vector<double> s(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) s[i + 1] = s[i] + (x[i + 1] - x[i]).norm();
  const double total = s.back();

  Points out(piece_count + 1);
  std::vector<double> twist(piece_count, 0.0);
  const auto& theta = rod.twist_angles();
  out.front() = x.front();
  out.back() = x.back();
  std::size_t seg = 0;
  for (std::size_t k = 1; k < piece_count; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(piece_count);
    while (seg + 1 < n && s[seg + 1] < target) ++seg;
    const double t = (target - s[seg]) / (s[seg + 1] - s[seg]);
    out[k] = x[seg] + t * (x[seg + 1] - x[seg]);
  }
  // Twist angles are interpolated between piece midpoints.
  auto twist_at = [&](double target) {
    std::size_t i = 0;
    while (i + 1 < n && 0.5 * (s[i + 1] + s[i + 2]) < target) ++i;
    if (i + 1 >= n) return theta[n - 1];
    const double a = 0.5 * (s[i] + s[i + 1]);
    const double b = 0.5 * (s[i + 1] + s[i + 2]);
    const double t = std::clamp((target - a) / (b - a), 0.0, 1.0);
    return theta[i] + t * (theta[i + 1] - theta[i]);
  };
  for (std::size_t k = 0; k < piece_count; ++k) {
    twist[k] = twist_at(total * (static_cast<double>(k) + 0.5) / static_cast<double>(piece_count));
  }
  auto material = rod.material();
  material.wpp = rod.wpp() * static_cast<double>(n) / static_cast<double>(piece_count);
  const std::vector<double> rest(piece_count, total / static_cast<double>(piece_count));
  return RodState::make(std::move(out), material, rest, twist);
}

/// Smooths observed points using the stiffness of rod_template (its rest
/// lengths are ignored: the observed edge lengths serve as rest lengths).
inline SmoothingResult smooth(std::span<const Vec3> points, const RodState& rod_template,
                              const SmoothingParams& params = {}) {
  params.validate();
  if (points.size() < 5) throw Error(ErrorKind::InsufficientPoints, "smoothing needs at least 5 points");
  auto material = rod_template.material();
  if (rod_template.piece_count() != points.size() - 1) {
    material.wpp = rod_template.wpp() * static_cast<double>(rod_template.piece_count()) /
                   static_cast<double>(points.size() - 1);
  }
  const Points original(points.begin(), points.end());
  const RodState start = RodState::make(original, material);
  const double e0 = elastic_energy(start);

  SmoothingResult result;
  result.m_p = params.m_p ? *params.m_p : e0 / (params.displacement_fraction * start.length());
  result.objective.push_back(0.0);

  Points current = original;
  for (int step = 1; step <= params.max_steps; ++step) {
    Points next = laplacian_step(current, params.lambda);
    const double energy = elastic_energy(start.with_nodes(next));
    double displacement = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) displacement += (next[k] - original[k]).norm();
    const double j = (e0 - energy) - result.m_p * displacement;
    result.objective.push_back(j);
    if (j <= result.objective[result.objective.size() - 2]) break;
    current = std::move(next);
    result.steps = static_cast<std::size_t>(step);
  }

  RodState smoothed = start.with_nodes(current);
  if (params.resample_to != 0) smoothed = resample(smoothed, params.resample_to);
  result.rod = std::move(smoothed);
  return result;
}

}  // namespace wireforce

#endif  // WIREFORCE_SMOOTHING_HPP
