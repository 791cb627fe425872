#ifndef WIREFORCE_PIPELINE_HPP
#define WIREFORCE_PIPELINE_HPP

// Observed shape in, estimation report out: optional smoothing, stiffness
// torques, classification, section forces, resolution and (given ground
// truth) the comparison metrics.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wireforce/error.hpp"
#include "wireforce/estimator.hpp"
#include "wireforce/metrics.hpp"
#include "wireforce/rod.hpp"
#include "wireforce/smoothing.hpp"

namespace wireforce {

enum class ResolveMode { KnownPosition, ZeroTorque, Midpoint };

inline const char* to_string(ResolveMode mode) {
  switch (mode) {
    case ResolveMode::KnownPosition: return "known-pos";
    case ResolveMode::ZeroTorque: return "zero-torque";
    case ResolveMode::Midpoint: return "midpoint";
  }
  return "zero-torque";
}

inline ResolveMode parse_resolve_mode(const std::string& text) {
  if (text == "known-pos") return ResolveMode::KnownPosition;
  if (text == "zero-torque") return ResolveMode::ZeroTorque;
  if (text == "midpoint") return ResolveMode::Midpoint;
  throw Error(ErrorKind::InvalidArgument, "unknown mode '" + text + "' (expected known-pos, zero-torque or midpoint)");
}

struct PipelineOptions {
  EstimatorConfig estimator;
  ResolveMode mode = ResolveMode::ZeroTorque;
  // Candidate application points for known-pos mode; each interior section
  // takes the one closest to its polyline.
  std::vector<Vec3> known_points;
  std::optional<SmoothingParams> smoothing;
};

struct TruthForce {
  std::size_t piece = 0;
  double ratio = 0.5;
  Vec3 force = Vec3::Zero();
  Vec3 point = Vec3::Zero();
};

struct TruthClamp {
  std::size_t node = 0;
  Vec3 position = Vec3::Zero();
  Vec3 reaction = Vec3::Zero();
};

struct GroundTruth {
  std::vector<TruthForce> applied_forces;
  std::vector<TruthClamp> clamps;
};

struct MetricsRecord {
  std::string label;            // "F1", "F2", ... for applied forces, "C1", ... for clamps
  std::size_t truth_index = 0;
  std::size_t estimate_index = 0;  // into EstimationReport::disturbances
  MetricsEntry entry;
};

struct EstimationReport {
  RodState rod;  // the shape the estimate was computed on
  std::optional<SmoothingResult> smoothing;
  ResolveMode mode = ResolveMode::ZeroTorque;
  SectionLabeling labeling;
  std::vector<DisturbanceEstimate> disturbances;
  Vec3 balance_residual = Vec3::Zero();  // sum of estimates + n wpp
  std::vector<std::string> warnings;
  std::vector<MetricsRecord> metrics;

  /// Largest-magnitude interior estimate, if any.
  std::optional<std::size_t> dominant_interior() const {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < disturbances.size(); ++k) {
      if (disturbances[k].boundary) continue;
      if (!best || disturbances[k].force.norm() > disturbances[*best].force.norm()) best = k;
    }
    return best;
  }
};

namespace detail {

inline double distance_to_polyline(const Vec3& p, const Points& nodes, std::size_t first_piece,
                                   std::size_t last_piece) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = first_piece; i <= last_piece; ++i) {
    const Vec3 v = nodes[i + 1] - nodes[i];
    const double t = std::clamp((p - nodes[i]).dot(v) / v.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (nodes[i] + t * v - p).norm());
  }
  return best;
}

// Each applied force is paired with the interior estimate closest to it; a
// second force landing on an already used estimate is left unmatched.
inline void attach_metrics(EstimationReport& report, const GroundTruth& truth) {
  std::vector<bool> used(report.disturbances.size(), false);
  for (std::size_t t = 0; t < truth.applied_forces.size(); ++t) {
    const auto& tf = truth.applied_forces[t];
    std::optional<std::size_t> best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < report.disturbances.size(); ++k) {
      const auto& d = report.disturbances[k];
      if (d.boundary || used[k]) continue;
      const double dist = distance_to_polyline(tf.point, report.rod.nodes(), d.first_piece, d.last_piece);
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    if (!best) {
      report.warnings.push_back("applied force " + std::to_string(t + 1) + " has no matching estimate");
      continue;
    }
    used[*best] = true;
    const auto& d = report.disturbances[*best];
    report.metrics.push_back(
        {"F" + std::to_string(t + 1), t, *best, compute_metrics(tf.force, d.force, tf.point, d.point)});
  }
  // Clamps pair with the boundary estimate at the matching rod end.
  for (std::size_t t = 0; t < truth.clamps.size(); ++t) {
    const auto& tc = truth.clamps[t];
    const bool at_start = tc.node < report.rod.piece_count() / 2;
    for (std::size_t k = 0; k < report.disturbances.size(); ++k) {
      const auto& d = report.disturbances[k];
      if (!d.boundary) continue;
      const bool starts = d.first_piece == 0;
      if (starts != at_start) continue;
      report.metrics.push_back(
          {"C" + std::to_string(t + 1), t, k, compute_metrics(tc.reaction, d.force, tc.position, d.point)});
      break;
    }
  }
}

}  // namespace detail

/// Runs the full estimation on an observed rod. Interior sections use the
/// requested resolution mode; clamp sections are resolved at their rod end,
/// giving the clamp torque. A section the zero-torque solve rejects falls back
/// to the midpoint and records a warning.
inline EstimationReport run_estimation(const RodState& observed, const PipelineOptions& options,
                                       const GroundTruth* truth = nullptr) {
  options.estimator.validate();
  EstimationReport report;
  report.mode = options.mode;
  if (options.smoothing) {
    auto smoothed = smooth(observed.nodes(), observed, *options.smoothing);
    report.rod = smoothed.rod;
    report.smoothing = std::move(smoothed);
  } else {
    report.rod = observed;
  }
  const RodState& rod = report.rod;
  const auto torques = augment_gravity(internal_stiffness_torques(rod), rod);
  report.labeling = classify_sections(rod, torques, options.estimator);
  auto estimates = estimate_section_forces(report.labeling, rod, options.estimator);

  if (options.mode == ResolveMode::KnownPosition && options.known_points.empty()) {
    bool any_interior = std::any_of(estimates.begin(), estimates.end(), [](const auto& d) { return !d.boundary; });
    if (any_interior) throw Error(ErrorKind::InvalidArgument, "known-pos mode needs at least one known point");
  }

  for (auto& d : estimates) {
    const auto& section = report.labeling.sections[d.section_index];
    if (d.boundary) {
      const Vec3 end = section.first_piece == 0 ? rod.node(0) : rod.node(rod.piece_count());
      d = resolve_disturbance(report.labeling, rod, torques, d, KnownPosition{end}, options.estimator);
      continue;
    }
    switch (options.mode) {
      case ResolveMode::KnownPosition: {
        const Vec3* best = nullptr;
        double best_dist = std::numeric_limits<double>::infinity();
        for (const auto& p : options.known_points) {
          const double dist = detail::distance_to_polyline(p, rod.nodes(), section.first_piece, section.last_piece);
          if (dist < best_dist) {
            best_dist = dist;
            best = &p;
          }
        }
        d = resolve_disturbance(report.labeling, rod, torques, d, KnownPosition{*best}, options.estimator);
        break;
      }
      case ResolveMode::ZeroTorque:
        try {
          d = resolve_disturbance(report.labeling, rod, torques, d, ZeroTorque{}, options.estimator);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::ZeroForceSection && e.kind() != ErrorKind::InconsistentSection) throw;
          report.warnings.push_back("section " + std::to_string(d.section_index) + ": " + e.what() +
                                    "; placed at the midpoint instead");
          d = resolve_disturbance(report.labeling, rod, torques, d, Midpoint{}, options.estimator);
        }
        break;
      case ResolveMode::Midpoint:
        d = resolve_disturbance(report.labeling, rod, torques, d, Midpoint{}, options.estimator);
        break;
    }
  }
  report.disturbances = std::move(estimates);

  Vec3 balance = static_cast<double>(rod.piece_count()) * rod.wpp();
  for (const auto& d : report.disturbances) balance += d.force;
  report.balance_residual = balance;

  if (truth) detail::attach_metrics(report, *truth);
  return report;
}

}  // namespace wireforce

#endif  // WIREFORCE_PIPELINE_HPP
