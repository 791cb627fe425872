#ifndef WIREFORCE_ESTIMATOR_HPP
#define WIREFORCE_ESTIMATOR_HPP

// Shape-based disturbance detection and estimation.
//
// In static equilibrium every undisturbed piece i satisfies
//     e^i x F^i + c^i = 0,
// where F^i is the resultant of the external forces beyond piece i and c^i the
// gravity-augmented stiffness torque. Pieces of one undisturbed (UD) section
// share F. Three consecutive pieces give a 9x3 least-squares problem for F
// whose residual separates UD pieces from disturbed (D) ones; differences of
// the recovered resultants across a D section give its external force, and a
// moment balance over the section gives its torque or point of application.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "wireforce/error.hpp"
#include "wireforce/rod.hpp"

namespace wireforce {

/// How the resultant of a UD section is recovered from its pieces.
enum class ResultantFit {
  WindowMean,         // mean of F* over the three-piece windows inside the section
  SectionLeastSquares,  // one least-squares solve stacking every piece of the section
  // Fits Y_j + x_j x F = K over the section's nodes, with Y_j the running sum
  // of c^i up to node j. Same answer on exact data, far less sensitive to
  // shape noise because the sum undoes the differencing inside c^i.
  CumulativeLeastSquares
};

struct EstimatorConfig {
  double cond_a_tol = 1e-3;      // normalized condition A threshold
  double cond_b_rel_tol = 1e-2;  // window relative residual threshold
  double svd_rank_tol = 1e-4;    // sigma_3 / sigma_1 below this: edges (nearly) parallel
  double parallel_tol = 1e-3;    // |sin| below which a force line runs parallel to a piece
  bool seed_clamped_ends = true;  // first and last piece always start out disturbed
  // Adds n_D * wpp to each section force. Off by default: the stiffness
  // torques already carry the weight, so the term double counts it.
  bool section_gravity_term = false;
  bool boundary_gravity_term = true;  // with section_gravity_term, also for end sections
  double zero_force_tol = 1e-9;        // N
  double zero_torque_axial_tol = 0.5;  // max |m.f|/(|m||f|) accepted by the zero-torque solve
  ResultantFit resultant_fit = ResultantFit::WindowMean;

  void validate() const {
    auto unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!unit(cond_a_tol) || !unit(cond_b_rel_tol) || !unit(svd_rank_tol) || !unit(parallel_tol)) {
      throw Error(ErrorKind::InvalidArgument, "estimator thresholds must lie in (0, 1)");
    }
    if (!(zero_force_tol > 0.0) || !(zero_torque_axial_tol > 0.0 && zero_torque_axial_tol <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "invalid zero-torque tolerances");
    }
  }
};

struct ConditionA {
  double value = 0.0;
  bool consistent = true;
};

/// e_i . c_{i+1} + e_{i+1} . c_i, which vanishes for two pieces of one UD section.
inline ConditionA condition_a(const Vec3& e_i, const Vec3& e_ip1, const Vec3& c_i, const Vec3& c_ip1,
                              const EstimatorConfig& cfg = {}) {
  ConditionA out;
  out.value = e_i.dot(c_ip1) + e_ip1.dot(c_i);
  const double scale = e_i.norm() * c_ip1.norm() + e_ip1.norm() * c_i.norm() + 1e-12;
  out.consistent = std::abs(out.value) <= cfg.cond_a_tol * scale;
  return out;
}

struct ForceSolve {
  Vec3 force = Vec3::Zero();  // F*
  double rel_residual = 0.0;
  bool well_posed = false;
  Eigen::Vector3d singular_values = Eigen::Vector3d::Zero();
};

/// Least-squares resultant shared by consecutive pieces: F* = A^+ C with A the
/// stacked skew matrices [e^k]x and C = -[c^k]. The pseudoinverse is built from
/// the SVD of A, dropping singular values below svd_rank_tol * sigma_1.
inline ForceSolve solve_stacked_force(std::span<const Vec3> edges, std::span<const Vec3> torques,
                                      const EstimatorConfig& cfg = {}) {
  if (edges.size() != torques.size() || edges.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "need matching edges and torques for at least two pieces");
  }
  const auto rows = static_cast<Eigen::Index>(3 * edges.size());
  Eigen::MatrixXd a(rows, 3);
  Eigen::VectorXd c(rows);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(3 * k);
    a.block<3, 3>(r, 0) = skew(edges[k]);
    c.segment<3>(r) = -torques[k];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Vector3d sigma = svd.singularValues();
  Eigen::Vector3d sigma_pinv = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) {
    if (sigma[k] > cfg.svd_rank_tol * sigma[0] && sigma[k] > 0.0) sigma_pinv[k] = 1.0 / sigma[k];
  }
  ForceSolve out;
  out.singular_values = sigma;
  out.force = svd.matrixV() * sigma_pinv.asDiagonal() * (svd.matrixU().transpose() * c);
  out.rel_residual = (a * out.force - c).norm() / (c.norm() + 1e-15);
  out.well_posed = sigma[0] > 0.0 && sigma[2] >= cfg.svd_rank_tol * sigma[0];
  return out;
}

/// Condition B on the window of pieces i, i+1, i+2.
inline ForceSolve solve_window_force(const Vec3& e_i, const Vec3& e_ip1, const Vec3& e_ip2, const Vec3& c_i,
                                     const Vec3& c_ip1, const Vec3& c_ip2, const EstimatorConfig& cfg = {}) {
  const Vec3 edges[3] = {e_i, e_ip1, e_ip2};
  const Vec3 torques[3] = {c_i, c_ip1, c_ip2};
  return solve_stacked_force(edges, torques, cfg);
}

enum class SectionKind { Undisturbed, Disturbed };

inline const char* to_string(SectionKind kind) { return kind == SectionKind::Undisturbed ? "UD" : "D"; }

struct Section {
  SectionKind kind = SectionKind::Disturbed;
  std::size_t first_piece = 0;
  std::size_t last_piece = 0;        // inclusive
  std::optional<Vec3> resultant;     // F_R, UD sections only
  std::size_t width() const { return last_piece - first_piece + 1; }
};

struct WindowDiagnostics {
  std::size_t first_piece = 0;
  double rel_residual = 0.0;
  bool well_posed = false;
  bool passes = false;
  Vec3 force = Vec3::Zero();
};

struct SectionLabeling {
  std::vector<SectionKind> labels;  // per piece
  std::vector<Section> sections;    // alternate in kind and tile [0, n)
  std::vector<WindowDiagnostics> windows;

  std::size_t piece_count() const { return labels.size(); }
};

namespace detail {

struct Interval {
  std::size_t first;
  std::size_t last;
  std::size_t width() const { return last - first + 1; }
};

// Splits a candidate UD interval wherever condition A fails between adjacent
// pieces. The pair's piece on the longer side is given up to the D section.
inline std::vector<Interval> split_on_condition_a(Interval iv, std::span<const Vec3> edges, std::span<const Vec3> c,
                                                  const EstimatorConfig& cfg) {
  std::vector<Interval> out;
  std::size_t start = iv.first;
  for (std::size_t i = iv.first; i < iv.last; ++i) {
    if (condition_a(edges[i], edges[i + 1], c[i], c[i + 1], cfg).consistent) continue;
    const Interval left{start, i};
    const Interval right{i + 1, iv.last};
    if (left.width() >= right.width()) {
      if (i > start) out.push_back({start, i - 1});
      start = i + 1;
    } else {
      out.push_back(left);
      start = i + 2;
      ++i;
    }
  }
  if (start <= iv.last) out.push_back({start, iv.last});
  return out;
}

inline Vec3 cumulative_resultant(const RodState& rod, std::span<const Vec3> c, std::size_t first, std::size_t last,
                                 const EstimatorConfig& cfg) {
  const std::size_t m = last - first + 2;
  std::vector<Vec3> arm(m);
  std::vector<Vec3> sum(m);
  Vec3 running = Vec3::Zero();
  for (std::size_t k = 0; k < m; ++k) {
    arm[k] = rod.node(first + k);
    sum[k] = running;
    if (k + 1 < m) running += c[first + k];
  }
  Vec3 arm_mean = Vec3::Zero();
  Vec3 sum_mean = Vec3::Zero();
  for (std::size_t k = 0; k < m; ++k) {
    arm_mean += arm[k] / static_cast<double>(m);
    sum_mean += sum[k] / static_cast<double>(m);
  }
  for (std::size_t k = 0; k < m; ++k) {
    arm[k] -= arm_mean;
    sum[k] -= sum_mean;
  }
  return solve_stacked_force(arm, sum, cfg).force;
}

}  // namespace detail

/// Labels every piece UD or D and recovers one resultant F_R per UD section.
///
/// Windows of three pieces that are well posed and pass condition B chain into
/// candidate UD runs. Clamped end pieces are removed, overlapping or touching
/// runs are separated by at least one D piece, condition A splits runs whose
/// neighbours disagree, and runs narrower than two pieces are dropped.
inline SectionLabeling classify_sections(const RodState& rod, const StiffnessTorques& torques,
                                         const EstimatorConfig& cfg = {}) {
  cfg.validate();
  const std::size_t n = rod.piece_count();
  if (n < 4) throw Error(ErrorKind::RodTooShort, "classification needs at least 4 pieces");
  if (!torques.gravity_included) {
    throw Error(ErrorKind::InvalidArgument, "classification expects gravity-augmented stiffness torques");
  }
  if (torques.c.size() != n) throw Error(ErrorKind::InvalidArgument, "torque count does not match piece count");
  const auto edges = compute_edges(rod);
  const auto& c = torques.c;

  SectionLabeling out;
  out.windows.resize(n - 2);
  for (std::size_t w = 0; w + 2 < n; ++w) {
    const auto solve = solve_window_force(edges[w], edges[w + 1], edges[w + 2], c[w], c[w + 1], c[w + 2], cfg);
    auto& diag = out.windows[w];
    diag.first_piece = w;
    diag.rel_residual = solve.rel_residual;
    diag.well_posed = solve.well_posed;
    diag.passes = solve.well_posed && solve.rel_residual <= cfg.cond_b_rel_tol;
    diag.force = solve.force;
  }

  // Runs of consecutive passing windows and the pieces they cover.
  std::vector<detail::Interval> runs;
  for (std::size_t w = 0; w + 2 < n;) {
    if (!out.windows[w].passes) {
      ++w;
      continue;
    }
    std::size_t end = w;
    while (end + 1 + 2 < n && out.windows[end + 1].passes) ++end;
    runs.push_back({w, end + 2});
    w = end + 1;
  }

  if (cfg.seed_clamped_ends) {
    std::vector<detail::Interval> trimmed;
    for (auto iv : runs) {
      if (iv.first == 0) iv.first = 1;
      if (iv.last == n - 1) iv.last = n - 2;
      if (iv.first <= iv.last) trimmed.push_back(iv);
    }
    runs = std::move(trimmed);
  }

  // Consecutive runs that overlap give up the shared pieces; runs that touch
  // give up one piece from the longer run.
  for (std::size_t k = 0; k + 1 < runs.size(); ++k) {
    auto& left = runs[k];
    auto& right = runs[k + 1];
    if (right.first <= left.last) {
      const std::size_t shared_last = left.last;
      left.last = right.first - 1;  // right.first > left.first since runs start at distinct windows
      right.first = shared_last + 1;
    } else if (right.first == left.last + 1) {
      if (left.width() >= right.width()) {
        --left.last;
      } else {
        ++right.first;
      }
    }
  }

  std::vector<detail::Interval> ud;
  for (const auto& iv : runs) {
    if (iv.first > iv.last || iv.last >= n) continue;
    for (const auto& part : detail::split_on_condition_a(iv, edges, c, cfg)) {
      if (part.width() >= 2) ud.push_back(part);
    }
  }
  if (ud.empty()) {
    throw Error(ErrorKind::NoUndisturbedSection,
                "no three-piece window is consistent with a single resultant; check that the rod is in "
                "equilibrium, that stiffness and weight are right, and that undisturbed stretches are not straight");
  }

  out.labels.assign(n, SectionKind::Disturbed);
  for (const auto& iv : ud) {
    for (std::size_t i = iv.first; i <= iv.last; ++i) out.labels[i] = SectionKind::Undisturbed;
  }
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && out.labels[j + 1] == out.labels[i]) ++j;
    out.sections.push_back({out.labels[i], i, j, std::nullopt});
    i = j + 1;
  }

  // F_R: mean over the windows lying fully inside the section (or one solve
  // over the whole section), and the two-piece solve for the narrowest ones.
  for (auto& s : out.sections) {
    if (s.kind != SectionKind::Undisturbed) continue;
    if (cfg.resultant_fit == ResultantFit::CumulativeLeastSquares) {
      s.resultant = detail::cumulative_resultant(rod, c, s.first_piece, s.last_piece, cfg);
      continue;
    }
    if (s.width() == 2 || cfg.resultant_fit == ResultantFit::SectionLeastSquares) {
      const std::span<const Vec3> e(edges.data() + s.first_piece, s.width());
      const std::span<const Vec3> t(c.data() + s.first_piece, s.width());
      s.resultant = solve_stacked_force(e, t, cfg).force;
      continue;
    }
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
    for (std::size_t w = s.first_piece; w + 2 <= s.last_piece; ++w) {
      sum += out.windows[w].force;
      ++count;
    }
    s.resultant = sum / static_cast<double>(count);
  }
  return out;
}

/// Selects how a D section's force is placed.
struct KnownPosition {
  Vec3 point;
};
struct ZeroTorque {};
struct Midpoint {};
using ResolutionMode = std::variant<KnownPosition, ZeroTorque, Midpoint>;

enum class ResolutionKind { Unset, Torque, Position, Midpoint };

inline const char* to_string(ResolutionKind kind) {
  switch (kind) {
    case ResolutionKind::Unset: return "unset";
    case ResolutionKind::Torque: return "torque";
    case ResolutionKind::Position: return "position";
    case ResolutionKind::Midpoint: return "midpoint";
  }
  return "unset";
}

struct DisturbanceEstimate {
  std::size_t section_index = 0;
  std::size_t first_piece = 0;
  std::size_t last_piece = 0;
  bool boundary = false;  // first or last section: a clamp reaction
  Vec3 force = Vec3::Zero();
  Vec3 resultant_before = Vec3::Zero();
  Vec3 resultant_after = Vec3::Zero();  // F_D, the resultant beyond the section
  ResolutionKind resolution = ResolutionKind::Unset;
  Vec3 point = Vec3::Zero();
  std::optional<Vec3> torque;
  double residual = 0.0;         // distance of the zero-torque line to the section (m)
  double torque_residual = 0.0;  // moment component along f dropped by the zero-torque solve (N m)
};

/// f^j = F_R(before) - F_R(after) for every D section. An end section takes the
/// dangling resultant: beyond the rod end nothing acts, and before the rod
/// start the resultant is everything external, which balances the weight n wpp.
inline std::vector<DisturbanceEstimate> estimate_section_forces(const SectionLabeling& labeling, const RodState& rod,
                                                                const EstimatorConfig& cfg = {}) {
  const std::size_t n = rod.piece_count();
  if (labeling.piece_count() != n) throw Error(ErrorKind::InvalidArgument, "labeling does not match rod");
  const Vec3 start_resultant = -static_cast<double>(n) * rod.wpp();
  std::vector<DisturbanceEstimate> out;
  const auto& sections = labeling.sections;
  for (std::size_t s = 0; s < sections.size(); ++s) {
    if (sections[s].kind != SectionKind::Disturbed) continue;
    const bool has_before = s > 0;
    const bool has_after = s + 1 < sections.size();
    if ((has_before && !sections[s - 1].resultant) || (has_after && !sections[s + 1].resultant)) {
      throw Error(ErrorKind::UnboundedSection, "D section " + std::to_string(s) + " lacks a neighbouring resultant");
    }
    DisturbanceEstimate d;
    d.section_index = s;
    d.first_piece = sections[s].first_piece;
    d.last_piece = sections[s].last_piece;
    d.boundary = !has_before || !has_after;
    d.resultant_before = has_before ? *sections[s - 1].resultant : start_resultant;
    d.resultant_after = has_after ? *sections[s + 1].resultant : Vec3::Zero();
    d.force = d.resultant_before - d.resultant_after;
    if (cfg.section_gravity_term && (!d.boundary || cfg.boundary_gravity_term)) {
      d.force += static_cast<double>(sections[s].width()) * rod.wpp();
    }
    out.push_back(d);
  }
  return out;
}

namespace detail {

struct LineToPolyline {
  Vec3 on_polyline;
  Vec3 on_line;
  double distance;
};

// Closest approach between the line origin + t * dir and the polyline.
inline LineToPolyline closest_line_polyline(const Vec3& origin, const Vec3& dir, std::span<const Vec3> polyline,
                                            double parallel_tol) {
  const Vec3 u = dir.normalized();
  LineToPolyline best{polyline.front(), origin, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k + 1 < polyline.size(); ++k) {
    const Vec3& a = polyline[k];
    const Vec3 v = polyline[k + 1] - a;
    double s = 0.0;
    const Vec3 w = a - origin;
    const Vec3 v_perp = v - v.dot(u) * u;  // segment direction seen across the line
    if (v_perp.norm() > parallel_tol * v.norm()) {
      const Vec3 w_perp = w - w.dot(u) * u;
      s = std::clamp(-w_perp.dot(v_perp) / v_perp.squaredNorm(), 0.0, 1.0);
    } else {
      const Vec3 b = polyline[k + 1];
      const double da = (w - w.dot(u) * u).norm();
      const Vec3 wb = b - origin;
      const double db = (wb - wb.dot(u) * u).norm();
      s = da <= db ? 0.0 : 1.0;
    }
    const Vec3 q = a + s * v;
    const Vec3 on_line = origin + (q - origin).dot(u) * u;
    const double dist = (q - on_line).norm();
    if (dist < best.distance) best = {q, on_line, dist};
  }
  return best;
}

}  // namespace detail

/// Places the force of D section `estimate.section_index` using the moment
/// balance of the section about its first node x_l:
///     (x_k - x_l) x F_D + (p - x_l) x f + c_D + tau = 0,
/// with x_k the node after its last piece, F_D the resultant beyond it and c_D
/// the summed gravity-augmented stiffness torques of its pieces.
inline DisturbanceEstimate resolve_disturbance(const SectionLabeling& labeling, const RodState& rod,
                                               const StiffnessTorques& torques, DisturbanceEstimate estimate,
                                               const ResolutionMode& mode, const EstimatorConfig& cfg = {}) {
  if (estimate.section_index >= labeling.sections.size() ||
      labeling.sections[estimate.section_index].kind != SectionKind::Disturbed) {
    throw Error(ErrorKind::InvalidArgument, "estimate does not refer to a D section");
  }
  if (!torques.gravity_included) {
    throw Error(ErrorKind::InvalidArgument, "resolution expects gravity-augmented stiffness torques");
  }
  const auto& section = labeling.sections[estimate.section_index];
  const Vec3& x_l = rod.node(section.first_piece);
  const Vec3& x_k = rod.node(section.last_piece + 1);
  Vec3 c_d = Vec3::Zero();
  for (std::size_t i = section.first_piece; i <= section.last_piece; ++i) c_d += torques.c[i];
  const Vec3 span_moment = (x_k - x_l).cross(estimate.resultant_after);
  const Vec3& f = estimate.force;

  estimate.torque.reset();
  estimate.residual = 0.0;
  estimate.torque_residual = 0.0;

  if (const auto* known = std::get_if<KnownPosition>(&mode)) {
    estimate.resolution = ResolutionKind::Torque;
    estimate.point = known->point;
    estimate.torque = -(span_moment + (known->point - x_l).cross(f) + c_d);
    return estimate;
  }

  if (std::holds_alternative<Midpoint>(mode)) {
    Vec3 sum = Vec3::Zero();
    for (std::size_t i = section.first_piece; i <= section.last_piece; ++i) sum += rod.piece_midpoint(i);
    estimate.resolution = ResolutionKind::Midpoint;
    estimate.point = sum / static_cast<double>(section.width());
    return estimate;
  }

  // Zero torque: (p - x_l) x f = m. Solutions form the line
  // (f x m) / |f|^2 + t f when m is perpendicular to f.
  const double f_norm = f.norm();
  if (f_norm < cfg.zero_force_tol) {
    throw Error(ErrorKind::ZeroForceSection, "section " + std::to_string(estimate.section_index) +
                                                 " carries no net force; its disturbance is a pure torque");
  }
  const Vec3 m = -(span_moment + c_d);
  const Vec3 f_hat = f / f_norm;
  const double axial = m.dot(f_hat);
  if (std::abs(axial) > cfg.zero_torque_axial_tol * (m.norm() + 1e-300)) {
    throw Error(ErrorKind::InconsistentSection, "section " + std::to_string(estimate.section_index) +
                                                    " needs a torque about the force line; zero-torque placement "
                                                    "does not apply");
  }
  const Vec3 m_perp = m - axial * f_hat;
  const Vec3 line_origin = x_l + f.cross(m_perp) / (f_norm * f_norm);
  const std::span<const Vec3> polyline(rod.nodes().data() + section.first_piece, section.width() + 1);
  const auto closest = detail::closest_line_polyline(line_origin, f_hat, polyline, cfg.parallel_tol);
  estimate.resolution = ResolutionKind::Position;
  estimate.point = closest.on_polyline;
  estimate.residual = closest.distance;
  estimate.torque_residual = std::abs(axial);
  return estimate;
}

}  // namespace wireforce

#endif  // WIREFORCE_ESTIMATOR_HPP
