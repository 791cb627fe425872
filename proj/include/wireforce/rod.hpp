#ifndef WIREFORCE_ROD_HPP
#define WIREFORCE_ROD_HPP

// Discretized elastic rod: geometry, DER bending/twist torques and energy,
// and the gravity augmentation of the per-piece stiffness torques.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "wireforce/error.hpp"

namespace wireforce {

using Vec3 = Eigen::Vector3d;
using Points = std::vector<Vec3>;

/// Edges shorter than this are treated as duplicate points.
inline constexpr double kDegenerateEdgeEps = 1e-9;
/// Relative size of |a||b| + a.b below which two edges count as a 180 degree kink.
inline constexpr double kAntiParallelEps = 1e-12;

/// Immutable snapshot of a discretized rod. Node i and node i+1 bound piece i.
class RodState {
 public:
  struct Material {
    double bend_stiffness = 0.0;   // EI, N m^2
    double twist_stiffness = 0.0;  // GJ, N m^2
    Vec3 wpp = Vec3::Zero();       // weight per piece, N
  };

  RodState() = default;

  /// Validates every invariant; rest lengths default to the current edge lengths.
  static RodState make(Points nodes, Material material, std::vector<double> rest_lengths = {},
                       std::vector<double> twist_angles = {}) {
    RodState rod;
    rod.nodes_ = std::move(nodes);
    rod.material_ = std::move(material);
    if (rod.nodes_.size() < 5) {
      throw Error(ErrorKind::RodTooShort, "a rod needs at least 4 pieces, got " +
                                              std::to_string(rod.nodes_.empty() ? 0 : rod.nodes_.size() - 1));
    }
    for (const auto& x : rod.nodes_) {
      if (!x.allFinite()) throw Error(ErrorKind::InvalidArgument, "node position is not finite");
    }
    const std::size_t n = rod.nodes_.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if ((rod.nodes_[i + 1] - rod.nodes_[i]).norm() < kDegenerateEdgeEps) {
        throw Error(ErrorKind::DegenerateEdge, "edge " + std::to_string(i) + " has zero length");
      }
    }
    if (rest_lengths.empty()) {
      rest_lengths.resize(n);
      for (std::size_t i = 0; i < n; ++i) rest_lengths[i] = (rod.nodes_[i + 1] - rod.nodes_[i]).norm();
    }
    if (rest_lengths.size() != n) throw Error(ErrorKind::InvalidArgument, "rest_lengths must have one entry per piece");
    for (double l : rest_lengths) {
      if (!(l > 0.0) || !std::isfinite(l)) throw Error(ErrorKind::InvalidArgument, "rest lengths must be positive");
    }
    if (twist_angles.empty()) twist_angles.assign(n, 0.0);
    if (twist_angles.size() != n) throw Error(ErrorKind::InvalidArgument, "twist_angles must have one entry per piece");
    const auto& m = rod.material_;
    if (!(m.bend_stiffness >= 0.0) || !(m.twist_stiffness >= 0.0) || !m.wpp.allFinite()) {
      throw Error(ErrorKind::InvalidArgument, "stiffness must be non-negative and wpp finite");
    }
    rod.rest_lengths_ = std::move(rest_lengths);
    rod.twist_angles_ = std::move(twist_angles);
    return rod;
  }

  /// Same material and rest state, new node positions.
  RodState with_nodes(Points nodes) const {
    return make(std::move(nodes), material_, rest_lengths_, twist_angles_);
  }

  std::size_t piece_count() const { return nodes_.size() - 1; }
  const Points& nodes() const { return nodes_; }
  const Vec3& node(std::size_t i) const { return nodes_[i]; }
  const Material& material() const { return material_; }
  double bend_stiffness() const { return material_.bend_stiffness; }
  double twist_stiffness() const { return material_.twist_stiffness; }
  const Vec3& wpp() const { return material_.wpp; }
  const std::vector<double>& rest_lengths() const { return rest_lengths_; }
  const std::vector<double>& twist_angles() const { return twist_angles_; }

  /// Voronoi rest length of interior vertex j (1 <= j < n).
  double voronoi_length(std::size_t j) const { return 0.5 * (rest_lengths_[j - 1] + rest_lengths_[j]); }

  Vec3 piece_midpoint(std::size_t i) const { return 0.5 * (nodes_[i] + nodes_[i + 1]); }

  double length() const {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) total += (nodes_[i + 1] - nodes_[i]).norm();
    return total;
  }

 private:
  Points nodes_;
  Material material_;
  std::vector<double> rest_lengths_;
  std::vector<double> twist_angles_;
};

/// c[i]: torque exerted on piece i by its neighbours (N m).
struct StiffnessTorques {
  std::vector<Vec3> c;
  bool gravity_included = false;
};

inline Eigen::Matrix3d skew(const Vec3& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline std::vector<Vec3> compute_edges(std::span<const Vec3> nodes) {
  std::vector<Vec3> edges;
  if (nodes.size() < 2) return edges;
  edges.reserve(nodes.size() - 1);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    Vec3 e = nodes[i + 1] - nodes[i];
    if (e.norm() < kDegenerateEdgeEps) {
      throw Error(ErrorKind::DegenerateEdge, "edge " + std::to_string(i) + " is shorter than 1e-9 m");
    }
    edges.push_back(e);
  }
  return edges;
}

inline std::vector<Vec3> compute_edges(const RodState& rod) { return compute_edges(std::span<const Vec3>(rod.nodes())); }

/// Discrete curvature binormal 2 (a x b) / (|a||b| + a.b) at the node shared by edges a and b.
inline Vec3 curvature_binormal(const Vec3& e_prev, const Vec3& e_next) {
  const double len = e_prev.norm() * e_next.norm();
  const double denom = len + e_prev.dot(e_next);
  if (!(denom > kAntiParallelEps * len)) {
    throw Error(ErrorKind::AntiParallelEdges, "consecutive edges fold back onto each other");
  }
  return 2.0 * e_prev.cross(e_next) / denom;
}

namespace detail {

// Bending energy of vertex between edges a and b and its gradient with respect
// to both edge vectors. k = EI / voronoi length.
struct VertexBending {
  Vec3 kappa_b;
  double energy;
  Vec3 grad_prev;
  Vec3 grad_next;
};

inline VertexBending vertex_bending(const Vec3& a, const Vec3& b, double k) {
  const double la = a.norm();
  const double lb = b.norm();
  const double denom = la * lb + a.dot(b);
  if (!(denom > kAntiParallelEps * la * lb)) {
    throw Error(ErrorKind::AntiParallelEdges, "consecutive edges fold back onto each other");
  }
  VertexBending out;
  out.kappa_b = 2.0 * a.cross(b) / denom;
  const double k2 = out.kappa_b.squaredNorm();
  out.energy = 0.5 * k * k2;
  out.grad_prev = k * (2.0 * b.cross(out.kappa_b) - k2 * (lb / la * a + b)) / denom;
  out.grad_next = k * (2.0 * out.kappa_b.cross(a) - k2 * (la / lb * b + a)) / denom;
  return out;
}

}  // namespace detail

/// Bending moment carried by interior vertex j as a vector along its binormal:
/// dE_j/dphi = (EI / l_j) |kb| (1 + |kb|^2 / 4). Entries 0 and n are zero.
inline std::vector<Vec3> vertex_bending_moments(const RodState& rod) {
  const auto edges = compute_edges(rod);
  const std::size_t n = edges.size();
  std::vector<Vec3> moments(n + 1, Vec3::Zero());
  for (std::size_t j = 1; j < n; ++j) {
    const Vec3 kb = curvature_binormal(edges[j - 1], edges[j]);
    moments[j] = rod.bend_stiffness() / rod.voronoi_length(j) * (1.0 + 0.25 * kb.squaredNorm()) * kb;
  }
  return moments;
}

/// Net bending and twisting torque on every piece from its two boundary vertices.
/// Equals minus the derivative of elastic_energy with respect to a rigid rotation
/// of that piece's edge.
inline StiffnessTorques internal_stiffness_torques(const RodState& rod) {
  const auto edges = compute_edges(rod);
  const std::size_t n = edges.size();
  const auto moments = vertex_bending_moments(rod);
  const auto& theta = rod.twist_angles();

  // Twisting moment magnitude at each interior vertex.
  std::vector<double> twist(n + 1, 0.0);
  for (std::size_t j = 1; j < n; ++j) {
    twist[j] = rod.twist_stiffness() * (theta[j] - theta[j - 1]) / rod.voronoi_length(j);
  }

  StiffnessTorques out;
  out.c.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.c[i] = moments[i + 1] - moments[i] + (twist[i + 1] - twist[i]) * edges[i].normalized();
  }
  return out;
}

/// Adds ((n - i - 0.5) e^i) x wpp to every c^i: the moment of the weight carried
/// by piece i and everything beyond it.
inline StiffnessTorques augment_gravity(StiffnessTorques torques, const RodState& rod) {
  if (torques.gravity_included) {
    throw Error(ErrorKind::DoubleAugmentation, "stiffness torques already include gravity");
  }
  const auto edges = compute_edges(rod);
  const std::size_t n = edges.size();
  if (torques.c.size() != n) throw Error(ErrorKind::InvalidArgument, "torque count does not match piece count");
  for (std::size_t i = 0; i < n; ++i) {
    const double lever = static_cast<double>(n - i) - 0.5;
    torques.c[i] += (lever * edges[i]).cross(rod.wpp());
  }
  torques.gravity_included = true;
  return torques;
}

inline double bending_energy(const RodState& rod) {
  const auto edges = compute_edges(rod);
  double energy = 0.0;
  for (std::size_t j = 1; j < edges.size(); ++j) {
    const Vec3 kb = curvature_binormal(edges[j - 1], edges[j]);
    energy += 0.5 * rod.bend_stiffness() / rod.voronoi_length(j) * kb.squaredNorm();
  }
  return energy;
}

inline double twist_energy(const RodState& rod) {
  const auto& theta = rod.twist_angles();
  double energy = 0.0;
  for (std::size_t j = 1; j < theta.size(); ++j) {
    const double d = theta[j] - theta[j - 1];
    energy += 0.5 * rod.twist_stiffness() / rod.voronoi_length(j) * d * d;
  }
  return energy;
}

/// Sum over interior vertices of (EI / 2l)|kb|^2 + (GJ / 2l) dtheta^2, in joules.
inline double elastic_energy(const RodState& rod) { return bending_energy(rod) + twist_energy(rod); }

}  // namespace wireforce

#endif  // WIREFORCE_ROD_HPP
