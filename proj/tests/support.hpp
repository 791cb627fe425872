#ifndef WIREFORCE_TESTS_SUPPORT_HPP
#define WIREFORCE_TESTS_SUPPORT_HPP

// Hand-rolled generators and oracle scenarios shared by the unit, property
// and acceptance suites.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "wireforce/estimator.hpp"
#include "wireforce/pipeline.hpp"
#include "wireforce/rod.hpp"
#include "wireforce/simulator.hpp"

namespace wireforce::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(engine_); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  Vec3 unit_vector() {
    Vec3 v(normal(), normal(), normal());
    while (v.norm() < 1e-6) v = Vec3(normal(), normal(), normal());
    return v.normalized();
  }
  Vec3 gaussian_vector(double sigma) { return Vec3(normal(sigma), normal(sigma), normal(sigma)); }

 private:
  std::mt19937_64 engine_;
};

inline constexpr double kRodLength = 0.5;
inline constexpr double kClampSpan = 0.3;
inline constexpr std::size_t kPieces = 30;
inline constexpr double kBendStiffness = 1e-3;
inline const Vec3 kWpp(0.0, 0.0, -0.0033);

/// Two clamped ends holding a drooping rod, both tangents along the chord.
inline SimScenario droop_scenario(double bend_stiffness = kBendStiffness, double chord = kClampSpan,
                                  std::size_t pieces = kPieces, const Vec3& chord_dir = Vec3::UnitX(),
                                  const Vec3& wpp_total = kWpp * static_cast<double>(kPieces)) {
  const auto pts = droop_shape(kRodLength, chord, pieces, Vec3::Zero(), chord_dir);
  const Vec3 wpp = wpp_total / static_cast<double>(pieces);
  RodState::Material mat{bend_stiffness, bend_stiffness / 1.3, wpp};
  SimScenario sc;
  sc.rod = RodState::make(pts, mat);
  sc.wpp = wpp;
  sc.clamps = {{0, pts.front(), chord_dir}, {pieces, pts.back(), chord_dir}};
  sc.solver.force_tolerance = 1e-9;
  return sc;
}

/// The eight cube-diagonal unit directions.
inline std::vector<Vec3> diagonal_directions() {
  std::vector<Vec3> out;
  for (int d = 0; d < 8; ++d) out.push_back(Vec3((d & 1) ? 1 : -1, (d & 2) ? 1 : -1, (d & 4) ? 1 : -1).normalized());
  return out;
}

/// Net external (non-gravity) force on every node: clamp reactions on the
/// pinned nodes plus the lumped applied forces.
inline std::vector<Vec3> nodal_external_forces(const SimScenario& sc, const EquilibriumResult& r) {
  const std::size_t n = r.rod.piece_count();
  detail::EquilibriumProblem problem(sc);
  const auto grad = problem.gradient(r.rod.nodes());
  std::vector<Vec3> ext(n + 1, Vec3::Zero());
  std::vector<bool> pinned(n + 1, false);
  for (const auto& c : sc.clamps) {
    pinned[c.node] = true;
    if (c.tangent) pinned[c.node < n ? c.node + 1 : c.node - 1] = true;
  }
  for (std::size_t k = 0; k <= n; ++k) {
    if (pinned[k]) ext[k] += grad[k];
  }
  for (const auto& f : sc.applied_forces) {
    ext[f.piece] += (1.0 - f.ratio) * f.force;
    ext[f.piece + 1] += f.ratio * f.force;
  }
  return ext;
}

/// True resultant F^i carried through piece i: the sum of external forces on
/// nodes i+1..n.
inline std::vector<Vec3> true_resultants(const SimScenario& sc, const EquilibriumResult& r) {
  const auto ext = nodal_external_forces(sc, r);
  const std::size_t n = r.rod.piece_count();
  std::vector<Vec3> out(n);
  Vec3 acc = Vec3::Zero();
  for (std::size_t i = n; i-- > 0;) {
    acc += ext[i + 1];
    out[i] = acc;
  }
  return out;
}

/// Largest resultant change inside the window starting at piece w.
inline double window_jump(const std::vector<Vec3>& resultants, std::size_t w) {
  const auto& f = resultants;
  return std::max({(f[w] - f[w + 1]).norm(), (f[w + 1] - f[w + 2]).norm(), (f[w] - f[w + 2]).norm()});
}

/// How much of the disturbance signal survives outside range(A), relative to
/// edge length times jump. Near zero the window looks undisturbed no matter how
/// large the force is.
inline double window_observability(const std::vector<Vec3>& edges, const std::vector<Vec3>& resultants,
                                   std::size_t w) {
  Eigen::MatrixXd a(9, 3);
  Eigen::VectorXd j(9);
  for (int k = 0; k < 3; ++k) {
    a.block<3, 3>(3 * k, 0) = skew(edges[w + static_cast<std::size_t>(k)]);
    j.segment<3>(3 * k) = edges[w + static_cast<std::size_t>(k)].cross(resultants[w + static_cast<std::size_t>(k)]);
  }
  const Eigen::VectorXd residual = j - a * a.completeOrthogonalDecomposition().solve(j);
  return residual.norm() / (edges[w].norm() * window_jump(resultants, w));
}

/// Random droop equilibrium with one or two point forces at random ratios.
inline SimScenario random_force_scenario(Rng& rng) {
  const double chord = rng.uniform(0.25, 0.4);
  const double ei = rng.uniform(5e-4, 2e-3);
  const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Vec3 dir(std::cos(yaw), std::sin(yaw), 0.0);
  auto sc = droop_scenario(ei, chord, kPieces, dir);
  const bool two = rng.uniform() < 0.5;
  const std::size_t first = 3 + static_cast<std::size_t>(rng.uniform() * (two ? 10.0 : 24.0));
  std::vector<std::size_t> pieces{first};
  if (two) pieces.push_back(first + 5 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(25 - first - 5)));
  for (auto p : pieces) {
    const Vec3 d = rng.unit_vector();
    sc.applied_forces.push_back({p, rng.uniform(), rng.uniform(0.1, 2.0) * d});
  }
  return sc;
}

/// Random polyline with no fold-backs, random rest lengths, twist and stiffness.
inline RodState random_rod(Rng& rng, std::size_t pieces) {
  Points pts{Vec3::Zero()};
  Vec3 dir = rng.unit_vector();
  std::vector<double> rest(pieces);
  std::vector<double> twist(pieces);
  for (std::size_t i = 0; i < pieces; ++i) {
    // Turn by at most ~100 degrees so consecutive edges never fold back.
    const Vec3 axis = dir.cross(rng.unit_vector()).normalized();
    dir = Eigen::AngleAxisd(rng.uniform(0.0, 1.75), axis) * dir;
    const double len = rng.uniform(0.005, 0.03);
    pts.push_back(pts.back() + len * dir);
    rest[i] = len * rng.uniform(0.8, 1.2);
    twist[i] = rng.uniform(-1.0, 1.0);
  }
  const double ei = rng.uniform(1e-4, 1e-1);
  RodState::Material mat{ei, ei * rng.uniform(0.3, 2.0), rng.gaussian_vector(0.01)};
  return RodState::make(std::move(pts), mat, rest, twist);
}

/// Elastic energy after rotating edge i (and its material frame) by the
/// rotation vector omega, with every other edge vector unchanged.
inline double energy_after_piece_rotation(const RodState& rod, std::size_t i, const Vec3& omega) {
  auto edges = compute_edges(rod);
  const Vec3 axis_dir = edges[i].normalized();
  const double angle = omega.norm();
  if (angle > 0.0) edges[i] = Eigen::AngleAxisd(angle, omega / angle) * edges[i];
  Points pts{rod.node(0)};
  for (const auto& e : edges) pts.push_back(pts.back() + e);
  auto twist = rod.twist_angles();
  twist[i] += omega.dot(axis_dir);
  return elastic_energy(RodState::make(std::move(pts), rod.material(), rod.rest_lengths(), twist));
}

/// -dE/d(omega) for every piece by central differences.
inline std::vector<Vec3> finite_difference_torques(const RodState& rod, double step = 1e-6) {
  std::vector<Vec3> out(rod.piece_count());
  for (std::size_t i = 0; i < rod.piece_count(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const Vec3 d = step * Vec3::Unit(k);
      out[i][k] = -(energy_after_piece_rotation(rod, i, d) - energy_after_piece_rotation(rod, i, -d)) / (2.0 * step);
    }
  }
  return out;
}

/// Three non-coplanar edges and torques from a common resultant plus noise.
struct RandomWindow {
  Vec3 e[3];
  Vec3 c[3];
  Vec3 force;
};

inline RandomWindow random_window(Rng& rng, double noise) {
  RandomWindow w;
  w.force = rng.uniform(0.01, 5.0) * rng.unit_vector();
  Vec3 dir = rng.unit_vector();
  for (auto& e : w.e) {
    dir = Eigen::AngleAxisd(rng.uniform(0.2, 1.2), dir.cross(rng.unit_vector()).normalized()) * dir;
    e = rng.uniform(0.005, 0.05) * dir;
  }
  for (int k = 0; k < 3; ++k) w.c[k] = -w.e[k].cross(w.force) + rng.gaussian_vector(noise * w.e[k].norm() * w.force.norm());
  return w;
}

}  // namespace wireforce::testing

#endif  // WIREFORCE_TESTS_SUPPORT_HPP
