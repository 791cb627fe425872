#ifndef WIREFORCE_SIMULATOR_HPP
#define WIREFORCE_SIMULATOR_HPP

// Quasi-static equilibrium oracle. Minimizes elastic + stretching + gravity
// potential minus the work of applied point forces, with clamped nodes removed
// from the unknowns, using a damped Newton iteration with backtracking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "wireforce/error.hpp"
#include "wireforce/rod.hpp"

namespace wireforce {

struct SolverParams {
  int max_iters = 50000;
  double force_tolerance = 1e-6;  // N, per-node infinity norm
  double damping = 1e-10;         // Levenberg shift floor, relative to the mean Hessian diagonal
  double step_size = 1.0;         // first trial step of the line search

  void validate() const {
    if (max_iters <= 0 || !(force_tolerance > 0.0) || !(damping > 0.0) || !(step_size > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "solver parameters must all be positive");
    }
  }
};

/// Fixes a node's position and, optionally, the direction of the edge leaving it
/// (which pins the neighbouring node one rest length away).
struct Clamp {
  std::size_t node = 0;
  Vec3 position = Vec3::Zero();
  std::optional<Vec3> tangent;
};

/// Point force at p = x_i + ratio * e^i on piece i, lumped onto nodes i and i+1
/// with weights (1 - ratio, ratio).
struct AppliedForce {
  std::size_t piece = 0;
  double ratio = 0.5;
  Vec3 force = Vec3::Zero();
};

struct SimScenario {
  RodState rod;  // initial guess; rest lengths and stiffness come from here
  std::vector<Clamp> clamps;
  std::vector<AppliedForce> applied_forces;
  Vec3 wpp = Vec3::Zero();
  SolverParams solver;
  double stretch_stiffness = 0.0;  // EA in N; values below 1e3 EI / l^2 are raised to 1e4 EI / l^2

  void validate() const {
    const std::size_t n = rod.piece_count();
    if (clamps.size() < 2) throw Error(ErrorKind::InvalidArgument, "a scenario needs at least two clamps");
    for (const auto& c : clamps) {
      if (c.node > n) throw Error(ErrorKind::InvalidArgument, "clamp node out of range");
      if (!c.position.allFinite()) throw Error(ErrorKind::InvalidArgument, "clamp position is not finite");
      if (c.tangent && !(c.tangent->norm() > 0.0)) throw Error(ErrorKind::InvalidArgument, "clamp tangent is zero");
    }
    for (const auto& f : applied_forces) {
      if (f.piece >= n) throw Error(ErrorKind::InvalidArgument, "applied force piece out of range");
      if (!(f.ratio >= 0.0 && f.ratio <= 1.0)) throw Error(ErrorKind::InvalidArgument, "application ratio outside [0, 1]");
      if (!f.force.allFinite()) throw Error(ErrorKind::InvalidArgument, "applied force is not finite");
    }
    if (!wpp.allFinite()) throw Error(ErrorKind::InvalidArgument, "wpp is not finite");
    if (!(rod.bend_stiffness() > 0.0)) throw Error(ErrorKind::InvalidArgument, "bend stiffness must be positive");
    solver.validate();
  }

  Vec3 application_point(const AppliedForce& f, const RodState& state) const {
    return state.node(f.piece) + f.ratio * (state.node(f.piece + 1) - state.node(f.piece));
  }
};

struct EquilibriumResult {
  RodState rod;
  double residual_force_inf_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  std::vector<double> energy_history;  // total potential after every accepted iterate
};

class NotConvergedError : public Error {
 public:
  explicit NotConvergedError(EquilibriumResult result)
      : Error(ErrorKind::NotConverged, "residual " + std::to_string(result.residual_force_inf_norm) + " N after " +
                                           std::to_string(result.iterations) + " iterations"),
        result_(std::move(result)) {}

  const EquilibriumResult& result() const { return result_; }

 private:
  EquilibriumResult result_;
};

namespace detail {

/// Total potential of a scenario as a function of all node coordinates.
class EquilibriumProblem {
 public:
  explicit EquilibriumProblem(const SimScenario& scenario) : scenario_(scenario) {
    const RodState& rod = scenario.rod;
    n_ = rod.piece_count();
    rest_ = rod.rest_lengths();
    double mean_rest = 0.0;
    for (double l : rest_) mean_rest += l;
    mean_rest /= static_cast<double>(n_);
    mean_rest_ = mean_rest;
    const double ei = rod.bend_stiffness();
    stretch_ = scenario.stretch_stiffness;
    if (stretch_ < 1e3 * ei / (mean_rest * mean_rest)) stretch_ = 1e4 * ei / (mean_rest * mean_rest);

    bend_k_.assign(n_ + 1, 0.0);
    for (std::size_t j = 1; j < n_; ++j) bend_k_[j] = ei / rod.voronoi_length(j);

    external_.assign(n_ + 1, Vec3::Zero());
    for (std::size_t i = 0; i < n_; ++i) {
      external_[i] += 0.5 * scenario.wpp;
      external_[i + 1] += 0.5 * scenario.wpp;
    }
    for (const auto& f : scenario.applied_forces) {
      external_[f.piece] += (1.0 - f.ratio) * f.force;
      external_[f.piece + 1] += f.ratio * f.force;
    }

    fixed_.assign(n_ + 1, false);
    fixed_position_.assign(n_ + 1, Vec3::Zero());
    for (const auto& c : scenario.clamps) {
      fixed_[c.node] = true;
      fixed_position_[c.node] = c.position;
      if (c.tangent) {
        const Vec3 t = c.tangent->normalized();
        if (c.node < n_) {
          fixed_[c.node + 1] = true;
          fixed_position_[c.node + 1] = c.position + rest_[c.node] * t;
        } else {
          fixed_[c.node - 1] = true;
          fixed_position_[c.node - 1] = c.position - rest_[c.node - 1] * t;
        }
      }
    }
    for (std::size_t k = 0; k <= n_; ++k) {
      if (!fixed_[k]) free_nodes_.push_back(k);
    }
  }

  std::size_t piece_count() const { return n_; }
  double mean_rest_length() const { return mean_rest_; }
  const std::vector<std::size_t>& free_nodes() const { return free_nodes_; }
  const std::vector<bool>& fixed() const { return fixed_; }

  Points apply_clamps(Points nodes) const {
    for (std::size_t k = 0; k <= n_; ++k) {
      if (fixed_[k]) nodes[k] = fixed_position_[k];
    }
    return nodes;
  }

  double energy(const Points& x) const {
    double e = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double s = (x[i + 1] - x[i]).norm() - rest_[i];
      e += 0.5 * stretch_ / rest_[i] * s * s;
    }
    for (std::size_t j = 1; j < n_; ++j) {
      e += vertex_bending(x[j] - x[j - 1], x[j + 1] - x[j], bend_k_[j]).energy;
    }
    for (std::size_t k = 0; k <= n_; ++k) e -= external_[k].dot(x[k]);
    return e;
  }

  /// dV/dx for every node, including clamped ones.
  std::vector<Vec3> gradient(const Points& x) const {
    std::vector<Vec3> edge_grad(n_, Vec3::Zero());
    std::vector<Vec3> edges(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      edges[i] = x[i + 1] - x[i];
      const double len = edges[i].norm();
      edge_grad[i] += stretch_ / rest_[i] * (len - rest_[i]) / len * edges[i];
    }
    for (std::size_t j = 1; j < n_; ++j) {
      const auto vb = vertex_bending(edges[j - 1], edges[j], bend_k_[j]);
      edge_grad[j - 1] += vb.grad_prev;
      edge_grad[j] += vb.grad_next;
    }
    std::vector<Vec3> g(n_ + 1, Vec3::Zero());
    for (std::size_t i = 0; i < n_; ++i) {
      g[i] -= edge_grad[i];
      g[i + 1] += edge_grad[i];
    }
    for (std::size_t k = 0; k <= n_; ++k) g[k] -= external_[k];
    return g;
  }

  double residual_inf_norm(const std::vector<Vec3>& g) const {
    double r = 0.0;
    for (std::size_t k : free_nodes_) r = std::max(r, g[k].cwiseAbs().maxCoeff());
    return r;
  }

  Eigen::VectorXd free_vector(const std::vector<Vec3>& g) const {
    Eigen::VectorXd v(3 * free_nodes_.size());
    for (std::size_t a = 0; a < free_nodes_.size(); ++a) v.segment<3>(3 * a) = g[free_nodes_[a]];
    return v;
  }

  Points step(const Points& x, const Eigen::VectorXd& d, double alpha) const {
    Points out = x;
    for (std::size_t a = 0; a < free_nodes_.size(); ++a) out[free_nodes_[a]] += alpha * d.segment<3>(3 * a);
    return out;
  }

  /// Minimal-norm move of the free nodes that brings every edge back to the
  /// length predicted by the linearized step (a second-order correction), so
  /// that rotations are not penalised by the stretch they induce.
  Points correct_step(const Points& base, const Eigen::VectorXd& d, double alpha) const {
    Points x = step(base, d, alpha);
    std::vector<double> target(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const Vec3 e = base[i + 1] - base[i];
      Vec3 de = Vec3::Zero();
      if (column_of(i + 1) >= 0) de += alpha * d.segment<3>(column_of(i + 1));
      if (column_of(i) >= 0) de -= alpha * d.segment<3>(column_of(i));
      target[i] = e.norm() + e.normalized().dot(de);
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!fixed_[i] || !fixed_[i + 1]) rows.push_back(i);
    }
    if (rows.empty()) return x;
    std::vector<Eigen::Index> column(n_ + 1, -1);
    for (std::size_t a = 0; a < free_nodes_.size(); ++a) column[free_nodes_[a]] = static_cast<Eigen::Index>(3 * a);
    const Eigen::Index m = static_cast<Eigen::Index>(3 * free_nodes_.size());
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), m);
      Eigen::VectorXd violation(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t i = rows[r];
        const Vec3 e = x[i + 1] - x[i];
        const double len = e.norm();
        const Vec3 u = e / len;
        const auto row = static_cast<Eigen::Index>(r);
        violation[row] = len - target[i];
        if (column[i + 1] >= 0) jac.block<1, 3>(row, column[i + 1]) = u.transpose();
        if (column[i] >= 0) jac.block<1, 3>(row, column[i]) = -u.transpose();
      }
      const Eigen::MatrixXd jjt = jac * jac.transpose();
      const Eigen::VectorXd lambda = jjt.ldlt().solve(violation);
      const Eigen::VectorXd delta = -jac.transpose() * lambda;
      if (!delta.allFinite()) return x;
      for (std::size_t a = 0; a < free_nodes_.size(); ++a) x[free_nodes_[a]] += delta.segment<3>(3 * a);
    }
    return x;
  }

  Eigen::Index column_of(std::size_t node) const {
    if (fixed_[node]) return -1;
    const auto it = std::lower_bound(free_nodes_.begin(), free_nodes_.end(), node);
    return static_cast<Eigen::Index>(3 * (it - free_nodes_.begin()));
  }

  /// Central differences of the analytic gradient over the free coordinates.
  Eigen::MatrixXd hessian(const Points& x) const {
    const Eigen::Index m = static_cast<Eigen::Index>(3 * free_nodes_.size());
    Eigen::MatrixXd h(m, m);
    const double step = 1e-6 * mean_rest_;
    Points probe = x;
    for (std::size_t a = 0; a < free_nodes_.size(); ++a) {
      for (int c = 0; c < 3; ++c) {
        const std::size_t k = free_nodes_[a];
        probe[k][c] = x[k][c] + step;
        const Eigen::VectorXd gp = free_vector(gradient(probe));
        probe[k][c] = x[k][c] - step;
        const Eigen::VectorXd gm = free_vector(gradient(probe));
        probe[k][c] = x[k][c];
        h.col(static_cast<Eigen::Index>(3 * a + c)) = (gp - gm) / (2.0 * step);
      }
    }
    return 0.5 * (h + h.transpose());
  }

 private:
  const SimScenario& scenario_;
  std::size_t n_ = 0;
  std::vector<double> rest_;
  double mean_rest_ = 0.0;
  double stretch_ = 0.0;
  std::vector<double> bend_k_;
  std::vector<Vec3> external_;
  std::vector<bool> fixed_;
  Points fixed_position_;
  std::vector<std::size_t> free_nodes_;
};

/// Energy changes smaller than this are indistinguishable from rounding.
inline double energy_roundoff(double energy, double scale) {
  return 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(energy) + scale);
}

}  // namespace detail

/// Total potential: elastic + stretching + gravity - work of applied forces.
inline double total_potential_energy(const SimScenario& scenario, const RodState& state) {
  return detail::EquilibriumProblem(scenario).energy(state.nodes());
}

/// Relaxes from the scenario's rod (or warm_start, when given). Throws
/// NotConvergedError, which carries the best iterate, after solver.max_iters.
inline EquilibriumResult relax_to_equilibrium(const SimScenario& scenario, const Points* warm_start = nullptr) {
  scenario.validate();
  detail::EquilibriumProblem problem(scenario);
  const auto& params = scenario.solver;

  Points x = problem.apply_clamps(warm_start ? *warm_start : scenario.rod.nodes());
  if (x.size() != scenario.rod.nodes().size()) throw Error(ErrorKind::InvalidArgument, "warm start has wrong size");

  double energy = problem.energy(x);
  auto grad = problem.gradient(x);
  double residual = problem.residual_inf_norm(grad);
  // Scale used to decide when energy differences are pure rounding noise.
  double energy_scale = std::abs(energy);
  for (std::size_t k = 0; k < x.size(); ++k) energy_scale += std::abs(grad[k].dot(x[k]));

  EquilibriumResult result;
  result.energy_history.push_back(energy);
  double mu = 0.0;
  int iter = 0;
  double best_residual = residual;
  int last_progress = 0;
  const std::size_t m = 3 * problem.free_nodes().size();

  while (residual > params.force_tolerance && iter < params.max_iters && m > 0) {
    ++iter;
    const Eigen::VectorXd g = problem.free_vector(grad);
    const Eigen::MatrixXd h = problem.hessian(x);
    const double mu_floor = params.damping * h.diagonal().cwiseAbs().mean();

    Eigen::VectorXd d;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd shifted = h;
      shifted.diagonal().array() += mu;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(shifted);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
        d = -ldlt.solve(g);
        if (d.allFinite() && d.dot(g) < 0.0) break;
      }
      d.resize(0);
      mu = std::max(10.0 * mu, mu_floor);
    }
    if (d.size() == 0) d = -g / std::max(h.diagonal().cwiseAbs().maxCoeff(), 1e-300);

    // Backtracking on the potential; once the predicted decrease is below
    // rounding, a step is accepted only if it shrinks the residual.
    const double slope = g.dot(d);
    const double curvature = d.dot(h * d);
    double alpha = params.step_size;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      Points trial = problem.correct_step(x, d, alpha);
      bool valid = true;
      double e_trial = 0.0;
      try {
        e_trial = problem.energy(trial);
      } catch (const Error&) {
        valid = false;
      }
      if (valid && std::isfinite(e_trial)) {
        const double tol = detail::energy_roundoff(energy, energy_scale);
        if (e_trial <= energy + 1e-4 * alpha * slope) {
          accepted = true;
        } else if (e_trial <= energy + tol && -alpha * slope <= tol) {
          const auto g_trial = problem.gradient(trial);
          accepted = problem.residual_inf_norm(g_trial) < residual;
        }
        if (accepted) {
          // Agreement between the actual and the quadratic-model decrease
          // steers the Levenberg shift.
          const double predicted = -(alpha * slope + 0.5 * alpha * alpha * curvature);
          const double ratio = predicted > 0.0 ? (energy - e_trial) / predicted : 1.0;
          if (alpha < params.step_size || ratio < 0.25) {
            mu = std::max(4.0 * mu, mu_floor);
          } else if (ratio > 0.75) {
            mu /= 3.0;
          }
          x = std::move(trial);
          energy = e_trial;
          break;
        }
      }
      alpha *= 0.5;
    }

    if (!accepted) {
      mu = std::max(10.0 * mu, mu_floor);
      if (mu > 1e30) break;
      continue;
    }
    if (mu < mu_floor) mu = 0.0;

    grad = problem.gradient(x);
    residual = problem.residual_inf_norm(grad);
    result.energy_history.push_back(energy);
    // Stop once the residual has stalled at the rounding floor.
    if (residual < 0.5 * best_residual) {
      best_residual = residual;
      last_progress = iter;
    } else if (iter - last_progress > 200) {
      break;
    }
  }

  auto material = scenario.rod.material();
  material.wpp = scenario.wpp;
  result.rod = RodState::make(x, material, scenario.rod.rest_lengths(), scenario.rod.twist_angles());
  result.residual_force_inf_norm = residual;
  result.iterations = iter;
  result.converged = residual <= params.force_tolerance;
  if (!result.converged) throw NotConvergedError(std::move(result));
  return result;
}

/// Reaction force carried by each clamp (summed over the nodes it pins).
inline std::vector<Vec3> clamp_reactions(const EquilibriumResult& result, const SimScenario& scenario) {
  detail::EquilibriumProblem problem(scenario);
  const auto grad = problem.gradient(result.rod.nodes());
  const std::size_t n = result.rod.piece_count();
  std::vector<bool> counted(n + 1, false);
  std::vector<Vec3> reactions;
  reactions.reserve(scenario.clamps.size());
  for (const auto& c : scenario.clamps) {
    Vec3 r = Vec3::Zero();
    auto take = [&](std::size_t k) {
      if (!counted[k]) {
        r += grad[k];
        counted[k] = true;
      }
    };
    take(c.node);
    if (c.tangent) take(c.node < n ? c.node + 1 : c.node - 1);
    reactions.push_back(r);
  }
  return reactions;
}

/// Adds delta_force to the force at (piece, ratio), creating it if needed, and
/// re-relaxes warm-started from the previous shape. Returns the updated pair.
inline std::pair<SimScenario, EquilibriumResult> perturb_and_resettle(const SimScenario& scenario,
                                                                      const EquilibriumResult& previous,
                                                                      std::size_t piece, double ratio,
                                                                      const Vec3& delta_force) {
  SimScenario next = scenario;
  auto it = std::find_if(next.applied_forces.begin(), next.applied_forces.end(),
                         [&](const AppliedForce& f) { return f.piece == piece && f.ratio == ratio; });
  if (it != next.applied_forces.end()) {
    it->force += delta_force;
  } else {
    next.applied_forces.push_back({piece, ratio, delta_force});
  }
  auto result = relax_to_equilibrium(next, &previous.rod.nodes());
  return {std::move(next), std::move(result)};
}

/// Moment about x_i of the weight of every node beyond i, using actual node
/// positions. Kept for comparison with the per-piece lever-arm formula used by
/// augment_gravity.
inline Vec3 downstream_gravity_moment(const RodState& rod, std::size_t i) {
  const std::size_t n = rod.piece_count();
  Vec3 moment = Vec3::Zero();
  for (std::size_t k = i + 1; k <= n; ++k) {
    const double share = (k == n) ? 0.5 : 1.0;
    moment += (rod.node(k) - rod.node(i)).cross(share * rod.wpp());
  }
  return moment;
}

/// Planar rod of the given arc length whose ends are chord apart along
/// chord_dir, both end tangents along chord_dir, sagging towards sag_dir.
/// Tangent angle follows -A sin(2 pi s / L) with J0(A) = chord / length.
inline Points droop_shape(double length, double chord, std::size_t pieces, const Vec3& origin = Vec3::Zero(),
                          const Vec3& chord_dir = Vec3::UnitX(), const Vec3& sag_dir = -Vec3::UnitZ()) {
  if (!(length > 0.0) || !(chord > 0.0) || chord >= length || pieces < 4) {
    throw Error(ErrorKind::InvalidArgument, "droop shape needs 0 < chord < length and at least 4 pieces");
  }
  const Vec3 u = chord_dir.normalized();
  const Vec3 w = (sag_dir - sag_dir.dot(u) * u).normalized();
  // Node positions from midpoint-rule integration of the unit tangent.
  auto integrate = [&](double amp) {
    Points pts(pieces + 1, origin);
    const double ds = length / static_cast<double>(pieces);
    for (std::size_t i = 0; i < pieces; ++i) {
      const double s = (static_cast<double>(i) + 0.5) * ds;
      const double psi = amp * std::sin(2.0 * std::numbers::pi * s / length);
      pts[i + 1] = pts[i] + ds * (std::cos(psi) * u + std::sin(psi) * w);
    }
    return pts;
  };
  double lo = 0.0;
  double hi = 2.404;  // first zero of J0
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double span = (integrate(mid).back() - origin).dot(u);
    (span > chord ? lo : hi) = mid;
  }
  Points pts = integrate(0.5 * (lo + hi));
  // Remove the small residual so the far end lands exactly on the chord.
  const Vec3 target = origin + chord * u;
  const Vec3 miss = target - pts.back();
  for (std::size_t i = 0; i <= pieces; ++i) pts[i] += static_cast<double>(i) / static_cast<double>(pieces) * miss;
  return pts;
}

inline Points straight_shape(double length, std::size_t pieces, const Vec3& origin = Vec3::Zero(),
                             const Vec3& direction = Vec3::UnitX()) {
  Points pts(pieces + 1);
  const Vec3 u = direction.normalized();
  for (std::size_t i = 0; i <= pieces; ++i) {
    pts[i] = origin + length * static_cast<double>(i) / static_cast<double>(pieces) * u;
  }
  return pts;
}

/// Single-owner mutable simulation: a scenario plus its latest equilibrium.
class SimulationSession {
 public:
  explicit SimulationSession(SimScenario scenario)
      : scenario_(std::move(scenario)), result_(relax_to_equilibrium(scenario_)) {}

  const SimScenario& scenario() const { return scenario_; }
  const EquilibriumResult& result() const { return result_; }

  const EquilibriumResult& perturb_and_resettle(std::size_t piece, double ratio, const Vec3& delta_force) {
    auto [next, res] = wireforce::perturb_and_resettle(scenario_, result_, piece, ratio, delta_force);
    scenario_ = std::move(next);
    result_ = std::move(res);
    return result_;
  }

  /// Replaces (rather than accumulates) the force anchored on a piece.
  const EquilibriumResult& set_force(std::size_t piece, double ratio, const Vec3& force) {
    SimScenario next = scenario_;
    std::erase_if(next.applied_forces, [&](const AppliedForce& f) { return f.piece == piece; });
    if (force.norm() > 0.0) next.applied_forces.push_back({piece, ratio, force});
    return resettle(std::move(next));
  }

  /// Relaxes from the scenario's initial shape: a warm start from a heavily
  /// loaded shape can settle on a different (inverted) equilibrium branch.
  const EquilibriumResult& clear_forces() {
    SimScenario next = scenario_;
    next.applied_forces.clear();
    auto res = relax_to_equilibrium(next);
    scenario_ = std::move(next);
    result_ = std::move(res);
    return result_;
  }

 private:
  const EquilibriumResult& resettle(SimScenario next) {
    auto res = relax_to_equilibrium(next, &result_.rod.nodes());
    scenario_ = std::move(next);
    result_ = std::move(res);
    return result_;
  }

  SimScenario scenario_;
  EquilibriumResult result_;
};

}  // namespace wireforce

#endif  // WIREFORCE_SIMULATOR_HPP
