#ifndef WIREFORCE_IO_HPP
#define WIREFORCE_IO_HPP

// File formats: shape, scenario, estimator config, ground-truth sidecar and
// estimation report. All JSON in SI units, tagged with format_version. Writing
// is deterministic: fixed key order and every float printed with %.17g.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wireforce/error.hpp"
#include "wireforce/estimator.hpp"
#include "wireforce/pipeline.hpp"
#include "wireforce/rod.hpp"
#include "wireforce/simulator.hpp"
#include "wireforce/smoothing.hpp"

namespace wireforce::io {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

// ---- low level ------------------------------------------------------------

namespace detail {

inline void write_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline void write_string(std::string& out, const std::string& s) { out += Json(s).dump(); }

inline void write_json(std::string& out, const Json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        write_string(out, it.key());
        out += ": ";
        write_json(out, it.value(), indent, depth + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line so point lists remain readable.
      const bool flat = std::all_of(j.begin(), j.end(), [](const Json& v) { return v.is_primitive(); });
      if (flat) {
        out += "[";
        for (std::size_t k = 0; k < j.size(); ++k) {
          if (k) out += ", ";
          write_json(out, j[k], indent, depth + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t k = 0; k < j.size(); ++k) {
        if (k) out += ",\n";
        out += pad;
        write_json(out, j[k], indent, depth + 1);
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case Json::value_t::number_float: write_number(out, j.get<double>()); return;
    default: out += j.dump(); return;
  }
}

}  // namespace detail

/// Serializes with stable key order and 17 significant digits for floats.
inline std::string dump(const Json& j) {
  std::string out;
  detail::write_json(out, j, 2, 0);
  out += "\n";
  return out;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::InvalidArgument, "failed writing " + path);
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, what + ": " + e.what());
  }
}

inline Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Json points_json(const Points& pts) {
  Json arr = Json::array();
  for (const auto& p : pts) arr.push_back(vec_json(p));
  return arr;
}

inline Vec3 vec_from(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::ParseError, what + " must be a 3-element array");
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!j[static_cast<std::size_t>(k)].is_number()) throw Error(ErrorKind::ParseError, what + " must hold numbers");
    v[k] = j[static_cast<std::size_t>(k)].get<double>();
  }
  return v;
}

inline Points points_from(const Json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorKind::ParseError, what + " must be an array of points");
  Points pts;
  pts.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) pts.push_back(vec_from(j[k], what + "[" + std::to_string(k) + "]"));
  return pts;
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::ParseError, std::string("field '") + key + "' has the wrong type");
  }
}

inline const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorKind::ParseError, std::string("missing field '") + key + "'");
  return j.at(key);
}

inline void check_version(const Json& j, const std::string& what) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, what + " must be a JSON object");
  if (!j.contains("format_version")) return;
  if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kFormatVersion) {
    throw Error(ErrorKind::ParseError, what + ": unsupported format_version");
  }
}

inline std::vector<double> doubles_from(const Json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorKind::ParseError, what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(ErrorKind::ParseError, what + " must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline Json doubles_json(const std::vector<double>& v) {
  Json arr = Json::array();
  for (double x : v) arr.push_back(x);
  return arr;
}

// ---- material -------------------------------------------------------------

inline Json material_json(const RodState::Material& m) {
  Json j;
  j["bend_stiffness"] = m.bend_stiffness;
  j["twist_stiffness"] = m.twist_stiffness;
  j["wpp"] = vec_json(m.wpp);
  return j;
}

inline RodState::Material material_from(const Json& j) {
  RodState::Material m;
  m.bend_stiffness = get_or<double>(j, "bend_stiffness", 0.0);
  m.twist_stiffness = get_or<double>(j, "twist_stiffness", 0.0);
  if (j.contains("wpp")) m.wpp = vec_from(j["wpp"], "wpp");
  return m;
}

// ---- shape files ----------------------------------------------------------

struct ShapeFile {
  Points nodes;
  std::vector<double> timestamps;  // optional, one per frame
  std::optional<RodState::Material> material;
  std::vector<double> rest_lengths;
  std::vector<double> twist_angles;
  std::vector<std::size_t> clamp_nodes;

  bool operator==(const ShapeFile& o) const {
    if (nodes.size() != o.nodes.size()) return false;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k] != o.nodes[k]) return false;
    }
    if (material.has_value() != o.material.has_value()) return false;
    if (material && (material->bend_stiffness != o.material->bend_stiffness ||
                     material->twist_stiffness != o.material->twist_stiffness || material->wpp != o.material->wpp)) {
      return false;
    }
    return timestamps == o.timestamps && rest_lengths == o.rest_lengths && twist_angles == o.twist_angles &&
           clamp_nodes == o.clamp_nodes;
  }

  /// Builds a rod, taking the material from the file unless one is given.
  RodState to_rod(const std::optional<RodState::Material>& override_material = std::nullopt) const {
    const auto m = override_material ? override_material : material;
    if (!m) throw Error(ErrorKind::InvalidArgument, "no stiffness or wpp given in shape or config");
    return RodState::make(nodes, *m, rest_lengths, twist_angles);
  }
};

inline Json shape_json(const ShapeFile& s) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["units"] = "SI";
  j["nodes"] = points_json(s.nodes);
  if (!s.timestamps.empty()) j["timestamps"] = doubles_json(s.timestamps);
  if (s.material) j["material"] = material_json(*s.material);
  if (!s.rest_lengths.empty()) j["rest_lengths"] = doubles_json(s.rest_lengths);
  if (!s.twist_angles.empty()) j["twist_angles"] = doubles_json(s.twist_angles);
  if (!s.clamp_nodes.empty()) {
    Json arr = Json::array();
    for (auto c : s.clamp_nodes) arr.push_back(c);
    j["clamp_nodes"] = arr;
  }
  return j;
}

inline ShapeFile shape_from_rod(const RodState& rod, std::vector<std::size_t> clamp_nodes = {}) {
  ShapeFile s;
  s.nodes = rod.nodes();
  s.material = rod.material();
  s.rest_lengths = rod.rest_lengths();
  s.twist_angles = rod.twist_angles();
  s.clamp_nodes = std::move(clamp_nodes);
  return s;
}

inline ShapeFile shape_from_json(const Json& j) {
  check_version(j, "shape");
  ShapeFile s;
  s.nodes = points_from(require(j, "nodes"), "nodes");
  if (j.contains("timestamps")) s.timestamps = doubles_from(j["timestamps"], "timestamps");
  if (j.contains("material")) s.material = material_from(j["material"]);
  if (j.contains("rest_lengths")) s.rest_lengths = doubles_from(j["rest_lengths"], "rest_lengths");
  if (j.contains("twist_angles")) s.twist_angles = doubles_from(j["twist_angles"], "twist_angles");
  if (j.contains("clamp_nodes")) {
    for (const auto& c : j["clamp_nodes"]) {
      if (!c.is_number_unsigned()) throw Error(ErrorKind::ParseError, "clamp_nodes must hold node indices");
      s.clamp_nodes.push_back(c.get<std::size_t>());
    }
  }
  return s;
}

/// Rows of "x,y,z"; blank lines, '#' comments and one non-numeric header are skipped.
inline ShapeFile shape_from_csv(const std::string& text) {
  ShapeFile s;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    double v[3];
    char tail = 0;
    if (std::sscanf(line.c_str(), " %lf , %lf , %lf %c", &v[0], &v[1], &v[2], &tail) == 3) {
      s.nodes.emplace_back(v[0], v[1], v[2]);
      continue;
    }
    if (!header_seen && s.nodes.empty()) {
      header_seen = true;
      continue;
    }
    throw Error(ErrorKind::ParseError, "CSV line " + std::to_string(line_no) + " is not 'x,y,z'");
  }
  if (s.nodes.empty()) throw Error(ErrorKind::ParseError, "CSV holds no points");
  return s;
}

inline ShapeFile load_shape(const std::string& path) {
  const auto text = read_text(path);
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  return csv ? shape_from_csv(text) : shape_from_json(parse_json(text, path));
}

// ---- estimator config -----------------------------------------------------

struct RunConfig {
  std::optional<RodState::Material> material;
  PipelineOptions pipeline;
};

inline Json estimator_config_json(const EstimatorConfig& c) {
  Json j;
  j["cond_a_tol"] = c.cond_a_tol;
  j["cond_b_rel_tol"] = c.cond_b_rel_tol;
  j["svd_rank_tol"] = c.svd_rank_tol;
  j["parallel_tol"] = c.parallel_tol;
  j["seed_clamped_ends"] = c.seed_clamped_ends;
  j["section_gravity_term"] = c.section_gravity_term;
  j["boundary_gravity_term"] = c.boundary_gravity_term;
  j["zero_force_tol"] = c.zero_force_tol;
  j["zero_torque_axial_tol"] = c.zero_torque_axial_tol;
  const char* fit = c.resultant_fit == ResultantFit::WindowMean            ? "window-mean"
                    : c.resultant_fit == ResultantFit::SectionLeastSquares ? "section-least-squares"
                                                                           : "cumulative-least-squares";
  j["resultant_fit"] = fit;
  return j;
}

inline EstimatorConfig estimator_config_from(const Json& j, EstimatorConfig c = {}) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, "estimator config must be an object");
  c.cond_a_tol = get_or(j, "cond_a_tol", c.cond_a_tol);
  c.cond_b_rel_tol = get_or(j, "cond_b_rel_tol", c.cond_b_rel_tol);
  c.svd_rank_tol = get_or(j, "svd_rank_tol", c.svd_rank_tol);
  c.parallel_tol = get_or(j, "parallel_tol", c.parallel_tol);
  c.seed_clamped_ends = get_or(j, "seed_clamped_ends", c.seed_clamped_ends);
  c.section_gravity_term = get_or(j, "section_gravity_term", c.section_gravity_term);
  c.boundary_gravity_term = get_or(j, "boundary_gravity_term", c.boundary_gravity_term);
  c.zero_force_tol = get_or(j, "zero_force_tol", c.zero_force_tol);
  c.zero_torque_axial_tol = get_or(j, "zero_torque_axial_tol", c.zero_torque_axial_tol);
  if (j.contains("resultant_fit")) {
    const auto fit = get_or<std::string>(j, "resultant_fit", "");
    if (fit == "window-mean") {
      c.resultant_fit = ResultantFit::WindowMean;
    } else if (fit == "section-least-squares") {
      c.resultant_fit = ResultantFit::SectionLeastSquares;
    } else if (fit == "cumulative-least-squares") {
      c.resultant_fit = ResultantFit::CumulativeLeastSquares;
    } else {
      throw Error(ErrorKind::ParseError, "unknown resultant_fit '" + fit + "'");
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  return c;
}

inline SmoothingParams smoothing_from(const Json& j) {
  SmoothingParams p;
  if (j.contains("m_p")) p.m_p = get_or<double>(j, "m_p", 0.0);
  p.displacement_fraction = get_or(j, "displacement_fraction", p.displacement_fraction);
  p.max_steps = get_or(j, "max_steps", p.max_steps);
  p.lambda = get_or(j, "lambda", p.lambda);
  p.resample_to = get_or<std::size_t>(j, "resample_to", p.resample_to);
  try {
    p.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  return p;
}

inline Json smoothing_json(const SmoothingParams& p) {
  Json j;
  if (p.m_p) j["m_p"] = *p.m_p;
  j["displacement_fraction"] = p.displacement_fraction;
  j["max_steps"] = p.max_steps;
  j["lambda"] = p.lambda;
  j["resample_to"] = p.resample_to;
  return j;
}

inline RunConfig run_config_from(const Json& j) {
  check_version(j, "config");
  RunConfig c;
  if (j.contains("material")) c.material = material_from(j["material"]);
  if (j.contains("estimator")) c.pipeline.estimator = estimator_config_from(j["estimator"]);
  if (j.contains("mode")) {
    try {
      c.pipeline.mode = parse_resolve_mode(get_or<std::string>(j, "mode", ""));
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, e.what());
    }
  }
  if (j.contains("known_points")) c.pipeline.known_points = points_from(j["known_points"], "known_points");
  if (j.contains("smoothing") && !j["smoothing"].is_null()) c.pipeline.smoothing = smoothing_from(j["smoothing"]);
  return c;
}

inline Json run_config_json(const RunConfig& c) {
  Json j;
  j["format_version"] = kFormatVersion;
  if (c.material) j["material"] = material_json(*c.material);
  j["estimator"] = estimator_config_json(c.pipeline.estimator);
  j["mode"] = to_string(c.pipeline.mode);
  if (!c.pipeline.known_points.empty()) j["known_points"] = points_json(c.pipeline.known_points);
  if (c.pipeline.smoothing) j["smoothing"] = smoothing_json(*c.pipeline.smoothing);
  return j;
}

// ---- scenarios ------------------------------------------------------------

/// Initial rod geometry: explicit nodes or one of the generated shapes.
inline Points scenario_nodes_from(const Json& rod) {
  if (rod.contains("nodes")) return points_from(rod["nodes"], "rod.nodes");
  if (rod.contains("droop")) {
    const auto& d = rod["droop"];
    return droop_shape(get_or<double>(d, "length", 0.0), get_or<double>(d, "chord", 0.0),
                       get_or<std::size_t>(d, "pieces", 0),
                       d.contains("origin") ? vec_from(d["origin"], "droop.origin") : Vec3::Zero(),
                       d.contains("chord_dir") ? vec_from(d["chord_dir"], "droop.chord_dir") : Vec3::UnitX(),
                       d.contains("sag_dir") ? vec_from(d["sag_dir"], "droop.sag_dir") : Vec3(-Vec3::UnitZ()));
  }
  if (rod.contains("straight")) {
    const auto& d = rod["straight"];
    return straight_shape(get_or<double>(d, "length", 0.0), get_or<std::size_t>(d, "pieces", 0),
                          d.contains("origin") ? vec_from(d["origin"], "straight.origin") : Vec3::Zero(),
                          d.contains("direction") ? vec_from(d["direction"], "straight.direction") : Vec3::UnitX());
  }
  throw Error(ErrorKind::ParseError, "rod needs 'nodes', 'droop' or 'straight'");
}

inline SimScenario scenario_from_json(const Json& j) {
  check_version(j, "scenario");
  try {
    const auto& rod = require(j, "rod");
    auto nodes = scenario_nodes_from(rod);
    const auto material = material_from(require(rod, "material"));
    std::vector<double> rest;
    if (rod.contains("rest_lengths")) rest = doubles_from(rod["rest_lengths"], "rest_lengths");
    SimScenario sc;
    sc.rod = RodState::make(nodes, material, rest);
    sc.wpp = j.contains("wpp") ? vec_from(j["wpp"], "wpp") : material.wpp;
    for (const auto& c : require(j, "clamps")) {
      Clamp clamp;
      clamp.node = get_or<std::size_t>(c, "node", 0);
      if (clamp.node >= nodes.size()) throw Error(ErrorKind::ParseError, "clamp node out of range");
      clamp.position = c.contains("position") ? vec_from(c["position"], "clamp.position") : nodes[clamp.node];
      if (c.contains("tangent") && !c["tangent"].is_null()) clamp.tangent = vec_from(c["tangent"], "clamp.tangent");
      sc.clamps.push_back(clamp);
    }
    if (j.contains("applied_forces")) {
      for (const auto& f : j["applied_forces"]) {
        sc.applied_forces.push_back({get_or<std::size_t>(f, "piece", 0), get_or<double>(f, "ratio", 0.5),
                                     vec_from(require(f, "force"), "force")});
      }
    }
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      sc.solver.max_iters = get_or(s, "max_iters", sc.solver.max_iters);
      sc.solver.force_tolerance = get_or(s, "force_tolerance", sc.solver.force_tolerance);
      sc.solver.damping = get_or(s, "damping", sc.solver.damping);
      sc.solver.step_size = get_or(s, "step_size", sc.solver.step_size);
    }
    sc.stretch_stiffness = get_or(j, "stretch_stiffness", 0.0);
    sc.validate();
    return sc;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) throw;
    throw Error(ErrorKind::ParseError, std::string("invalid scenario: ") + e.what());
  }
}

inline Json scenario_json(const SimScenario& sc) {
  Json j;
  j["format_version"] = kFormatVersion;
  Json rod;
  rod["nodes"] = points_json(sc.rod.nodes());
  rod["material"] = material_json(sc.rod.material());
  rod["rest_lengths"] = doubles_json(sc.rod.rest_lengths());
  j["rod"] = rod;
  j["wpp"] = vec_json(sc.wpp);
  Json clamps = Json::array();
  for (const auto& c : sc.clamps) {
    Json cj;
    cj["node"] = c.node;
    cj["position"] = vec_json(c.position);
    if (c.tangent) cj["tangent"] = vec_json(*c.tangent);
    clamps.push_back(cj);
  }
  j["clamps"] = clamps;
  Json forces = Json::array();
  for (const auto& f : sc.applied_forces) {
    Json fj;
    fj["piece"] = f.piece;
    fj["ratio"] = f.ratio;
    fj["force"] = vec_json(f.force);
    forces.push_back(fj);
  }
  j["applied_forces"] = forces;
  Json solver;
  solver["max_iters"] = sc.solver.max_iters;
  solver["force_tolerance"] = sc.solver.force_tolerance;
  solver["damping"] = sc.solver.damping;
  solver["step_size"] = sc.solver.step_size;
  j["solver"] = solver;
  j["stretch_stiffness"] = sc.stretch_stiffness;
  return j;
}

// ---- ground truth ---------------------------------------------------------

inline GroundTruth ground_truth(const SimScenario& sc, const EquilibriumResult& result) {
  GroundTruth t;
  for (const auto& f : sc.applied_forces) {
    t.applied_forces.push_back({f.piece, f.ratio, f.force, sc.application_point(f, result.rod)});
  }
  const auto reactions = clamp_reactions(result, sc);
  for (std::size_t k = 0; k < sc.clamps.size(); ++k) {
    t.clamps.push_back({sc.clamps[k].node, sc.clamps[k].position, reactions[k]});
  }
  return t;
}

inline Json truth_json(const GroundTruth& t, const EquilibriumResult& result) {
  Json j;
  j["format_version"] = kFormatVersion;
  Json forces = Json::array();
  for (const auto& f : t.applied_forces) {
    Json fj;
    fj["piece"] = f.piece;
    fj["ratio"] = f.ratio;
    fj["force"] = vec_json(f.force);
    fj["point"] = vec_json(f.point);
    forces.push_back(fj);
  }
  j["applied_forces"] = forces;
  Json clamps = Json::array();
  for (const auto& c : t.clamps) {
    Json cj;
    cj["node"] = c.node;
    cj["position"] = vec_json(c.position);
    cj["reaction"] = vec_json(c.reaction);
    clamps.push_back(cj);
  }
  j["clamps"] = clamps;
  j["converged"] = result.converged;
  j["iterations"] = result.iterations;
  j["residual_force_inf_norm"] = result.residual_force_inf_norm;
  return j;
}

inline GroundTruth truth_from_json(const Json& j) {
  check_version(j, "truth");
  GroundTruth t;
  if (j.contains("applied_forces")) {
    for (const auto& f : j["applied_forces"]) {
      t.applied_forces.push_back({get_or<std::size_t>(f, "piece", 0), get_or<double>(f, "ratio", 0.5),
                                  vec_from(require(f, "force"), "force"), vec_from(require(f, "point"), "point")});
    }
  }
  if (j.contains("clamps")) {
    for (const auto& c : j["clamps"]) {
      t.clamps.push_back({get_or<std::size_t>(c, "node", 0), vec_from(require(c, "position"), "position"),
                          vec_from(require(c, "reaction"), "reaction")});
    }
  }
  return t;
}

// ---- report ---------------------------------------------------------------

inline Json metrics_json(const MetricsRecord& m) {
  Json j;
  j["label"] = m.label;
  j["truth_index"] = m.truth_index;
  j["estimate_index"] = m.estimate_index;
  j["rel_l2"] = m.entry.rel_l2;
  j["angle_defined"] = m.entry.angle_defined;
  j["angle_deg"] = m.entry.angle_deg;
  j["angle_rad"] = m.entry.angle_rad;
  j["pos_diff"] = m.entry.pos_diff;
  j["row"] = format_metrics_row(m.label, m.entry);
  return j;
}

inline Json disturbance_json(const DisturbanceEstimate& d) {
  Json j;
  j["section_index"] = d.section_index;
  j["first_piece"] = d.first_piece;
  j["last_piece"] = d.last_piece;
  j["boundary"] = d.boundary;
  j["force"] = vec_json(d.force);
  j["resolution"] = to_string(d.resolution);
  j["point"] = vec_json(d.point);
  j["torque"] = d.torque ? vec_json(*d.torque) : Json(nullptr);
  j["residual"] = d.residual;
  j["torque_residual"] = d.torque_residual;
  return j;
}

inline Json report_json(const EstimationReport& r) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["units"] = "SI";
  j["mode"] = to_string(r.mode);
  j["piece_count"] = r.rod.piece_count();
  j["nodes"] = points_json(r.rod.nodes());
  if (r.smoothing) {
    Json s;
    s["steps"] = r.smoothing->steps;
    s["m_p"] = r.smoothing->m_p;
    s["objective"] = doubles_json(r.smoothing->objective);
    j["smoothing"] = s;
  }
  Json labels = Json::array();
  for (auto k : r.labeling.labels) labels.push_back(to_string(k));
  j["labels"] = labels;
  Json sections = Json::array();
  for (const auto& s : r.labeling.sections) {
    Json sj;
    sj["kind"] = to_string(s.kind);
    sj["first_piece"] = s.first_piece;
    sj["last_piece"] = s.last_piece;
    sj["resultant"] = s.resultant ? vec_json(*s.resultant) : Json(nullptr);
    sections.push_back(sj);
  }
  j["sections"] = sections;
  Json windows = Json::array();
  for (const auto& w : r.labeling.windows) {
    Json wj;
    wj["first_piece"] = w.first_piece;
    wj["rel_residual"] = w.rel_residual;
    wj["well_posed"] = w.well_posed;
    wj["passes"] = w.passes;
    windows.push_back(wj);
  }
  j["windows"] = windows;
  Json dist = Json::array();
  for (const auto& d : r.disturbances) dist.push_back(disturbance_json(d));
  j["disturbances"] = dist;
  j["balance_residual"] = vec_json(r.balance_residual);
  Json warnings = Json::array();
  for (const auto& w : r.warnings) warnings.push_back(w);
  j["warnings"] = warnings;
  if (!r.metrics.empty()) {
    Json m = Json::array();
    for (const auto& rec : r.metrics) m.push_back(metrics_json(rec));
    j["metrics"] = m;
  }
  return j;
}

}  // namespace wireforce::io

#endif  // WIREFORCE_IO_HPP
