#ifndef WIREFORCE_SESSION_HPP
#define WIREFORCE_SESSION_HPP

// Interactive probe session behind the serve endpoint. Client frames:
//   {"type": "ApplyForce", "piece": 15, "r": 0.5, "force": [fx, fy, fz]}
//   {"type": "ClearForces"}
//   {"type": "SetConfig", "config": {...same fields as a config file...}}
//   {"type": "GetState"}
// Every accepted mutation bumps the revision and yields a StateUpdate; a bad
// frame yields an Error frame and leaves the state untouched.

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>

#include "wireforce/error.hpp"
#include "wireforce/io.hpp"
#include "wireforce/pipeline.hpp"
#include "wireforce/simulator.hpp"

namespace wireforce {

struct StateSnapshot {
  std::uint64_t revision = 0;
  Points nodes;
  io::Json frame;     // the StateUpdate message
  std::string text;   // frame serialized once, shared by every reader
};

struct SessionReply {
  bool changed = false;  // true when the reply is a new StateUpdate to broadcast
  std::string text;
};

inline io::Json error_frame(std::uint64_t revision, std::string_view category, const std::string& message) {
  io::Json j;
  j["type"] = "Error";
  j["revision"] = revision;
  j["category"] = std::string(category);
  j["message"] = message;
  return j;
}

class ServeSession {
 public:
  explicit ServeSession(SimScenario scenario, PipelineOptions options = {})
      : sim_(std::move(scenario)), options_(std::move(options)) {
    options_.estimator.validate();
    publish();
  }

  /// Latest immutable snapshot; safe to hold while the session mutates.
  std::shared_ptr<const StateSnapshot> snapshot() const {
    std::lock_guard lock(mutex_);
    return latest_;
  }

  SessionReply handle(const std::string& text) {
    std::lock_guard lock(mutex_);
    io::Json msg;
    try {
      msg = io::parse_json(text, "message");
      if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
        throw Error(ErrorKind::ParseError, "message needs a string 'type'");
      }
      const auto type = msg["type"].get<std::string>();
      if (type == "ApplyForce") {
        const auto piece = io::get_or<std::size_t>(msg, "piece", 0);
        const double r = io::get_or<double>(msg, "r", 0.5);
        const Vec3 f = io::vec_from(io::require(msg, "force"), "force");
        if (!msg.contains("piece")) throw Error(ErrorKind::ParseError, "missing field 'piece'");
        if (piece >= sim_.scenario().rod.piece_count()) throw Error(ErrorKind::InvalidArgument, "piece out of range");
        if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::InvalidArgument, "r must lie in [0, 1]");
        if (!f.allFinite()) throw Error(ErrorKind::InvalidArgument, "force is not finite");
        sim_.set_force(piece, r, f);
      } else if (type == "ClearForces") {
        sim_.clear_forces();
      } else if (type == "SetConfig") {
        auto merged = io::run_config_json({std::nullopt, options_});
        merged.erase("format_version");
        const auto& patch = io::require(msg, "config");
        if (!patch.is_object()) throw Error(ErrorKind::ParseError, "'config' must be an object");
        merged.merge_patch(patch);
        options_ = io::run_config_from(merged).pipeline;
      } else if (type == "GetState") {
        return {false, latest_->text};
      } else {
        throw Error(ErrorKind::ParseError, "unknown message type '" + type + "'");
      }
    } catch (const Error& e) {
      return {false, io::dump(error_frame(latest_->revision, to_string(e.kind()), e.what()))};
    }
    publish();
    return {true, latest_->text};
  }

  std::uint64_t revision() const {
    std::lock_guard lock(mutex_);
    return latest_->revision;
  }

 private:
  void publish() {
    auto snap = std::make_shared<StateSnapshot>();
    snap->revision = latest_ ? latest_->revision + 1 : 1;
    const auto& result = sim_.result();
    const auto& scenario = sim_.scenario();
    snap->nodes = result.rod.nodes();

    io::Json j;
    j["type"] = "StateUpdate";
    j["revision"] = snap->revision;
    j["nodes"] = io::points_json(snap->nodes);
    const auto truth = io::ground_truth(scenario, result);
    io::Json actual = io::Json::array();
    for (const auto& f : truth.applied_forces) {
      io::Json fj;
      fj["piece"] = f.piece;
      fj["r"] = f.ratio;
      fj["force"] = io::vec_json(f.force);
      fj["point"] = io::vec_json(f.point);
      actual.push_back(fj);
    }
    j["actual_forces"] = actual;
    io::Json clamps = io::Json::array();
    for (const auto& c : truth.clamps) {
      io::Json cj;
      cj["node"] = c.node;
      cj["position"] = io::vec_json(c.position);
      cj["reaction"] = io::vec_json(c.reaction);
      clamps.push_back(cj);
    }
    j["clamp_reactions"] = clamps;

    io::Json estimates = io::Json::array();
    io::Json metrics = io::Json::array();
    io::Json warnings = io::Json::array();
    try {
      const auto report = run_estimation(result.rod, options_, &truth);
      for (const auto& d : report.disturbances) estimates.push_back(io::disturbance_json(d));
      for (const auto& m : report.metrics) metrics.push_back(io::metrics_json(m));
      for (const auto& w : report.warnings) warnings.push_back(w);
      j["estimation_error"] = nullptr;
    } catch (const Error& e) {
      io::Json err;
      err["category"] = std::string(to_string(e.kind()));
      err["message"] = e.what();
      j["estimation_error"] = err;
    }
    j["estimates"] = estimates;
    j["metrics"] = metrics;
    j["warnings"] = warnings;
    j["mode"] = to_string(options_.mode);
    snap->text = io::dump(j);
    snap->frame = std::move(j);
    latest_ = std::move(snap);
  }

  mutable std::mutex mutex_;
  SimulationSession sim_;
  PipelineOptions options_;
  std::shared_ptr<const StateSnapshot> latest_;
};

}  // namespace wireforce

#endif  // WIREFORCE_SESSION_HPP
