// wireforce: estimate, simulate and serve.
//
// Exit codes: 0 success, 1 usage or invalid argument, 2 unparseable input,
// 3 an estimator assumption does not hold, 4 the simulator did not converge,
// 5 the serve port could not be bound. Failures also print one JSON line
// {"error": <category>, "message": ...} on stderr.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "serve_server.hpp"
#include "wireforce/io.hpp"
#include "wireforce/pipeline.hpp"
#include "wireforce/session.hpp"
#include "wireforce/simulator.hpp"

namespace {

using namespace wireforce;

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kParse = 2,
  kAssumption = 3,
  kNotConverged = 4,
  kPortInUse = 5,
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError: return kParse;
    case ErrorKind::NotConverged: return kNotConverged;
    case ErrorKind::InvalidArgument: return kUsage;
    default: return kAssumption;
  }
}

int fail(std::string_view category, const std::string& message, int code) {
  io::Json j;
  j["error"] = std::string(category);
  j["message"] = message;
  std::cerr << j.dump() << "\n";
  return code;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("wireforce");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("WIREFORCE_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(env));
}

void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
  } else {
    io::write_text(path, text);
  }
}

std::string default_sidecar(const std::string& shape_path) {
  std::filesystem::path p(shape_path);
  return (p.parent_path() / (p.stem().string() + ".truth.json")).string();
}

int cmd_estimate(const std::string& shape_path, const std::string& config_path, const std::optional<std::string>& mode,
                 const std::string& truth_path, const std::string& out) {
  const auto shape = io::load_shape(shape_path);
  io::RunConfig config;
  if (!config_path.empty()) config = io::run_config_from(io::parse_json(io::read_text(config_path), config_path));
  if (mode) config.pipeline.mode = parse_resolve_mode(*mode);
  const auto rod = shape.to_rod(config.material);
  std::optional<GroundTruth> truth;
  if (!truth_path.empty()) truth = io::truth_from_json(io::parse_json(io::read_text(truth_path), truth_path));
  spdlog::info("estimating {} pieces in {} mode", rod.piece_count(), to_string(config.pipeline.mode));
  const auto report = run_estimation(rod, config.pipeline, truth ? &*truth : nullptr);
  for (const auto& w : report.warnings) spdlog::warn("{}", w);
  for (const auto& m : report.metrics) spdlog::info("{}", format_metrics_row(m.label, m.entry));
  write_output(out, io::dump(io::report_json(report)));
  return kOk;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out, std::string sidecar) {
  const auto scenario = io::scenario_from_json(io::parse_json(io::read_text(scenario_path), scenario_path));
  const auto result = relax_to_equilibrium(scenario);
  spdlog::info("converged after {} iterations, residual {:.3g} N", result.iterations, result.residual_force_inf_norm);
  std::vector<std::size_t> clamp_nodes;
  for (const auto& c : scenario.clamps) clamp_nodes.push_back(c.node);
  write_output(out, io::dump(io::shape_json(io::shape_from_rod(result.rod, clamp_nodes))));
  if (sidecar.empty() && out != "-") sidecar = default_sidecar(out);
  if (!sidecar.empty()) io::write_text(sidecar, io::dump(io::truth_json(io::ground_truth(scenario, result), result)));
  return kOk;
}

int cmd_serve(const std::string& scenario_path, const std::string& config_path, const std::string& host,
              unsigned short port, const std::string& static_dir, int heartbeat_ms) {
  const auto scenario = io::scenario_from_json(io::parse_json(io::read_text(scenario_path), scenario_path));
  io::RunConfig config;
  if (!config_path.empty()) config = io::run_config_from(io::parse_json(io::read_text(config_path), config_path));
  auto session = std::make_shared<ServeSession>(scenario, config.pipeline);

  serve::asio::io_context ioc{1};
  serve::ServerOptions options;
  options.host = host;
  options.port = port;
  options.static_dir = static_dir;
  options.heartbeat = std::chrono::milliseconds(heartbeat_ms);
  options.log = [](const std::string& line) { spdlog::info("{}", line); };
  std::unique_ptr<serve::Server> server;
  try {
    server = std::make_unique<serve::Server>(ioc, session, options);
  } catch (const boost::system::system_error& e) {
    return fail("PortInUse", "cannot listen on " + host + ":" + std::to_string(port) + ": " + e.what(), kPortInUse);
  }
  server->start();
  serve::asio::signal_set signals(ioc, SIGINT, SIGTERM);
  signals.async_wait([&](const boost::system::error_code&, int) {
    server->stop();
    ioc.stop();
  });
  std::cout << "listening on http://" << host << ":" << server->port() << " (WebSocket /ws)" << std::endl;
  ioc.run();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Shape-based external force estimation for elastic rods"};
  app.require_subcommand(1);

  std::string shape_path, config_path, truth_path, out = "-";
  std::optional<std::string> mode;
  auto* estimate = app.add_subcommand("estimate", "Estimate external forces from an observed rod shape");
  estimate->add_option("shape", shape_path, "Shape file (.json or .csv)")->required();
  estimate->add_option("--config", config_path, "Config file with material, thresholds and mode");
  estimate->add_option("--mode", mode, "Resolution mode for interior sections")
      ->check(CLI::IsMember({"known-pos", "zero-torque", "midpoint"}));
  estimate->add_option("--truth", truth_path, "Ground-truth sidecar; adds comparison metrics to the report");
  estimate->add_option("-o,--output", out, "Report path ('-' for stdout)");

  std::string scenario_path, sidecar;
  auto* simulate = app.add_subcommand("simulate", "Relax a scenario to equilibrium and write the shape");
  simulate->add_option("scenario", scenario_path, "Scenario file")->required();
  simulate->add_option("-o,--output", out, "Shape path ('-' for stdout)");
  simulate->add_option("--truth", sidecar, "Sidecar path (default: <shape>.truth.json next to the shape)");

  std::string host = "127.0.0.1", static_dir;
  unsigned short port = 8080;
  int heartbeat_ms = 1000;
  auto* serve_cmd = app.add_subcommand("serve", "Run the interactive probe session");
  serve_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
  serve_cmd->add_option("--port", port, "TCP port (0 picks a free one)");
  serve_cmd->add_option("--host", host, "Listen address");
  serve_cmd->add_option("--config", config_path, "Estimator config file");
  serve_cmd->add_option("--static-dir", static_dir, "Directory with the viewer's built assets");
  serve_cmd->add_option("--heartbeat-ms", heartbeat_ms, "Idle state push interval (0 disables)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*estimate) return cmd_estimate(shape_path, config_path, mode, truth_path, out);
    if (*simulate) return cmd_simulate(scenario_path, out, sidecar);
    if (*serve_cmd) return cmd_serve(scenario_path, config_path, host, port, static_dir, heartbeat_ms);
  } catch (const NotConvergedError& e) {
    return fail(to_string(e.kind()), e.what(), kNotConverged);
  } catch (const Error& e) {
    std::string message = e.what();
    return fail(to_string(e.kind()), message, exit_code_for(e.kind()));
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), kUsage);
  }
  return kUsage;
}
