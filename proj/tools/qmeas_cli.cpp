// qmeas <command> <scenario.json> [--seed N] [--shots N] [--steps N] [--tol X]
//       [--output PATH] [--format json|csv]
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 parse or validation error.
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qmeas/scenario.hpp"

namespace {

int write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write " << path << '\n';
    return 2;
  }
  out << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-dimensional quantum measurement toolkit"};
  std::string command;
  std::string scenario_path;
  qmeas::RunOptions options;
  std::string output;
  std::string format = "json";

  app.add_option("command", command, "Command to run")
      ->required()
      ->check(CLI::IsMember(qmeas::commands()));
  app.add_option("scenario", scenario_path, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--seed", options.seed, "RNG seed for simulate");
  app.add_option("--shots", options.shots, "Number of simulated shots");
  app.add_option("--steps", options.steps, "Steps per simulated trajectory");
  app.add_option("--tol", options.tol, "Identity-check tolerance")
      ->check(CLI::PositiveNumber);
  app.add_option("--output", output,
                 "Report path; for simulate, the CSV record path (report on stdout)");
  app.add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::ifstream in(scenario_path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  qmeas::Report report;
  try {
    const qmeas::Scenario scenario = qmeas::parse_scenario_text(text);
    report = qmeas::execute(scenario, command, options, qmeas::fnv1a_digest(text));
  } catch (const qmeas::ScenarioError& e) {
    static const char* kinds[] = {"ParseError", "ValidationError", "IncompatiblePayload"};
    std::cerr << kinds[static_cast<int>(e.kind())] << ": " << e.what() << '\n';
    return 2;
  }

  const std::string rendered =
      format == "csv" ? report.to_csv() : report.to_json().dump(2) + "\n";
  if (command == "simulate") {
    if (!output.empty() && write_text(output, report.records) != 0) return 2;
    std::cout << rendered;
  } else if (!output.empty()) {
    if (write_text(output, rendered) != 0) return 2;
  } else {
    std::cout << rendered;
  }
  return report.passed() ? 0 : 1;
}
