// Scenario files (JSON) and command execution for the command-line front end.
//
// Complex scalars are [re, im] pairs, matrices arrays of rows, measures
// label -> weight objects. Exactly one payload key is allowed:
//   "instrument":             {"kraus": {label: [matrix, ...]}}
//   "realization":            {"state": matrix, "pvm": {label: matrix}, "unitary": matrix}
//   "stochastic_realization": {"channels": [{"weight", "multiplicity",
//                               "q": {label: [[c per n] per k]},
//                               "w": {label: [[matrix per n] per k]}}]}
//   "model":                  {"channels": [{"weight", "multiplicity", "pi": {label: matrix}}],
//                              "densities": [[{label: c} per i] per j],
//                              "state": vector | "rho": matrix}
// The last two read their base measure from "measure".
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qmeas/core.hpp"
#include "qmeas/instrument.hpp"
#include "qmeas/measurement.hpp"
#include "qmeas/realization.hpp"
#include "qmeas/stochrep.hpp"

namespace qmeas {

inline constexpr const char* kVersion = "qmeas 0.1.0";

class ScenarioError : public std::runtime_error {
 public:
  enum class Kind { Parse, Validation, IncompatiblePayload };

  ScenarioError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Tolerances {
  double identity = kIdentityTol;
  double cluster = kClusterTol;
  double probability = kZeroProbability;
};

struct Params {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> shots;
  std::optional<std::uint64_t> steps;
  /// "minimal" or "invariant" for dilate.
  std::optional<std::string> mode;
  /// Pure initial state used when the payload is not a model.
  std::optional<cvec> state;
  /// Ancilla state and pointer columns for von-neumann.
  std::optional<cvec> eta;
  std::optional<cmat> pointers;
};

using Payload = std::variant<KrausInstrument, StatisticalRealization,
                             StochasticRealization, MeasurementModel>;

struct Scenario {
  Eigen::Index dim_s = 0;
  OutcomeSpace outcomes;
  std::optional<FiniteMeasure> measure;
  Payload payload;
  Tolerances tol;
  Params params;
  /// Second scenario for compare.
  std::shared_ptr<const Scenario> reference;
};

/// Throws ScenarioError with the JSON path of the offending field.
Scenario parse_scenario_text(const std::string& text);
Scenario parse_scenario(const std::string& path);

nlohmann::json serialize(const Scenario& s);
std::string serialize_text(const Scenario& s);

/// Bit-exact equality of every stored numeric field.
bool identical(const Scenario& a, const Scenario& b);

std::string payload_kind(const Payload& p);

/// 64-bit FNV-1a digest as 16 hex digits.
std::string fnv1a_digest(std::string_view bytes);

struct Check {
  std::string name;
  bool passed;
  double value;
  double limit;
  std::string detail;
};

struct Report {
  std::string command;
  std::vector<Check> checks;
  nlohmann::json tables = nlohmann::json::object();
  std::string digest;
  std::optional<std::uint64_t> seed;
  /// simulate only: CSV record file contents.
  std::string records;

  bool passed() const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Overrides from the command line; unset fields fall back to the scenario.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> shots;
  std::optional<std::uint64_t> steps;
  std::optional<double> tol;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {
      "validate", "dilate",      "invariants", "extract-qsr",
      "compare",  "von-neumann", "simulate",   "verify"};
  return names;
}

/// Operation errors become failed checks; an unsuitable payload throws
/// ScenarioError(IncompatiblePayload).
Report execute(const Scenario& s, const std::string& command, const RunOptions& options,
               const std::string& digest);

}  // namespace qmeas
