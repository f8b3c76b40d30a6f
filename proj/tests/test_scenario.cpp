#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "qmeas/scenario.hpp"
#include "support.hpp"

namespace qmeas {
namespace {

using testing::Rng;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string data(const std::string& name) { return std::string(QMEAS_TEST_DATA) + "/" + name; }

Scenario scenario_of(Payload payload, Eigen::Index dim_s, const OutcomeSpace& space,
                     std::optional<FiniteMeasure> measure = std::nullopt) {
  return Scenario{dim_s, space, std::move(measure), std::move(payload), {}, {}, nullptr};
}

ScenarioError::Kind parse_error_kind(const std::string& text, std::string* message = nullptr) {
  try {
    parse_scenario_text(text);
  } catch (const ScenarioError& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "expected a scenario error";
  return ScenarioError::Kind::IncompatiblePayload;
}

TEST(ParseScenario, AmplitudeDampingFile) {
  const Scenario s = parse_scenario(data("fix_ad.json"));
  ASSERT_EQ(payload_kind(s.payload), "instrument");
  const auto& t = std::get<KrausInstrument>(s.payload);
  EXPECT_EQ(t.space().size(), 2u);
  EXPECT_LT(choi_distance(t, testing::fix_ad()), 1e-15);
  EXPECT_EQ(*s.params.seed, 11u);
}

TEST(ParseScenario, MismatchedMatrixNamesField) {
  std::string msg;
  const auto kind = parse_error_kind(R"({"dim_s": 2, "outcomes": ["a"],
      "instrument": {"kraus": {"a": [[[1, 0, 0], [0, 1]]]}}})",
                                     &msg);
  EXPECT_EQ(kind, ScenarioError::Kind::Parse);
  EXPECT_NE(msg.find("instrument.kraus.a"), std::string::npos) << msg;
}

TEST(ParseScenario, NonUnitTraceIsValidationError) {
  std::string msg;
  const auto kind = parse_error_kind(R"({"dim_s": 1, "outcomes": ["a"],
      "realization": {"state": [[2]], "pvm": {"a": [[1]]}, "unitary": [[1]]}})",
                                     &msg);
  EXPECT_EQ(kind, ScenarioError::Kind::Validation);
  EXPECT_NE(msg.find("trace"), std::string::npos) << msg;
}

TEST(ParseScenario, StructuralErrors) {
  EXPECT_EQ(parse_error_kind("{not json"), ScenarioError::Kind::Parse);
  EXPECT_EQ(parse_error_kind(R"({"dim_s": 1, "outcomes": ["a"]})"), ScenarioError::Kind::Parse);
  EXPECT_EQ(parse_error_kind(R"({"dim_s": 1, "outcomes": ["a"], "bogus": 1,
      "instrument": {"kraus": {"a": [[[1]]]}}})"),
            ScenarioError::Kind::Parse);
  EXPECT_EQ(parse_error_kind(R"({"dim_s": 1, "outcomes": ["a", "a"],
      "instrument": {"kraus": {"a": [[[1]]]}}})"),
            ScenarioError::Kind::Validation);
  EXPECT_EQ(parse_error_kind(R"({"dim_s": 1, "outcomes": ["a", "b"],
      "instrument": {"kraus": {"a": [[[1]]], "b": [[[1]]]}}})"),
            ScenarioError::Kind::Validation);
}

TEST(RoundTrip, EveryPayloadKindIsBitExact) {
  Rng rng(1);
  std::vector<Scenario> cases;
  const auto t = testing::random_instrument(rng, 2, 3, 2);
  Scenario with_params = scenario_of(t, 2, t.space());
  with_params.params.seed = 5;
  with_params.params.shots = 1234;
  with_params.params.state = testing::random_unit_vector(rng, 2);
  with_params.tol.identity = 3.5e-10;
  cases.push_back(with_params);

  const auto g = testing::random_realization(rng);
  cases.push_back(scenario_of(g, g.dim_s(), g.space()));

  const auto sr = from_realization(testing::random_realization(rng));
  cases.push_back(scenario_of(sr, sr.dim_s(), sr.space(), sr.base()));

  const auto qsr = testing::qsr_of(testing::random_instrument(rng, 2, 2, 1));
  cases.push_back(scenario_of(MeasurementModel(qsr, testing::random_unit_vector(rng, 2)), 2,
                              qsr.space(), qsr.base()));
  cases.push_back(scenario_of(
      MeasurementModel(qsr, DensityOperator(testing::random_density(rng, 2))), 2, qsr.space(),
      qsr.base()));

  for (const auto& s : cases) {
    const std::string text = serialize_text(s);
    const Scenario back = parse_scenario_text(text);
    EXPECT_TRUE(identical(s, back)) << payload_kind(s.payload);
    EXPECT_EQ(serialize_text(back), text);
  }
}

TEST(RoundTrip, InstrumentEntriesSurviveExactly) {
  Rng rng(2);
  const auto t = testing::random_instrument(rng, 3, 2, 2);
  const Scenario back = parse_scenario_text(serialize_text(scenario_of(t, 3, t.space())));
  const auto& u = std::get<KrausInstrument>(back.payload);
  for (std::size_t a = 0; a < t.space().size(); ++a) {
    ASSERT_EQ(u[a].size(), t[a].size());
    for (std::size_t m = 0; m < t[a].size(); ++m) EXPECT_TRUE(u[a][m] == t[a][m]);
  }
}

TEST(Execute, ValidateAmplitudeDamping) {
  const Scenario s = parse_scenario(data("fix_ad.json"));
  const Report r = execute(s, "validate", {}, "d");
  EXPECT_TRUE(r.passed());
  for (const auto& c : r.checks) {
    if (c.name == "completeness") EXPECT_LE(c.value, 1e-12);
  }
}

TEST(Execute, SimulateProjectiveMeasurement) {
  const Scenario s = parse_scenario(data("fix_z.json"));
  RunOptions o;
  o.seed = 7;
  o.shots = 100000;
  o.steps = 1;
  const Report r = execute(s, "simulate", o, "d");
  EXPECT_TRUE(r.passed()) << r.to_json().dump(2);
  EXPECT_EQ(r.records.rfind("step,outcome,channel,prob,weight,state_re0,state_re1", 0), 0u);
}

TEST(Execute, ReportsAreDeterministic) {
  const std::string text = read_file(data("fix_ad.json"));
  const Scenario s = parse_scenario_text(text);
  RunOptions o;
  o.shots = 2000;
  const std::string digest = fnv1a_digest(text);
  for (const auto& command : {"simulate", "verify", "extract-qsr", "invariants"}) {
    const Report a = execute(s, command, o, digest);
    const Report b = execute(s, command, o, digest);
    EXPECT_EQ(a.to_json().dump(), b.to_json().dump()) << command;
    EXPECT_EQ(a.records, b.records) << command;
  }
}

TEST(Execute, NonFactorizableExtraction) {
  cmat x = cmat::Zero(2, 2);
  x(0, 1) = x(1, 0) = 1.0;
  ChannelTable<cplx> q({1}, {2}, cplx(std::sqrt(0.5)));
  ChannelTable<cmat> w({1}, {2}, cmat());
  w(0, 0, 0, 0) = std::sqrt(0.5) * cmat::Identity(2, 2);
  w(0, 0, 0, 1) = std::sqrt(0.5) * x;
  const OutcomeSpace space({"w0"});
  const FiniteMeasure base(space, rvec::Ones(1));
  const StochasticRealization sr({{1.0, 1}}, base, q, w, 2);
  const Report r = execute(scenario_of(sr, 2, space, base), "extract-qsr", {}, "d");
  EXPECT_FALSE(r.passed());
  bool found = false;
  for (const auto& c : r.checks) {
    if (c.detail.find("NotFactorizable at (0, w0)") != std::string::npos) found = true;
  }
  EXPECT_TRUE(found) << r.to_json().dump(2);
}

TEST(Execute, IncompatiblePayload) {
  const Scenario s = parse_scenario(data("fix_ad.json"));
  Scenario no_state = s;
  no_state.params.state.reset();
  try {
    execute(no_state, "simulate", {}, "d");
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.kind(), ScenarioError::Kind::IncompatiblePayload);
  }
  EXPECT_THROW(execute(s, "compare", {}, "d"), ScenarioError);
}

TEST(Execute, CompareAgainstReference) {
  Scenario s = parse_scenario(data("fix_ad.json"));
  const auto g = dilate(testing::fix_ad(), DilationMode::Minimal);
  s.reference = std::make_shared<Scenario>(scenario_of(g, 2, g.space()));
  EXPECT_TRUE(execute(s, "compare", {}, "d").passed());
}

TEST(Execute, EveryCommandOnProjectiveFixture) {
  const Scenario s = parse_scenario(data("fix_z.json"));
  RunOptions o;
  o.shots = 5000;
  for (const auto& command : commands()) {
    if (command == "compare") continue;
    EXPECT_TRUE(execute(s, command, o, "d").passed()) << command;
  }
}

TEST(Digest, KnownValues) {
  EXPECT_EQ(fnv1a_digest(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_digest("a"), "af63dc4c8601ec8c");
}

// Command-line front end: exit codes and output files.
int run_cli(const std::string& args) {
  const std::string cmd = std::string(QMEAS_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("validate " + data("fix_ad.json")), 0);
  EXPECT_EQ(run_cli("verify " + data("fix_iso.json")), 0);
  EXPECT_EQ(run_cli("von-neumann " + data("fix_z.json")), 0);
  EXPECT_EQ(run_cli("von-neumann " + data("fix_ad.json")), 1);
  EXPECT_EQ(run_cli("nonsense " + data("fix_ad.json")), 2);
  EXPECT_EQ(run_cli("validate /nonexistent.json"), 2);

  const std::string bad = ::testing::TempDir() + "qmeas_bad_trace.json";
  std::ofstream(bad) << R"({"dim_s": 1, "outcomes": ["a"],
      "realization": {"state": [[2]], "pvm": {"a": [[1]]}, "unitary": [[1]]}})";
  EXPECT_EQ(run_cli("validate " + bad), 2);
}

TEST(Cli, SimulateWritesRecords) {
  const std::string out = ::testing::TempDir() + "qmeas_records.csv";
  std::remove(out.c_str());
  ASSERT_EQ(run_cli("simulate " + data("fix_z.json") + " --seed 7 --shots 200 --steps 2 --output " +
                    out),
            0);
  const std::string first = read_file(out);
  EXPECT_EQ(first.rfind("step,outcome,channel,prob,weight,", 0), 0u);
  std::size_t lines = 0;
  for (char c : first) lines += c == '\n';
  EXPECT_EQ(lines, 401u);
  ASSERT_EQ(run_cli("simulate " + data("fix_z.json") + " --seed 7 --shots 200 --steps 2 --output " +
                    out),
            0);
  EXPECT_EQ(read_file(out), first);
}

TEST(Cli, ReportFileFormats) {
  const std::string json_out = ::testing::TempDir() + "qmeas_report.json";
  ASSERT_EQ(run_cli("invariants " + data("fix_ad.json") + " --output " + json_out), 0);
  const auto report = nlohmann::json::parse(read_file(json_out));
  EXPECT_EQ(report["command"], "invariants");
  EXPECT_TRUE(report["passed"].get<bool>());
  EXPECT_EQ(report["provenance"]["version"], kVersion);

  const std::string csv_out = ::testing::TempDir() + "qmeas_report.csv";
  ASSERT_EQ(run_cli("validate " + data("fix_ad.json") + " --format csv --output " + csv_out), 0);
  EXPECT_EQ(read_file(csv_out).rfind("check,passed,value,limit,detail\n", 0), 0u);
}

}  // namespace
}  // namespace qmeas
