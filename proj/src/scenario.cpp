#include "qmeas/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace qmeas {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Parsing helpers. Every helper carries the JSON path of its argument.

[[noreturn]] void parse_fail(const std::string& path, const std::string& msg) {
  throw ScenarioError(ScenarioError::Kind::Parse, path + ": " + msg);
}

[[noreturn]] void validation_fail(const std::string& path, const std::string& msg) {
  throw ScenarioError(ScenarioError::Kind::Validation, path + ": " + msg);
}

/// Runs a domain constructor and reports its failure as a validation error.
template <typename F>
auto validated(const std::string& path, F&& make) {
  try {
    return make();
  } catch (const Error& e) {
    validation_fail(path, e.what());
  }
}

const json& member(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) parse_fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) parse_fail(path + "." + key, "missing field");
  return *it;
}

double as_real(const json& j, const std::string& path) {
  if (!j.is_number()) parse_fail(path, "expected a number");
  return j.get<double>();
}

std::uint64_t as_count(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    parse_fail(path, "expected a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

cplx as_cplx(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    parse_fail(path, "expected a complex number [re, im]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

cvec as_vector(const json& j, const std::string& path, Eigen::Index size = -1) {
  if (!j.is_array()) parse_fail(path, "expected an array of complex numbers");
  if (size >= 0 && static_cast<Eigen::Index>(j.size()) != size) {
    parse_fail(path, "expected " + std::to_string(size) + " entries, got " +
                         std::to_string(j.size()));
  }
  cvec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = as_cplx(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

cmat as_matrix(const json& j, const std::string& path, Eigen::Index rows = -1,
               Eigen::Index cols = -1) {
  if (!j.is_array() || j.empty()) parse_fail(path, "expected an array of rows");
  const Eigen::Index r = static_cast<Eigen::Index>(j.size());
  if (rows >= 0 && r != rows) {
    parse_fail(path, "expected " + std::to_string(rows) + " rows, got " + std::to_string(r));
  }
  const std::string row0 = path + "[0]";
  if (!j[0].is_array()) parse_fail(row0, "expected a row array");
  const Eigen::Index c = static_cast<Eigen::Index>(j[0].size());
  if (cols >= 0 && c != cols) {
    parse_fail(row0, "expected " + std::to_string(cols) + " columns, got " + std::to_string(c));
  }
  cmat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    m.row(i) = as_vector(j[static_cast<std::size_t>(i)], rp, c).transpose();
  }
  return m;
}

/// Checks that every key of a label-keyed object is a declared outcome.
void check_labels(const json& j, const OutcomeSpace& space, const std::string& path) {
  if (!j.is_object()) parse_fail(path, "expected an object keyed by outcome label");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!space.find(it.key())) parse_fail(path + "." + it.key(), "unknown outcome label");
  }
}

const json* labeled(const json& j, const std::string& label) {
  auto it = j.find(label);
  return it == j.end() ? nullptr : &*it;
}

FiniteMeasure parse_measure(const json& j, const OutcomeSpace& space,
                            const std::string& path) {
  check_labels(j, space, path);
  rvec w = rvec::Zero(static_cast<Eigen::Index>(space.size()));
  for (std::size_t a = 0; a < space.size(); ++a) {
    if (const json* x = labeled(j, space.label(a))) w(a) = as_real(*x, path + "." + space.label(a));
  }
  return validated(path, [&] { return FiniteMeasure(space, w); });
}

KrausInstrument parse_instrument(const json& j, Eigen::Index ds, const OutcomeSpace& space,
                                 const Tolerances& tol, const std::string& path) {
  const std::string kp = path + ".kraus";
  const json& kraus = member(j, "kraus", path);
  check_labels(kraus, space, kp);
  std::vector<std::vector<cmat>> lists(space.size());
  for (std::size_t a = 0; a < space.size(); ++a) {
    const json* list = labeled(kraus, space.label(a));
    if (!list) continue;
    const std::string lp = kp + "." + space.label(a);
    if (!list->is_array()) parse_fail(lp, "expected a list of matrices");
    for (std::size_t m = 0; m < list->size(); ++m) {
      lists[a].push_back(as_matrix((*list)[m], lp + "[" + std::to_string(m) + "]", ds, ds));
    }
  }
  KrausInstrument t(space, ds, std::move(lists));
  validated(path, [&] {
    require_valid(t, tol.identity);
    return 0;
  });
  return t;
}

StatisticalRealization parse_realization(const json& j, Eigen::Index ds,
                                         const OutcomeSpace& space, const Tolerances& tol,
                                         const std::string& path) {
  const cmat state = as_matrix(member(j, "state", path), path + ".state");
  const Eigen::Index dk = state.rows();
  if (state.cols() != dk) parse_fail(path + ".state", "ancilla state must be square");
  const std::string pp = path + ".pvm";
  const json& pj = member(j, "pvm", path);
  check_labels(pj, space, pp);
  std::vector<cmat> projections;
  for (std::size_t a = 0; a < space.size(); ++a) {
    const json* x = labeled(pj, space.label(a));
    if (!x) parse_fail(pp + "." + space.label(a), "missing projection");
    projections.push_back(as_matrix(*x, pp + "." + space.label(a), dk, dk));
  }
  const cmat u = as_matrix(member(j, "unitary", path), path + ".unitary", ds * dk, ds * dk);
  DensityOperator s = validated(path + ".state",
                                [&] { return DensityOperator(state, tol.identity); });
  ProjectionValuedMeasure pvm = validated(pp, [&] {
    return ProjectionValuedMeasure(space, projections, tol.identity);
  });
  UnitaryOperator uo =
      validated(path + ".unitary", [&] { return UnitaryOperator(u, tol.identity); });
  return validated(path, [&] {
    return StatisticalRealization(ds, std::move(s), std::move(pvm), std::move(uo));
  });
}

struct ChannelHeader {
  ChannelProfile profile;
  const json* body;
  std::string path;
};

std::vector<ChannelHeader> parse_channels(const json& j, const std::string& path) {
  const std::string cp = path + ".channels";
  const json& list = member(j, "channels", path);
  if (!list.is_array() || list.empty()) parse_fail(cp, "expected a non-empty array");
  std::vector<ChannelHeader> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string ip = cp + "[" + std::to_string(i) + "]";
    const double weight = as_real(member(list[i], "weight", ip), ip + ".weight");
    int k = 1;
    if (list[i].contains("multiplicity")) {
      k = static_cast<int>(as_count(list[i]["multiplicity"], ip + ".multiplicity"));
      if (k < 1) parse_fail(ip + ".multiplicity", "must be >= 1");
    }
    out.push_back({{weight, k}, &list[i], ip});
  }
  return out;
}

StochasticRealization parse_sr(const json& j, Eigen::Index ds, const OutcomeSpace& space,
                               const std::optional<FiniteMeasure>& measure,
                               const Tolerances& tol, const std::string& path) {
  if (!measure) parse_fail("measure", "a stochastic realization needs a base measure");
  const std::vector<ChannelHeader> channels = parse_channels(j, path);

  // N(w) from the first channel; every channel must agree
  std::vector<int> dims(space.size(), 0);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const std::string qp = channels[c].path + ".q";
    const json& q = member(*channels[c].body, "q", channels[c].path);
    check_labels(q, space, qp);
    for (std::size_t a = 0; a < space.size(); ++a) {
      const json* x = labeled(q, space.label(a));
      const std::string ap = qp + "." + space.label(a);
      int n = 0;
      if (x) {
        if (!x->is_array() || static_cast<int>(x->size()) != channels[c].profile.multiplicity) {
          parse_fail(ap, "expected one density list per copy k");
        }
        if (!(*x)[0].is_array()) parse_fail(ap + "[0]", "expected an array");
        n = static_cast<int>((*x)[0].size());
      }
      if (c == 0) {
        dims[a] = n;
      } else if (dims[a] != n) {
        parse_fail(ap, "dimension N(w) differs between channels");
      }
    }
  }
  std::vector<ChannelProfile> beta;
  std::vector<int> mult;
  for (const auto& h : channels) {
    beta.push_back(h.profile);
    mult.push_back(h.profile.multiplicity);
  }
  ChannelTable<cplx> q(mult, dims, cplx(0.0));
  ChannelTable<cmat> w(mult, dims, cmat::Zero(ds, ds));
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const std::string& ip = channels[c].path;
    const json& qj = member(*channels[c].body, "q", ip);
    const json& wj = member(*channels[c].body, "w", ip);
    check_labels(wj, space, ip + ".w");
    for (std::size_t a = 0; a < space.size(); ++a) {
      if (dims[a] == 0) continue;
      const std::string& label = space.label(a);
      const json* wl = labeled(wj, label);
      const std::string wp = ip + ".w." + label;
      if (!wl || !wl->is_array() ||
          static_cast<int>(wl->size()) != channels[c].profile.multiplicity) {
        parse_fail(wp, "expected one operator list per copy k");
      }
      for (int k = 0; k < channels[c].profile.multiplicity; ++k) {
        const std::string kq = ip + ".q." + label + "[" + std::to_string(k) + "]";
        const std::string kw = wp + "[" + std::to_string(k) + "]";
        const cvec qs = as_vector((*labeled(qj, label))[static_cast<std::size_t>(k)], kq,
                                  dims[a]);
        const json& ops = (*wl)[static_cast<std::size_t>(k)];
        if (!ops.is_array() || static_cast<int>(ops.size()) != dims[a]) {
          parse_fail(kw, "expected " + std::to_string(dims[a]) + " operators");
        }
        for (int n = 0; n < dims[a]; ++n) {
          q(c, k, a, n) = qs(n);
          w(c, k, a, n) = as_matrix(ops[static_cast<std::size_t>(n)],
                                    kw + "[" + std::to_string(n) + "]", ds, ds);
        }
      }
    }
  }
  return validated(path, [&] {
    return StochasticRealization(std::move(beta), *measure, std::move(q), std::move(w), ds,
                                 tol.identity);
  });
}

MeasurementModel parse_model(const json& j, Eigen::Index ds, const OutcomeSpace& space,
                             const std::optional<FiniteMeasure>& measure,
                             const Tolerances& tol, const std::string& path) {
  if (!measure) parse_fail("measure", "a model needs a base measure");
  const std::vector<ChannelHeader> channels = parse_channels(j, path);
  std::vector<ChannelProfile> profile;
  std::vector<std::vector<cmat>> pi;
  for (const auto& h : channels) {
    profile.push_back(h.profile);
    const std::string pp = h.path + ".pi";
    const json& pj = member(*h.body, "pi", h.path);
    check_labels(pj, space, pp);
    std::vector<cmat> row;
    for (std::size_t a = 0; a < space.size(); ++a) {
      const json* x = labeled(pj, space.label(a));
      row.push_back(x ? as_matrix(*x, pp + "." + space.label(a), ds, ds)
                      : cmat(cmat::Zero(ds, ds)));
    }
    pi.push_back(std::move(row));
  }
  const std::size_t c = channels.size();
  const std::string dp = path + ".densities";
  const json& dj = member(j, "densities", path);
  if (!dj.is_array() || dj.size() != c) parse_fail(dp, "expected channels x channels table");
  std::vector<cvec> table;
  for (std::size_t jj = 0; jj < c; ++jj) {
    const std::string rp = dp + "[" + std::to_string(jj) + "]";
    if (!dj[jj].is_array() || dj[jj].size() != c) parse_fail(rp, "expected a row per channel");
    for (std::size_t ii = 0; ii < c; ++ii) {
      const std::string ep = rp + "[" + std::to_string(ii) + "]";
      check_labels(dj[jj][ii], space, ep);
      cvec p = cvec::Zero(static_cast<Eigen::Index>(space.size()));
      for (std::size_t a = 0; a < space.size(); ++a) {
        if (const json* x = labeled(dj[jj][ii], space.label(a))) {
          p(static_cast<Eigen::Index>(a)) = as_cplx(*x, ep + "." + space.label(a));
        }
      }
      table.push_back(std::move(p));
    }
  }
  QuantumStochasticRep qsr = validated(path, [&] {
    return QuantumStochasticRep(profile, pi, ChannelDensities(*measure, c, table), ds,
                                tol.identity);
  });
  const bool has_state = j.contains("state");
  const bool has_rho = j.contains("rho");
  if (has_state == has_rho) parse_fail(path, "exactly one of state or rho is required");
  if (has_state) {
    cvec psi = as_vector(j["state"], path + ".state", ds);
    return validated(path + ".state",
                     [&] { return MeasurementModel(std::move(qsr), psi, tol.identity); });
  }
  const cmat rho = as_matrix(j["rho"], path + ".rho", ds, ds);
  return validated(path + ".rho", [&] {
    return MeasurementModel(std::move(qsr), DensityOperator(rho, tol.identity));
  });
}

const std::vector<std::string> kPayloadKeys = {"instrument", "realization",
                                               "stochastic_realization", "model"};

Scenario parse_json(const json& root, bool allow_reference) {
  if (!root.is_object()) parse_fail("$", "scenario must be a JSON object");
  static const std::vector<std::string> known = {
      "dim_s", "outcomes", "measure", "instrument", "realization", "stochastic_realization",
      "model", "tol",      "params",  "reference"};
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      parse_fail(it.key(), "unknown field");
    }
  }
  struct {
    Eigen::Index dim_s;
    OutcomeSpace outcomes;
    std::optional<FiniteMeasure> measure;
    Tolerances tol;
    Params params;
  } s;
  s.dim_s = static_cast<Eigen::Index>(as_count(member(root, "dim_s", "$"), "dim_s"));
  if (s.dim_s < 1) parse_fail("dim_s", "must be >= 1");
  const json& outcomes = member(root, "outcomes", "$");
  if (!outcomes.is_array()) parse_fail("outcomes", "expected an array of labels");
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].is_string()) {
      parse_fail("outcomes[" + std::to_string(i) + "]", "expected a string");
    }
    labels.push_back(outcomes[i].get<std::string>());
  }
  s.outcomes = validated("outcomes", [&] { return OutcomeSpace(labels); });

  if (root.contains("tol")) {
    const json& t = root["tol"];
    if (!t.is_object()) parse_fail("tol", "expected an object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      const std::string tp = "tol." + it.key();
      const double v = as_real(it.value(), tp);
      if (!(v > 0.0)) parse_fail(tp, "must be positive");
      if (it.key() == "identity") {
        s.tol.identity = v;
      } else if (it.key() == "cluster") {
        s.tol.cluster = v;
      } else if (it.key() == "probability") {
        s.tol.probability = v;
      } else {
        parse_fail(tp, "unknown tolerance");
      }
    }
  }
  if (root.contains("measure")) {
    s.measure = parse_measure(root["measure"], s.outcomes, "measure");
  }
  if (root.contains("params")) {
    const json& p = root["params"];
    if (!p.is_object()) parse_fail("params", "expected an object");
    for (auto it = p.begin(); it != p.end(); ++it) {
      const std::string pp = "params." + it.key();
      const std::string& key = it.key();
      if (key == "seed") {
        s.params.seed = as_count(it.value(), pp);
      } else if (key == "shots") {
        s.params.shots = as_count(it.value(), pp);
      } else if (key == "steps") {
        s.params.steps = as_count(it.value(), pp);
      } else if (key == "mode") {
        if (!it.value().is_string()) parse_fail(pp, "expected a string");
        const std::string mode = it.value().get<std::string>();
        if (mode != "minimal" && mode != "invariant") {
          parse_fail(pp, "expected minimal or invariant");
        }
        s.params.mode = mode;
      } else if (key == "state") {
        s.params.state = as_vector(it.value(), pp, s.dim_s);
      } else if (key == "eta") {
        s.params.eta = as_vector(it.value(), pp);
      } else if (key == "pointers") {
        // one pointer vector per outcome, stored as columns
        if (!it.value().is_array() || it.value().size() != s.outcomes.size()) {
          parse_fail(pp, "expected one pointer vector per outcome");
        }
        cmat cols;
        for (std::size_t c = 0; c < it.value().size(); ++c) {
          const cvec v = as_vector(it.value()[c], pp + "[" + std::to_string(c) + "]",
                                   c == 0 ? -1 : cols.rows());
          if (c == 0) cols.resize(v.size(), static_cast<Eigen::Index>(s.outcomes.size()));
          cols.col(static_cast<Eigen::Index>(c)) = v;
        }
        s.params.pointers = cols;
      } else {
        parse_fail(pp, "unknown parameter");
      }
    }
  }

  int payloads = 0;
  for (const auto& key : kPayloadKeys) payloads += root.contains(key) ? 1 : 0;
  if (payloads != 1) {
    parse_fail("$", "exactly one of instrument, realization, stochastic_realization or model "
                    "is required");
  }
  auto payload = [&]() -> Payload {
    if (root.contains("instrument")) {
      return parse_instrument(root["instrument"], s.dim_s, s.outcomes, s.tol, "instrument");
    }
    if (root.contains("realization")) {
      return parse_realization(root["realization"], s.dim_s, s.outcomes, s.tol, "realization");
    }
    if (root.contains("stochastic_realization")) {
      return parse_sr(root["stochastic_realization"], s.dim_s, s.outcomes, s.measure, s.tol,
                      "stochastic_realization");
    }
    return parse_model(root["model"], s.dim_s, s.outcomes, s.measure, s.tol, "model");
  }();

  std::shared_ptr<const Scenario> reference;
  if (root.contains("reference")) {
    if (!allow_reference) parse_fail("reference", "nested references are not allowed");
    try {
      reference = std::make_shared<const Scenario>(parse_json(root["reference"], false));
    } catch (const ScenarioError& e) {
      throw ScenarioError(e.kind(), std::string("reference.") + e.what());
    }
  }
  return Scenario{s.dim_s,  std::move(s.outcomes), std::move(s.measure), std::move(payload),
                  s.tol,    std::move(s.params),   std::move(reference)};
}

// ---------------------------------------------------------------------------
// Serialization helpers.

json j_cplx(cplx z) { return json::array({z.real(), z.imag()}); }

json j_vector(const cvec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(j_cplx(v(i)));
  return out;
}

json j_matrix(const cmat& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(j_vector(m.row(i).transpose()));
  return out;
}

json j_measure(const OutcomeSpace& space, const rvec& w) {
  json out = json::object();
  for (std::size_t a = 0; a < space.size(); ++a) out[space.label(a)] = w(static_cast<Eigen::Index>(a));
  return out;
}

json j_profile(const std::vector<ChannelProfile>& p) {
  json out = json::array();
  for (const auto& c : p) out.push_back({{"weight", c.weight}, {"multiplicity", c.multiplicity}});
  return out;
}

json serialize_payload(const Payload& p) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        const OutcomeSpace& space = v.space();
        if constexpr (std::is_same_v<T, KrausInstrument>) {
          json kraus = json::object();
          for (std::size_t a = 0; a < space.size(); ++a) {
            json list = json::array();
            for (const cmat& k : v[a]) list.push_back(j_matrix(k));
            kraus[space.label(a)] = list;
          }
          return {{"kraus", kraus}};
        } else if constexpr (std::is_same_v<T, StatisticalRealization>) {
          json pvm = json::object();
          for (std::size_t a = 0; a < space.size(); ++a) {
            pvm[space.label(a)] = j_matrix(v.pvm()[a]);
          }
          return {{"state", j_matrix(v.state().matrix())},
                  {"pvm", pvm},
                  {"unitary", j_matrix(v.unitary().matrix())}};
        } else if constexpr (std::is_same_v<T, StochasticRealization>) {
          json channels = json::array();
          for (std::size_t i = 0; i < v.channels(); ++i) {
            json q = json::object();
            json w = json::object();
            for (std::size_t a = 0; a < space.size(); ++a) {
              json qk = json::array();
              json wk = json::array();
              for (int k = 0; k < v.beta()[i].multiplicity; ++k) {
                json qn = json::array();
                json wn = json::array();
                for (int n = 0; n < v.dims()[a]; ++n) {
                  qn.push_back(j_cplx(v.q()(i, k, a, n)));
                  wn.push_back(j_matrix(v.w()(i, k, a, n)));
                }
                qk.push_back(qn);
                wk.push_back(wn);
              }
              q[space.label(a)] = qk;
              w[space.label(a)] = wk;
            }
            channels.push_back({{"weight", v.beta()[i].weight},
                                {"multiplicity", v.beta()[i].multiplicity},
                                {"q", q},
                                {"w", w}});
          }
          return {{"channels", channels}};
        } else {
          const QuantumStochasticRep& qsr = v.qsr();
          json channels = json::array();
          for (std::size_t i = 0; i < qsr.channels(); ++i) {
            json pi = json::object();
            for (std::size_t a = 0; a < space.size(); ++a) {
              pi[space.label(a)] = j_matrix(qsr.pi(i, a));
            }
            channels.push_back({{"weight", qsr.profile()[i].weight},
                                {"multiplicity", qsr.profile()[i].multiplicity},
                                {"pi", pi}});
          }
          json densities = json::array();
          for (std::size_t j = 0; j < qsr.channels(); ++j) {
            json row = json::array();
            for (std::size_t i = 0; i < qsr.channels(); ++i) {
              json entry = json::object();
              for (std::size_t a = 0; a < space.size(); ++a) {
                entry[space.label(a)] = j_cplx(qsr.densities()(j, i)(static_cast<Eigen::Index>(a)));
              }
              row.push_back(entry);
            }
            densities.push_back(row);
          }
          json out = {{"channels", channels}, {"densities", densities}};
          if (v.is_pure()) {
            out["state"] = j_vector(v.psi());
          } else {
            out["rho"] = j_matrix(v.rho());
          }
          return out;
        }
      },
      p);
}

}  // namespace

Scenario parse_scenario_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(ScenarioError::Kind::Parse, std::string("$: ") + e.what());
  }
  return parse_json(root, true);
}

Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(ScenarioError::Kind::Parse, path + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str());
}

std::string payload_kind(const Payload& p) {
  static const char* names[] = {"instrument", "realization", "stochastic_realization",
                                "model"};
  return names[p.index()];
}

json serialize(const Scenario& s) {
  json out = {{"dim_s", s.dim_s}, {"outcomes", s.outcomes.labels()}};
  if (s.measure) out["measure"] = j_measure(s.outcomes, s.measure->weights());
  out[payload_kind(s.payload)] = serialize_payload(s.payload);
  out["tol"] = {{"identity", s.tol.identity},
                {"cluster", s.tol.cluster},
                {"probability", s.tol.probability}};
  json params = json::object();
  if (s.params.seed) params["seed"] = *s.params.seed;
  if (s.params.shots) params["shots"] = *s.params.shots;
  if (s.params.steps) params["steps"] = *s.params.steps;
  if (s.params.mode) params["mode"] = *s.params.mode;
  if (s.params.state) params["state"] = j_vector(*s.params.state);
  if (s.params.eta) params["eta"] = j_vector(*s.params.eta);
  if (s.params.pointers) {
    json cols = json::array();
    for (Eigen::Index c = 0; c < s.params.pointers->cols(); ++c) {
      cols.push_back(j_vector(s.params.pointers->col(c)));
    }
    params["pointers"] = cols;
  }
  if (!params.empty()) out["params"] = params;
  if (s.reference) out["reference"] = serialize(*s.reference);
  return out;
}

std::string serialize_text(const Scenario& s) { return serialize(s).dump(2); }

bool identical(const Scenario& a, const Scenario& b) { return serialize(a) == serialize(b); }

std::string fnv1a_digest(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Reports.

bool Report::passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

json Report::to_json() const {
  json cj = json::array();
  for (const auto& c : checks) {
    json e = {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"limit", c.limit}};
    if (!c.detail.empty()) e["detail"] = c.detail;
    cj.push_back(e);
  }
  json prov = {{"digest", digest}, {"version", kVersion}};
  if (seed) prov["seed"] = *seed;
  return {{"command", command},
          {"passed", passed()},
          {"checks", cj},
          {"tables", tables},
          {"provenance", prov}};
}

std::string Report::to_csv() const {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
  };
  std::ostringstream out;
  out << std::setprecision(17);
  out << "check,passed,value,limit,detail\n";
  for (const auto& c : checks) {
    out << quote(c.name) << ',' << (c.passed ? "true" : "false") << ',' << c.value << ','
        << c.limit << ',' << quote(c.detail) << '\n';
  }
  return out.str();
}

namespace {

class Runner {
 public:
  Runner(const Scenario& s, const RunOptions& o, Report& r) : s_(s), o_(o), r_(r) {
    tol_ = o.tol.value_or(s.tol.identity);
  }

  void check(const std::string& name, double value, double limit,
             const std::string& detail = "") {
    r_.checks.push_back({name, value <= limit, value, limit, detail});
  }
  void fail(const std::string& name, const std::string& detail) {
    r_.checks.push_back({name, false, 0.0, 0.0, detail});
  }
  json& table(const std::string& key) { return r_.tables[key]; }

  [[noreturn]] void incompatible(const std::string& why) const {
    throw ScenarioError(ScenarioError::Kind::IncompatiblePayload,
                        r_.command + " on a " + payload_kind(s_.payload) + " payload: " + why);
  }

  const OutcomeSpace& space() const { return s_.outcomes; }
  double tol() const { return tol_; }

  KrausInstrument instrument(const Payload& p) const {
    return std::visit(
        [&](const auto& v) -> KrausInstrument {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, KrausInstrument>) {
            return v;
          } else if constexpr (std::is_same_v<T, StatisticalRealization>) {
            return instrument_of(v);
          } else if constexpr (std::is_same_v<T, StochasticRealization>) {
            return instrument_of_sr(v, tol_);
          } else {
            return qsr_instrument(v.qsr());
          }
        },
        p);
  }

  FactorizeResult factorized(const Payload& p) const {
    return std::visit(
        [&](const auto& v) -> FactorizeResult {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, KrausInstrument>) {
            return factorize(from_realization(dilate(v, DilationMode::Invariant, tol_),
                                              s_.tol.cluster),
                             tol_);
          } else if constexpr (std::is_same_v<T, StatisticalRealization>) {
            return factorize(from_realization(v, s_.tol.cluster), tol_);
          } else if constexpr (std::is_same_v<T, StochasticRealization>) {
            return factorize(v, tol_);
          } else {
            return v.qsr();
          }
        },
        p);
  }

  std::string describe(const NotFactorizable& nf) const {
    return "NotFactorizable at (" + std::to_string(nf.channel) + ", " +
           space().label(nf.atom) + "): " + nf.reason;
  }

  /// The model payload, or a factorized payload with params.state.
  std::optional<MeasurementModel> model() {
    if (const auto* m = std::get_if<MeasurementModel>(&s_.payload)) return *m;
    if (!s_.params.state) incompatible("params.state is required to build a model");
    FactorizeResult f = factorized(s_.payload);
    if (const auto* nf = std::get_if<NotFactorizable>(&f)) {
      fail("factorizable", describe(*nf));
      return std::nullopt;
    }
    return MeasurementModel(std::get<QuantumStochasticRep>(f), *s_.params.state, tol_);
  }

  void run(const std::string& command);

 private:
  void validate_cmd();
  void dilate_cmd();
  void invariants_cmd();
  void extract_cmd();
  void compare_cmd();
  void von_neumann_cmd();
  void simulate_cmd();
  void verify_cmd();

  void instrument_checks(const KrausInstrument& t, const std::string& prefix);
  void invariant_tables(const InvariantSet& inv);

  const Scenario& s_;
  const RunOptions& o_;
  Report& r_;
  double tol_;
};

void Runner::run(const std::string& command) {
  if (command == "validate") return validate_cmd();
  if (command == "dilate") return dilate_cmd();
  if (command == "invariants") return invariants_cmd();
  if (command == "extract-qsr") return extract_cmd();
  if (command == "compare") return compare_cmd();
  if (command == "von-neumann") return von_neumann_cmd();
  if (command == "simulate") return simulate_cmd();
  if (command == "verify") return verify_cmd();
  throw ScenarioError(ScenarioError::Kind::IncompatiblePayload, "unknown command " + command);
}

void Runner::instrument_checks(const KrausInstrument& t, const std::string& prefix) {
  const InstrumentReport rep = validate(t, tol_);
  check(prefix + "completeness", rep.completeness_deviation, tol_);
  double worst = 0.0;
  for (double e : rep.choi_min_eigenvalues) worst = std::max(worst, -e);
  check(prefix + "complete_positivity", worst, tol_);
  const POVMeasure m = pov_measure(t);
  json effects = json::object();
  for (std::size_t a = 0; a < space().size(); ++a) effects[space().label(a)] = j_matrix(m[a]);
  table(prefix + "pov") = effects;
}

void Runner::validate_cmd() {
  if (const auto* t = std::get_if<KrausInstrument>(&s_.payload)) {
    instrument_checks(*t, "");
    json counts = json::object();
    for (std::size_t a = 0; a < space().size(); ++a) counts[space().label(a)] = (*t)[a].size();
    table("kraus_counts") = counts;
  } else if (const auto* g = std::get_if<StatisticalRealization>(&s_.payload)) {
    const KrausInstrument t = instrument_of(*g);
    instrument_checks(t, "instrument.");
    const OrthonormalityDeviation dev =
        vq_orthonormality(extract_vq(*g, canonicalize(*g), s_.tol.cluster));
    check("operator_orthonormality", dev.operator_relation, tol_);
    check("scalar_orthonormality", dev.scalar_relation, tol_);
    // Kraus form against the direct partial expectation on matrix units
    double worst = 0.0;
    for (Eigen::Index x = 0; x < s_.dim_s; ++x) {
      for (Eigen::Index y = 0; y < s_.dim_s; ++y) {
        cmat e = cmat::Zero(s_.dim_s, s_.dim_s);
        e(x, y) = 1.0;
        for (std::size_t a = 0; a < space().size(); ++a) {
          const std::size_t atom[] = {a};
          worst = std::max(worst,
                           max_abs_diff(heisenberg_map(*g, a, e), heisenberg_apply(t, atom, e)));
        }
      }
    }
    check("heisenberg_consistency", worst, tol_);
    table("dim_k") = g->dim_k();
  } else if (const auto* sr = std::get_if<StochasticRealization>(&s_.payload)) {
    const OrthonormalityDeviation dev =
        sr_orthonormality(sr->beta(), sr->base(), sr->q(), sr->w(), sr->dim_s());
    check("operator_orthonormality", dev.operator_relation, tol_);
    check("scalar_orthonormality", dev.scalar_relation, tol_);
    instrument_checks(instrument_of_sr(*sr, tol_), "instrument.");
  } else {
    const auto& m = std::get<MeasurementModel>(s_.payload);
    check("joint_orthonormality", m.qsr().orthonormality_deviation(), tol_);
    check("density_orthonormality", m.qsr().densities().orthonormality_deviation(), tol_);
    instrument_checks(qsr_instrument(m.qsr()), "instrument.");
  }
}

void Runner::dilate_cmd() {
  const KrausInstrument t = instrument(s_.payload);
  std::vector<std::pair<std::string, DilationMode>> modes;
  if (!s_.params.mode || *s_.params.mode == "minimal") {
    modes.emplace_back("minimal", DilationMode::Minimal);
  }
  if (!s_.params.mode || *s_.params.mode == "invariant") {
    modes.emplace_back("invariant", DilationMode::Invariant);
  }
  for (const auto& [name, mode] : modes) {
    const StatisticalRealization g = dilate(t, mode, tol_);
    check(name + ".round_trip_choi", choi_distance(instrument_of(g), t), tol_);
    check(name + ".unitarity", unitarity_deviation(g.unitary().matrix()), tol_);
    json out = {{"dim_k", g.dim_k()},
                {"state", j_matrix(g.state().matrix())},
                {"unitary", j_matrix(g.unitary().matrix())}};
    json pvm = json::object();
    for (std::size_t a = 0; a < space().size(); ++a) pvm[space().label(a)] = j_matrix(g.pvm()[a]);
    out["pvm"] = pvm;
    table(name) = out;
  }
}

void Runner::invariant_tables(const InvariantSet& inv) {
  json support = json::array();
  for (std::size_t a : inv.support) support.push_back(space().label(a));
  table("support") = support;
  json mult = json::object();
  for (std::size_t a = 0; a < space().size(); ++a) mult[space().label(a)] = inv.multiplicity[a];
  table("multiplicity") = mult;
  table("profile") = j_profile(inv.profile);
  json measures = json::array();
  json thetas = json::array();
  for (std::size_t i = 0; i < inv.channel_measures.size(); ++i) {
    measures.push_back(j_measure(space(), inv.channel_measures[i]));
    json th = json::object();
    for (std::size_t a = 0; a < space().size(); ++a) {
      th[space().label(a)] = j_matrix(inv.channel_theta[i][a]);
    }
    thetas.push_back(th);
    check("channel_measure[" + std::to_string(i) + "].total",
          std::abs(inv.channel_measures[i].sum() - 1.0), tol_);
  }
  table("channel_measures") = measures;
  table("total_measure") = j_measure(space(), inv.total_measure);
  table("channel_theta") = thetas;
  json total = json::object();
  for (std::size_t a = 0; a < space().size(); ++a) {
    total[space().label(a)] = j_matrix(inv.total_theta[a]);
  }
  table("total_theta") = total;
  check("total_measure.total", std::abs(inv.total_measure.sum() - 1.0), tol_);
}

void Runner::invariants_cmd() {
  if (const auto* sr = std::get_if<StochasticRealization>(&s_.payload)) {
    const SrInvariants inv = sr_invariants(*sr);
    InvariantSet set{inv.support,          inv.dims,          inv.beta, inv.channel_measures,
                     inv.total_measure,    inv.channel_theta, inv.total_theta};
    invariant_tables(set);
    check("density_orthonormality", inv.densities.orthonormality_deviation(), tol_);
    return;
  }
  if (std::holds_alternative<MeasurementModel>(s_.payload)) {
    incompatible("invariants need a realization, stochastic realization or instrument");
  }
  const StatisticalRealization g =
      std::holds_alternative<KrausInstrument>(s_.payload)
          ? dilate(std::get<KrausInstrument>(s_.payload), DilationMode::Invariant, tol_)
          : std::get<StatisticalRealization>(s_.payload);
  const VQFamily vq = extract_vq(g, canonicalize(g), s_.tol.cluster);
  const OrthonormalityDeviation dev = vq_orthonormality(vq);
  check("operator_orthonormality", dev.operator_relation, tol_);
  check("scalar_orthonormality", dev.scalar_relation, tol_);
  invariant_tables(invariants(g, s_.tol.cluster));
}

void Runner::extract_cmd() {
  if (std::holds_alternative<MeasurementModel>(s_.payload)) {
    incompatible("the payload is already a quantum stochastic representation");
  }
  const FactorizeResult f = factorized(s_.payload);
  if (const auto* nf = std::get_if<NotFactorizable>(&f)) {
    fail("factorizable", describe(*nf));
    table("not_factorizable") = {{"channel", nf->channel},
                                 {"outcome", space().label(nf->atom)},
                                 {"reason", nf->reason}};
    return;
  }
  const auto& qsr = std::get<QuantumStochasticRep>(f);
  check("factorizable", 0.0, 0.0);
  check("round_trip_choi", choi_distance(qsr_instrument(qsr), instrument(s_.payload)),
        std::max(tol_, 1e-8));
  check("joint_orthonormality", qsr.orthonormality_deviation(), tol_);
  table("profile") = j_profile(qsr.profile());
  json pi = json::array();
  json measures = json::array();
  for (std::size_t i = 0; i < qsr.channels(); ++i) {
    json row = json::object();
    for (std::size_t a = 0; a < space().size(); ++a) row[space().label(a)] = j_matrix(qsr.pi(i, a));
    pi.push_back(row);
    measures.push_back(j_measure(space(), qsr.channel_measure(i)));
  }
  table("pi") = pi;
  table("channel_measures") = measures;
}

void Runner::compare_cmd() {
  if (!s_.reference) incompatible("compare needs a reference scenario");
  const Scenario& ref = *s_.reference;
  if (!(ref.outcomes == s_.outcomes) || ref.dim_s != s_.dim_s) {
    fail("compatible", "outcome spaces or system dims differ");
    return;
  }
  const double d = choi_distance(instrument(s_.payload), instrument(ref.payload));
  check("instruments_equal", d, tol_);
  table("choi_distance") = d;
  const auto* a_sr = std::get_if<StochasticRealization>(&s_.payload);
  const auto* b_sr = std::get_if<StochasticRealization>(&ref.payload);
  const auto* a_g = std::get_if<StatisticalRealization>(&s_.payload);
  const auto* b_g = std::get_if<StatisticalRealization>(&ref.payload);
  std::optional<InvariantComparison> cmp;
  if (a_sr && b_sr) cmp = compare_sr(*a_sr, *b_sr, tol_, s_.tol.cluster);
  if (a_g && b_g) {
    cmp = compare_invariants(invariants(*a_g, s_.tol.cluster), invariants(*b_g, s_.tol.cluster),
                             tol_, s_.tol.cluster);
  }
  if (cmp) {
    if (!cmp->equal && !cmp->mismatch.empty() && cmp->measure_deviation == 0.0 &&
        cmp->theta_deviation == 0.0) {
      fail("equivalent", cmp->mismatch);
    } else {
      check("equivalent.measures", cmp->measure_deviation, tol_);
      check("equivalent.theta", cmp->theta_deviation, tol_);
    }
    table("phase") = cmp->phase;
    table("mismatch") = cmp->mismatch;
  }
}

void Runner::von_neumann_cmd() {
  const auto* t = std::get_if<KrausInstrument>(&s_.payload);
  if (!t) incompatible("von-neumann needs an instrument of projections");
  std::vector<cmat> projections;
  for (std::size_t a = 0; a < space().size(); ++a) {
    if ((*t)[a].size() != 1) {
      fail("projection_family", "atom " + space().label(a) + " needs exactly one operator");
      return;
    }
    projections.push_back((*t)[a].front());
  }
  try {
    von_neumann_instrument(space(), projections, tol_);
  } catch (const Error& e) {
    fail("projection_family", e.what());
    return;
  }
  check("projection_family", 0.0, 0.0);
  const Eigen::Index m = static_cast<Eigen::Index>(space().size());
  const cmat pointers = s_.params.pointers.value_or(cmat(cmat::Identity(m, m)));
  const cvec eta = s_.params.eta.value_or(
      cvec(cvec::Constant(pointers.rows(), 1.0 / std::sqrt(static_cast<double>(pointers.rows())))));
  const StatisticalRealization g = von_neumann_process(space(), projections, eta, pointers, tol_);
  const KrausInstrument generated = instrument_of(g);
  check("round_trip_choi", choi_distance(generated, *t), tol_);
  table("dim_k") = g.dim_k();
  if (s_.params.state) {
    const cvec& psi = *s_.params.state;
    const DensityOperator rho = DensityOperator::pure(psi, tol_);
    const FiniteMeasure dist = outcome_distribution(generated, rho);
    const PosteriorFamily post = posterior_family(generated, rho, s_.tol.probability);
    double prob_dev = 0.0;
    double post_dev = 0.0;
    json probs = json::object();
    json posts = json::object();
    for (std::size_t a = 0; a < space().size(); ++a) {
      const cvec proj = projections[a] * psi;
      const double p = proj.squaredNorm();
      prob_dev = std::max(prob_dev, std::abs(dist[a] - p));
      probs[space().label(a)] = dist[a];
      if (post.posterior(a)) {
        post_dev = std::max(post_dev, max_abs_diff(post.posterior(a)->matrix(),
                                                   proj * proj.adjoint() / p));
        posts[space().label(a)] = j_matrix(post.posterior(a)->matrix());
      }
    }
    check("probabilities", prob_dev, tol_);
    check("posteriors", post_dev, tol_);
    table("probabilities") = probs;
    table("posteriors") = posts;
  }
}

void Runner::simulate_cmd() {
  const std::optional<MeasurementModel> model = this->model();
  if (!model) return;
  if (!model->is_pure()) incompatible("simulation tracks pure states; give a state vector");
  const std::uint64_t seed = o_.seed.value_or(s_.params.seed.value_or(0));
  const std::uint64_t shots = o_.shots.value_or(s_.params.shots.value_or(1000));
  const std::uint64_t steps = o_.steps.value_or(s_.params.steps.value_or(1));
  if (shots == 0 || steps == 0) incompatible("shots and steps must be positive");
  r_.seed = seed;

  const Eigen::Index ds = s_.dim_s;
  const std::size_t atoms = space().size();
  std::ostringstream csv;
  csv << std::setprecision(17) << "step,outcome,channel,prob,weight";
  for (Eigen::Index x = 0; x < ds; ++x) csv << ",state_re" << x;
  for (Eigen::Index x = 0; x < ds; ++x) csv << ",state_im" << x;
  csv << '\n';

  std::mt19937_64 rng(seed);
  std::vector<double> first(atoms, 0.0);
  Eigen::MatrixXd pairs = Eigen::MatrixXd::Zero(atoms, atoms);
  for (std::uint64_t shot = 0; shot < shots; ++shot) {
    const Trajectory tr = run_trajectory(*model, steps, rng, seed);
    for (std::size_t st = 0; st < tr.shots.size(); ++st) {
      const ShotResult& r = tr.shots[st];
      csv << st << ',' << r.outcome << ',' << r.channel << ',' << r.probability << ','
          << r.weight;
      for (Eigen::Index x = 0; x < ds; ++x) csv << ',' << r.state(x).real();
      for (Eigen::Index x = 0; x < ds; ++x) csv << ',' << r.state(x).imag();
      csv << '\n';
    }
    first[tr.shots[0].atom] += 1.0;
    if (steps >= 2) pairs(tr.shots[0].atom, tr.shots[1].atom) += 1.0;
  }
  r_.records = csv.str();

  const double n = static_cast<double>(shots);
  auto binomial = [&](const std::string& name, double count, double p) {
    const double sigma = std::sqrt(std::max(p * (1.0 - p), 0.0) / n);
    check(name, std::abs(count / n - p), 3.0 * sigma + 1e-12,
          "frequency " + std::to_string(count / n) + " vs " + std::to_string(p));
  };
  const OutputLaw law = output_law(*model);
  json freq = json::object();
  for (std::size_t a = 0; a < atoms; ++a) {
    binomial("frequency[" + space().label(a) + "]", first[a], law.total(a));
    freq[space().label(a)] = first[a] / n;
  }
  table("law") = j_measure(space(), law.total);
  table("frequency") = freq;
  table("shots") = shots;
  table("steps") = steps;
  if (steps >= 2) {
    const KrausInstrument t = qsr_instrument(model->qsr());
    const FiniteMeasure joint = outcome_distribution(sequential_compose(t, t),
                                                     DensityOperator(model->rho()));
    json pf = json::object();
    for (std::size_t a = 0; a < atoms; ++a) {
      for (std::size_t b = 0; b < atoms; ++b) {
        const std::string label = space().label(a) + "," + space().label(b);
        binomial("pair_frequency[" + label + "]", pairs(a, b), joint[a * atoms + b]);
        pf[label] = pairs(a, b) / n;
      }
    }
    table("pair_frequency") = pf;
  }
}

void Runner::verify_cmd() {
  const std::optional<MeasurementModel> model = this->model();
  if (!model) return;
  const ModelReport rep = verify_model(*model, tol_);
  check("posterior_orthonormality", rep.posterior_orthonormality, tol_);
  check("prior_average", rep.prior_average, tol_);
  check("pov_identity", rep.pov_identity, tol_);

  const KrausInstrument t = qsr_instrument(model->qsr());
  const DensityOperator rho(model->rho());
  const OutputLaw law = output_law(*model);
  const FiniteMeasure oracle = outcome_distribution(t, rho);
  check("output_law", max_abs_diff(law.total, oracle.weights()), tol_);
  const PosteriorFamily post = posterior_family(t, rho, s_.tol.probability);
  double worst = 0.0;
  json posts = json::object();
  for (std::size_t a = 0; a < space().size(); ++a) {
    if (!post.posterior(a)) continue;
    const DensityOperator mix = posterior_mixture(*model, a, s_.tol.probability);
    worst = std::max(worst, max_abs_diff(mix.matrix(), post.posterior(a)->matrix()));
    posts[space().label(a)] = j_matrix(mix.matrix());
  }
  check("posterior_mixture", worst, tol_);
  table("law") = j_measure(space(), law.total);
  table("posteriors") = posts;
}

}  // namespace

Report execute(const Scenario& s, const std::string& command, const RunOptions& options,
               const std::string& digest) {
  Report report;
  report.command = command;
  report.digest = digest;
  report.seed = options.seed ? options.seed : s.params.seed;
  Runner runner(s, options, report);
  try {
    runner.run(command);
  } catch (const Error& e) {
    runner.fail("error", e.what());
  }
  return report;
}

}  // namespace qmeas
