#include "qmeas/measurement.hpp"

#include <cmath>

#include "qmeas/instrument.hpp"

namespace qmeas {

MeasurementModel::MeasurementModel(QuantumStochasticRep qsr, cvec psi, double tol)
    : qsr_(std::move(qsr)), initial_(std::move(psi)) {
  const cvec& v = std::get<cvec>(initial_);
  if (v.size() != qsr_.dim_s()) {
    throw Error(ErrorKind::DimensionMismatch, "initial state and representation dims differ");
  }
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > tol) {
    throw Error(ErrorKind::InvalidState, "initial state must be a unit vector");
  }
}

MeasurementModel::MeasurementModel(QuantumStochasticRep qsr, DensityOperator rho)
    : qsr_(std::move(qsr)), initial_(std::move(rho)) {
  if (std::get<DensityOperator>(initial_).dim() != qsr_.dim_s()) {
    throw Error(ErrorKind::DimensionMismatch, "initial state and representation dims differ");
  }
}

const cvec& MeasurementModel::psi() const {
  if (!is_pure()) throw Error(ErrorKind::NotPureState, "model has a mixed initial state");
  return std::get<cvec>(initial_);
}

cmat MeasurementModel::rho() const {
  if (is_pure()) {
    const cvec& v = std::get<cvec>(initial_);
    return v * v.adjoint();
  }
  return std::get<DensityOperator>(initial_).matrix();
}

MeasurementModel MeasurementModel::with_state(cvec psi) const {
  return MeasurementModel(qsr_, std::move(psi));
}

namespace {

/// ||Pi psi||^2 or tr[Pi rho Pi^dagger].
double transition_mass(const MeasurementModel& model, std::size_t i, std::size_t atom) {
  const cmat& pi = model.qsr().pi(i, atom);
  if (model.is_pure()) return (pi * model.psi()).squaredNorm();
  return std::max(0.0, (pi * model.rho() * pi.adjoint()).trace().real());
}

}  // namespace

OutputLaw output_law(const MeasurementModel& model) {
  const QuantumStochasticRep& qsr = model.qsr();
  const Eigen::Index atoms = static_cast<Eigen::Index>(qsr.space().size());
  OutputLaw law{{}, rvec::Zero(atoms)};
  for (std::size_t i = 0; i < qsr.channels(); ++i) {
    rvec m(atoms);
    for (Eigen::Index a = 0; a < atoms; ++a) {
      m(a) = transition_mass(model, i, static_cast<std::size_t>(a)) *
             std::max(0.0, qsr.channel_measure(i)(a));
    }
    law.total += qsr.channel_weight(i) * m;
    law.channel.push_back(std::move(m));
  }
  return law;
}

Eigen::MatrixXd joint_law(const MeasurementModel& model) {
  const OutputLaw law = output_law(model);
  const auto& qsr = model.qsr();
  Eigen::MatrixXd table(law.total.size(), static_cast<Eigen::Index>(qsr.channels()));
  for (std::size_t i = 0; i < qsr.channels(); ++i) {
    table.col(static_cast<Eigen::Index>(i)) = qsr.channel_weight(i) * law.channel[i];
  }
  return table;
}

rvec channel_weights(const MeasurementModel& model, std::size_t atom, double tol) {
  const Eigen::MatrixXd joint = joint_law(model);
  const double total = joint.row(static_cast<Eigen::Index>(atom)).sum();
  if (total <= tol) {
    throw Error(ErrorKind::ZeroProbabilityEvent,
                "outcome " + model.qsr().space().label(atom) + " has no mass");
  }
  return joint.row(static_cast<Eigen::Index>(atom)).transpose() / total;
}

cvec posterior_pure(const MeasurementModel& model, std::size_t channel, std::size_t atom,
                    double tol) {
  const cvec out = model.qsr().pi(channel, atom) * model.psi();
  const double norm = out.norm();
  if (norm <= tol) {
    throw Error(ErrorKind::ZeroProbabilityEvent, "posterior pure state is undefined");
  }
  return out / norm;
}

DensityOperator posterior_mixture(const QuantumStochasticRep& qsr, std::size_t atom,
                                  const DensityOperator& rho, double tol) {
  if (rho.dim() != qsr.dim_s()) {
    throw Error(ErrorKind::DimensionMismatch, "state and representation dims differ");
  }
  cmat acc = cmat::Zero(qsr.dim_s(), qsr.dim_s());
  for (std::size_t i = 0; i < qsr.channels(); ++i) {
    const double w = qsr.channel_weight(i) * std::max(0.0, qsr.channel_measure(i)(atom));
    if (w == 0.0) continue;
    const cmat& pi = qsr.pi(i, atom);
    acc += w * pi * rho.matrix() * pi.adjoint();
  }
  const double p = acc.trace().real();
  if (p <= tol) {
    throw Error(ErrorKind::ZeroProbabilityEvent,
                "outcome " + qsr.space().label(atom) + " has no mass");
  }
  return DensityOperator(0.5 * (acc + acc.adjoint()) / p, std::max(kIdentityTol, 1e-13 / p));
}

DensityOperator posterior_mixture(const MeasurementModel& model, std::size_t atom,
                                  double tol) {
  return posterior_mixture(model.qsr(), atom, DensityOperator(model.rho()), tol);
}

double uniform_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ShotResult sample_shot(const MeasurementModel& model, std::mt19937_64& rng) {
  const cvec& psi = model.psi();
  const Eigen::MatrixXd joint = joint_law(model);
  const double u = uniform_draw(rng);

  double cumulative = 0.0;
  Eigen::Index pick_atom = -1;
  Eigen::Index pick_channel = -1;
  bool reached = false;
  for (Eigen::Index a = 0; a < joint.rows() && !reached; ++a) {
    for (Eigen::Index i = 0; i < joint.cols() && !reached; ++i) {
      const double mass = joint(a, i);
      if (mass <= kZeroProbability) continue;
      cumulative += mass;
      pick_atom = a;
      pick_channel = i;
      reached = cumulative >= u;
    }
  }
  if (pick_atom < 0) {
    throw Error(ErrorKind::ZeroProbabilityEvent, "no sampleable outcome");
  }
  const auto atom = static_cast<std::size_t>(pick_atom);
  const auto channel = static_cast<std::size_t>(pick_channel);
  const double prob = joint.row(pick_atom).sum();
  cvec state = model.qsr().pi(channel, atom) * psi;
  state /= state.norm();
  return ShotResult{atom,  model.qsr().space().label(atom), channel, std::move(state),
                    prob, joint(pick_atom, pick_channel) / prob};
}

Trajectory run_trajectory(const MeasurementModel& model, std::size_t steps,
                          std::mt19937_64& rng, std::uint64_t seed) {
  if (steps == 0) throw Error(ErrorKind::DimensionMismatch, "steps must be >= 1");
  Trajectory out{seed, model.psi(), {}};
  out.shots.reserve(steps);
  MeasurementModel current = model;
  for (std::size_t s = 0; s < steps; ++s) {
    out.shots.push_back(sample_shot(current, rng));
    if (s + 1 < steps) current = current.with_state(out.shots.back().state);
  }
  return out;
}

Trajectory run_trajectory(const MeasurementModel& model, std::size_t steps,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return run_trajectory(model, steps, rng, seed);
}

ModelReport verify_model(const MeasurementModel& model, double tol) {
  const QuantumStochasticRep& qsr = model.qsr();
  const cmat rho = model.rho();
  const Eigen::Index ds = qsr.dim_s();
  const std::size_t atoms = qsr.space().size();
  const double norm = rho.trace().real();
  ModelReport report;

  for (std::size_t j = 0; j < qsr.channels(); ++j) {
    for (std::size_t i = 0; i < qsr.channels(); ++i) {
      cplx s = 0.0;
      for (std::size_t a = 0; a < atoms; ++a) {
        s += (rho * qsr.pi(j, a).adjoint() * qsr.pi(i, a)).trace() *
             qsr.densities()(j, i)(a) * qsr.base()[a];
      }
      report.posterior_orthonormality =
          std::max(report.posterior_orthonormality, std::abs(s - (i == j ? norm : 0.0)));
    }
  }

  const KrausInstrument t = qsr_instrument(qsr);
  cmat prior = cmat::Zero(ds, ds);
  std::vector<cmat> effects(atoms, cmat::Zero(ds, ds));
  for (std::size_t i = 0; i < qsr.channels(); ++i) {
    for (std::size_t a = 0; a < atoms; ++a) {
      const double w = qsr.channel_weight(i) * qsr.channel_measure(i)(a);
      const cmat& pi = qsr.pi(i, a);
      prior += w * pi * rho * pi.adjoint();
      effects[a] += w * pi.adjoint() * pi;
    }
  }
  const std::vector<std::size_t> all = all_atoms(qsr.space());
  report.prior_average =
      max_abs_diff(prior, predual_apply(t, all, DensityOperator(rho)));

  const POVMeasure m = pov_measure(t);
  cmat total = cmat::Zero(ds, ds);
  for (std::size_t a = 0; a < atoms; ++a) {
    report.pov_identity = std::max(report.pov_identity, max_abs_diff(effects[a], m[a]));
    total += effects[a];
  }
  report.pov_identity =
      std::max(report.pov_identity, max_abs_diff(total, cmat::Identity(ds, ds)));
  report.passed = report.posterior_orthonormality <= tol && report.prior_average <= tol &&
                  report.pov_identity <= tol;
  return report;
}

}  // namespace qmeas
