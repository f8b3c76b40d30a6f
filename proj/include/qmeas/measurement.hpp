// Channel-resolved measurement simulation on top of a quantum stochastic
// representation: outcome laws per channel, posterior pure states, single
// shots and discrete-time trajectories.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "qmeas/core.hpp"
#include "qmeas/stochrep.hpp"

namespace qmeas {

class MeasurementModel {
 public:
  /// Pure initial state; must have unit norm within tol.
  MeasurementModel(QuantumStochasticRep qsr, cvec psi, double tol = kIdentityTol);
  MeasurementModel(QuantumStochasticRep qsr, DensityOperator rho);

  const QuantumStochasticRep& qsr() const { return qsr_; }
  const OutcomeSpace& space() const { return qsr_.space(); }
  bool is_pure() const { return std::holds_alternative<cvec>(initial_); }
  /// Throws Error(NotPureState) for a mixed initial state.
  const cvec& psi() const;
  cmat rho() const;
  const std::variant<cvec, DensityOperator>& initial() const { return initial_; }

  /// Same representation, new pure initial state.
  MeasurementModel with_state(cvec psi) const;

 private:
  QuantumStochasticRep qsr_;
  std::variant<cvec, DensityOperator> initial_;
};

struct OutputLaw {
  /// m_i({w}) per channel and the total sum_i alpha_i k_i m_i.
  std::vector<rvec> channel;
  rvec total;
};

OutputLaw output_law(const MeasurementModel& model);

/// q_i(w) = alpha_i k_i m_i({w}) / m({w}). Throws ZeroProbabilityEvent.
rvec channel_weights(const MeasurementModel& model, std::size_t atom,
                     double tol = kZeroProbability);

/// Pi_i(w) psi normalized. Throws ZeroProbabilityEvent or NotPureState.
cvec posterior_pure(const MeasurementModel& model, std::size_t channel, std::size_t atom,
                    double tol = kZeroProbability);

/// Normalized sum_i alpha_i k_i nu_i(w) Pi rho Pi^dagger. Throws
/// ZeroProbabilityEvent when the outcome has no mass.
DensityOperator posterior_mixture(const QuantumStochasticRep& qsr, std::size_t atom,
                                  const DensityOperator& rho, double tol = kZeroProbability);
DensityOperator posterior_mixture(const MeasurementModel& model, std::size_t atom,
                                  double tol = kZeroProbability);

struct ShotResult {
  std::size_t atom;
  std::string outcome;
  std::size_t channel;
  cvec state;
  /// m({w}) and the channel weight q_i(w).
  double probability;
  double weight;
};

/// Joint table P(w, i) = alpha_i k_i m_i({w}), row per atom.
Eigen::MatrixXd joint_law(const MeasurementModel& model);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform_draw(std::mt19937_64& rng);

/// Inverse CDF over (atom, channel) pairs in declared order; entries with mass
/// at or below kZeroProbability are never selected.
ShotResult sample_shot(const MeasurementModel& model, std::mt19937_64& rng);

struct Trajectory {
  std::uint64_t seed;
  cvec initial;
  std::vector<ShotResult> shots;
};

/// Each step starts from the previous step's posterior. Throws
/// DimensionMismatch when steps is zero.
Trajectory run_trajectory(const MeasurementModel& model, std::size_t steps,
                          std::mt19937_64& rng, std::uint64_t seed);
Trajectory run_trajectory(const MeasurementModel& model, std::size_t steps,
                          std::uint64_t seed);

struct ModelReport {
  /// Posterior-outcome orthonormality, prior-average identity, POV identity.
  double posterior_orthonormality = 0.0;
  double prior_average = 0.0;
  double pov_identity = 0.0;
  bool passed = false;
};

ModelReport verify_model(const MeasurementModel& model, double tol = kIdentityTol);

}  // namespace qmeas
