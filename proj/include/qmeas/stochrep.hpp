// Stochastic realizations {beta, q nu, W}, their gauge transforms and
// invariants, and factorization into quantum stochastic representations
// W[i][k][n](w) = Pi_i(w) q[i][k][n](w).
#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qmeas/channel_table.hpp"
#include "qmeas/core.hpp"
#include "qmeas/instrument.hpp"
#include "qmeas/realization.hpp"

namespace qmeas {

/// Channel weights beta_i with multiplicities k_i (sum beta_i k_i = 1), a base
/// measure, scalar densities q and operators W on the same (i, k, atom, n)
/// grid. The constructor checks weights, supports and both orthonormality
/// relations, throwing WeightMismatch, UnsupportedMeasure or NotOrthonormal.
class StochasticRealization {
 public:
  StochasticRealization(std::vector<ChannelProfile> beta, FiniteMeasure base,
                        ChannelTable<cplx> q, ChannelTable<cmat> w, Eigen::Index dim_s,
                        double tol = kIdentityTol);

  Eigen::Index dim_s() const { return dim_s_; }
  const OutcomeSpace& space() const { return base_.space(); }
  const std::vector<ChannelProfile>& beta() const { return beta_; }
  const FiniteMeasure& base() const { return base_; }
  const ChannelTable<cplx>& q() const { return q_; }
  const ChannelTable<cmat>& w() const { return w_; }
  const std::vector<int>& dims() const { return q_.dims(); }
  std::size_t channels() const { return beta_.size(); }

 private:
  std::vector<ChannelProfile> beta_;
  FiniteMeasure base_;
  ChannelTable<cplx> q_;
  ChannelTable<cmat> w_;
  Eigen::Index dim_s_;
};

/// Largest deviations of the scalar and operator orthonormality relations.
OrthonormalityDeviation sr_orthonormality(const std::vector<ChannelProfile>& beta,
                                          const FiniteMeasure& base,
                                          const ChannelTable<cplx>& q,
                                          const ChannelTable<cmat>& w,
                                          Eigen::Index dim_s);

/// beta from the ancilla spectrum, q and W = V from extract_vq.
StochasticRealization from_realization(const StatisticalRealization& g,
                                       double cluster_tol = kClusterTol);

/// Kraus list at atom w: sqrt(beta_i nu(w)) W[i][k][n](w) over all indices.
KrausInstrument instrument_of_sr(const StochasticRealization& sr,
                                 double tol = kIdentityTol);

/// Per-atom unitary z(w) of size N(w) mixing the n index, per-channel unitary
/// J_i of size k_i mixing copies, and a global phase on W.
struct Gauge {
  std::vector<cmat> z;
  std::vector<cmat> j;
};

struct GaugeTransform {
  Gauge gauge;
  double phase = 0.0;
  /// Replacement base measure; must charge exactly the same atoms.
  std::optional<FiniteMeasure> new_base;
  /// When set, W is transformed with this gauge instead and q with `gauge`.
  std::optional<Gauge> operator_gauge;
};

/// q' = z J q sqrt(nu/nu'), W' = e^{i phase} z J W sqrt(nu/nu').
/// Throws NotUnitaryMatrix, NotAbsolutelyContinuous or DimensionMismatch.
StochasticRealization apply_transform(const StochasticRealization& sr,
                                      const GaugeTransform& t,
                                      double tol = kIdentityTol);

/// Pairwise densities p_ji(w) = k_i^{-1} sum_{k <= min(k_i, k_j)} sum_n
/// conj(q[j][k][n]) q[i][k][n] against a base measure.
class ChannelDensities {
 public:
  ChannelDensities(FiniteMeasure base, std::size_t channels, std::vector<cvec> table);

  const FiniteMeasure& base() const { return base_; }
  std::size_t channels() const { return channels_; }
  const cvec& operator()(std::size_t j, std::size_t i) const {
    return table_[j * channels_ + i];
  }
  /// p_i = p_ii, real and nonnegative up to rounding.
  rvec diagonal(std::size_t i) const { return (*this)(i, i).real(); }
  /// Largest deviation of sum_w p_ji(w) nu(w) from delta_ji, and the most
  /// negative diagonal density (0 when none are negative).
  double orthonormality_deviation() const;
  double min_diagonal() const;

 private:
  FiniteMeasure base_;
  std::size_t channels_;
  std::vector<cvec> table_;
};

ChannelDensities channel_densities(const ChannelTable<cplx>& q,
                                   const FiniteMeasure& base);

struct SrInvariants {
  std::vector<std::size_t> support;
  std::vector<int> dims;
  std::vector<ChannelProfile> beta;
  ChannelDensities densities;
  /// Channel measures k^{-1} sum |q|^2 nu per atom, and sum beta k of them.
  std::vector<rvec> channel_measures;
  rvec total_measure;
  /// Theta_i(w) = k^{-1} sum_{k,n} W conj(q) nu, and sum beta k Theta_i.
  std::vector<std::vector<cmat>> channel_theta;
  std::vector<cmat> total_theta;
};

SrInvariants sr_invariants(const StochasticRealization& sr);

/// Compares support, N(w), the beta profile (as a multiset, matched by
/// descending weight), channel measures and Theta tables modulo one global
/// phase. Throws IncompatibleOutcomeSpaces.
InvariantComparison compare_sr(const StochasticRealization& a,
                               const StochasticRealization& b, double tol = kIdentityTol,
                               double cluster_tol = kClusterTol);

bool equivalent(const StochasticRealization& a, const StochasticRealization& b,
                double tol = kIdentityTol);

/// Factorized form: per channel an operator Pi_i(w), with channel measures
/// nu_i(w) = p_ii(w) nu(w). The constructor checks the joint orthonormality
/// sum_w Pi_j^dagger Pi_i p_ji nu = delta_ji I and that each nu_i is a
/// probability measure, throwing NotOrthonormal otherwise.
class QuantumStochasticRep {
 public:
  QuantumStochasticRep(std::vector<ChannelProfile> profile,
                       std::vector<std::vector<cmat>> pi, ChannelDensities densities,
                       Eigen::Index dim_s, double tol = kIdentityTol);

  Eigen::Index dim_s() const { return dim_s_; }
  const OutcomeSpace& space() const { return densities_.base().space(); }
  std::size_t channels() const { return profile_.size(); }
  const std::vector<ChannelProfile>& profile() const { return profile_; }
  /// alpha_i k_i.
  double channel_weight(std::size_t i) const {
    return profile_[i].weight * profile_[i].multiplicity;
  }
  const cmat& pi(std::size_t i, std::size_t atom) const { return pi_[i][atom]; }
  const std::vector<std::vector<cmat>>& pi_table() const { return pi_; }
  const ChannelDensities& densities() const { return densities_; }
  const FiniteMeasure& base() const { return densities_.base(); }
  /// nu_i({w}) per atom.
  const rvec& channel_measure(std::size_t i) const { return channel_measures_[i]; }

  /// Deviation of the joint orthonormality relation.
  double orthonormality_deviation() const;

 private:
  std::vector<ChannelProfile> profile_;
  std::vector<std::vector<cmat>> pi_;
  ChannelDensities densities_;
  std::vector<rvec> channel_measures_;
  Eigen::Index dim_s_;
};

struct NotFactorizable {
  std::size_t channel;
  std::size_t atom;
  std::string reason;
};

using FactorizeResult = std::variant<QuantumStochasticRep, NotFactorizable>;

/// Tests each (channel, atom) for a common operator, then assembles the
/// factorized form. Pi is phase-normalized so that its largest entry (first
/// in row-major order on ties) is real positive; the phase moves onto q.
FactorizeResult factorize(const StochasticRealization& sr, double tol = kIdentityTol);

/// Kraus list at atom w: sqrt(alpha_i k_i nu_i(w)) Pi_i(w).
KrausInstrument qsr_instrument(const QuantumStochasticRep& qsr);

/// Stochastic realization of instrument_of(g) with one channel per ancilla
/// eigenvector (weight alpha_i, multiplicity 1), W = V, and product densities
/// q[c][n](w) = f_c(w) g_n(w): f_c a discrete Fourier mode over the support
/// atoms scaled by 1/sqrt(nu), g_n = 1/sqrt(N(w)). Factorizable whenever
/// N(w) <= 1. Throws DimensionTooSmall when there are more eigenvectors than
/// support atoms.
StochasticRealization product_density_realization(const StatisticalRealization& g,
                                                  double cluster_tol = kClusterTol);

}  // namespace qmeas
