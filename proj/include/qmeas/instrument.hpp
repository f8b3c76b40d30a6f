// Instruments over finite outcome spaces in Kraus form, their POV measures,
// outcome statistics and posterior states.
//
// Convention: the Heisenberg-picture map at atom w is
//   T({w})[A] = sum_m K_{w,m}^dagger A K_{w,m},
// and the state-picture (predual) map is rho -> sum_m K_{w,m} rho K_{w,m}^dagger.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "qmeas/core.hpp"

namespace qmeas {

class KrausInstrument {
 public:
  /// Checks shapes only. Use validate() for completeness.
  KrausInstrument(OutcomeSpace space, Eigen::Index dim,
                  std::vector<std::vector<cmat>> kraus);

  const OutcomeSpace& space() const { return space_; }
  Eigen::Index dim() const { return dim_; }
  /// Kraus list at an atom; may be empty (zero map).
  const std::vector<cmat>& operator[](std::size_t atom) const { return kraus_[atom]; }
  const std::vector<std::vector<cmat>>& kraus() const { return kraus_; }
  std::size_t kraus_count() const;

 private:
  OutcomeSpace space_;
  Eigen::Index dim_;
  std::vector<std::vector<cmat>> kraus_;
};

struct InstrumentReport {
  /// max-abs of sum_w sum_m K^dagger K - I.
  double completeness_deviation = 0.0;
  /// Per-atom minimum Choi eigenvalue (complete positivity witness).
  std::vector<double> choi_min_eigenvalues;
  bool passed = false;
};

InstrumentReport validate(const KrausInstrument& t, double tol = kIdentityTol);

/// Throws Error(NotOrthonormal) when validate() fails.
void require_valid(const KrausInstrument& t, double tol = kIdentityTol);

class POVMeasure {
 public:
  POVMeasure(OutcomeSpace space, std::vector<cmat> effects);

  const OutcomeSpace& space() const { return space_; }
  const cmat& operator[](std::size_t atom) const { return effects_[atom]; }
  const std::vector<cmat>& effects() const { return effects_; }

 private:
  OutcomeSpace space_;
  std::vector<cmat> effects_;
};

POVMeasure pov_measure(const KrausInstrument& t);

/// p(w) = tr[rho M(w)] for every atom.
FiniteMeasure outcome_distribution(const KrausInstrument& t,
                                   const DensityOperator& rho);

/// Heisenberg map T(E)[a] over a set of atoms.
cmat heisenberg_apply(const KrausInstrument& t, std::span<const std::size_t> atoms,
                      const cmat& a);

/// Unnormalized conditional state sum_{w in E} sum_m K rho K^dagger.
/// Throws Error(EmptySelection) for an empty selection.
cmat predual_apply(const KrausInstrument& t, std::span<const std::size_t> atoms,
                   const DensityOperator& rho);

class PosteriorFamily {
 public:
  PosteriorFamily(std::vector<cmat> unnormalized, double zero_threshold);

  std::size_t size() const { return probabilities_.size(); }
  double probability(std::size_t atom) const { return probabilities_[atom]; }
  const std::vector<double>& probabilities() const { return probabilities_; }
  double total_probability() const;
  /// Undefined (nullopt) on atoms with probability at or below the threshold.
  const std::optional<DensityOperator>& posterior(std::size_t atom) const {
    return posteriors_[atom];
  }
  /// Normalized state conditioned on the outcome lying in `atoms`.
  /// Throws Error(ZeroProbabilityEvent) when the set has no mass.
  DensityOperator conditional(std::span<const std::size_t> atoms) const;
  /// Post-measurement state with outcomes ignored.
  DensityOperator prior() const;

 private:
  std::vector<cmat> unnormalized_;
  std::vector<double> probabilities_;
  std::vector<std::optional<DensityOperator>> posteriors_;
  double zero_threshold_;
};

PosteriorFamily posterior_family(const KrausInstrument& t, const DensityOperator& rho,
                                 double zero_threshold = kZeroProbability);

/// One Kraus operator (the projection itself) per atom. Throws
/// Error(NotAProjectionFamily) unless the projections are Hermitian,
/// idempotent, mutually orthogonal and complete.
KrausInstrument von_neumann_instrument(OutcomeSpace space,
                                       std::vector<cmat> projections,
                                       double tol = kIdentityTol);

/// Per-atom Choi matrices agree within tol.
bool instruments_equal(const KrausInstrument& a, const KrausInstrument& b,
                       double tol = kIdentityTol);

/// Largest per-atom Choi difference. Throws Error(IncompatibleOutcomeSpaces).
double choi_distance(const KrausInstrument& a, const KrausInstrument& b);

/// Atom (w1, w2) of the product space carries {B_{w2,n} A_{w1,m}}; labels are
/// "w1,w2" and the index is w1 * |second| + w2.
KrausInstrument sequential_compose(const KrausInstrument& first,
                                   const KrausInstrument& second);

}  // namespace qmeas
