// Statistical realizations (measuring processes) {K, S, P, U}: the instrument
// they generate, canonical block form of the pointer PVM, the V/q operator
// families, unitary invariants, and three constructors (dilation, von
// Neumann process, indirect measurement).
//
// Ancilla coordinates follow qmeas::tensor_product: index on H_S (x) K is
// system * d_K + ancilla.
//
// Normalization of V and q. The block basis e_n(w) is orthonormal in K. With
// base weights nu(w), the operator and scalar tables are
//   V[i][k][n](w) = <e_n(w)| U |phi_ik> / sqrt(nu(w)),
//   q[i][k][n](w) = <e_n(w)|phi_ik> / sqrt(nu(w)),
// so that sum_w sum_n V^dagger V nu(w) = I and the Kraus operators of the
// generated instrument are sqrt(alpha_i nu(w)) V[i][k][n](w).
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qmeas/channel_table.hpp"
#include "qmeas/core.hpp"
#include "qmeas/instrument.hpp"

namespace qmeas {

class StatisticalRealization {
 public:
  StatisticalRealization(Eigen::Index dim_s, DensityOperator state,
                         ProjectionValuedMeasure pvm, UnitaryOperator unitary);

  Eigen::Index dim_s() const { return dim_s_; }
  Eigen::Index dim_k() const { return state_.dim(); }
  const OutcomeSpace& space() const { return pvm_.space(); }
  const DensityOperator& state() const { return state_; }
  const ProjectionValuedMeasure& pvm() const { return pvm_; }
  const UnitaryOperator& unitary() const { return unitary_; }

 private:
  Eigen::Index dim_s_;
  DensityOperator state_;
  ProjectionValuedMeasure pvm_;
  UnitaryOperator unitary_;
};

struct CanonicalForm {
  FiniteMeasure base;
  /// Multiplicity N(w); 0 off the spectral support.
  std::vector<int> dims;
  /// Per atom, d_K x N(w) orthonormal columns spanning range P({w}).
  std::vector<cmat> block_basis;
  /// Unitary taking K onto block coordinates (atom-major, then n).
  cmat rotation;

  std::vector<std::size_t> support() const;
};

/// Block bases come from the projected standard basis (Gram-Schmidt of
/// P e_0, P e_1, ...), ordered by first non-negligible component and with the
/// largest-magnitude component made real positive. The default base measure
/// puts weight 1 on every support atom. Throws Error(UnsupportedMeasure) when
/// `nu` vanishes on a support atom or charges a null atom.
CanonicalForm canonicalize(const StatisticalRealization& g,
                           const std::optional<FiniteMeasure>& nu = std::nullopt,
                           double tol = kIdentityTol);

struct VQFamily {
  FiniteMeasure base;
  std::vector<ChannelProfile> profile;
  /// Ancilla eigenvectors phi_ik, one d_K x k block per channel.
  std::vector<cmat> eigenvectors;
  ChannelTable<cmat> v;
  ChannelTable<cplx> q;
};

VQFamily extract_vq(const StatisticalRealization& g, const CanonicalForm& cf,
                    double cluster_tol = kClusterTol);

/// Largest deviations of the operator and scalar orthonormality relations
/// sum_w sum_n V_jpn^dagger V_ikn nu = delta I and the same for q.
struct OrthonormalityDeviation {
  double operator_relation = 0.0;
  double scalar_relation = 0.0;
};

OrthonormalityDeviation vq_orthonormality(const VQFamily& vq);

/// Instrument generated by the realization, in Kraus form via extract_vq.
KrausInstrument instrument_of(const StatisticalRealization& g);

/// Direct evaluation of T({atom})[a] = E_S[U^dagger (a (x) P({atom})) U].
cmat heisenberg_map(const StatisticalRealization& g, std::size_t atom, const cmat& a);

/// E_s[(I (x) P({atom})) U] for an arbitrary ancilla operator s.
cmat theta_direct(const StatisticalRealization& g, const cmat& s, std::size_t atom);

struct InvariantSet {
  std::vector<std::size_t> support;
  std::vector<int> multiplicity;
  std::vector<ChannelProfile> profile;
  /// nu^(i)({w}) per channel, and the weighted total nu_g.
  std::vector<rvec> channel_measures;
  rvec total_measure;
  /// Theta^(i)({w}) per channel and atom, and the weighted total.
  std::vector<std::vector<cmat>> channel_theta;
  std::vector<cmat> total_theta;
};

InvariantSet invariants(const StatisticalRealization& g,
                        double cluster_tol = kClusterTol);

struct InvariantComparison {
  bool equal = false;
  /// Human-readable reason for the first structural mismatch, if any.
  std::string mismatch;
  double measure_deviation = 0.0;
  /// Theta deviation after removing the best single global phase.
  double theta_deviation = 0.0;
  double phase = 0.0;
};

InvariantComparison compare_invariants(const InvariantSet& a, const InvariantSet& b,
                                       double tol = kIdentityTol,
                                       double cluster_tol = kClusterTol);

/// S' = W^dagger S W, P' = W^dagger P W, U' = e^{i phase} (I (x) W^dagger) U (I (x) W).
StatisticalRealization apply_unitary_equivalence(const StatisticalRealization& g,
                                                 const UnitaryOperator& w,
                                                 double phase);

enum class DilationMode { Minimal, Invariant };

/// Ancilla basis chi_{w,m}, one vector per Kraus operator. Minimal mode uses
/// the first chi as the ancilla state, invariant mode the uniform superposition.
StatisticalRealization dilate(const KrausInstrument& t, DilationMode mode,
                              double tol = kIdentityTol);

/// U (psi (x) eta) = sum_j P_j psi (x) eta_j, S = |eta><eta|, P({j}) = |eta_j><eta_j|.
/// When d_K exceeds the outcome count the orthogonal complement of the
/// pointers is added to the last atom. `pointers` holds eta_j as columns.
StatisticalRealization von_neumann_process(const OutcomeSpace& space,
                                           const std::vector<cmat>& projections,
                                           const cvec& eta, const cmat& pointers,
                                           double tol = kIdentityTol);

/// Data for an indirect measurement: channel weights beta_i, base measure,
/// dimension function N(w), scalar densities q[i][0][n](w) and operators
/// v[i][0][n](w) (multiplicity 1 per channel). The generated instrument has
/// Kraus operators sqrt(beta_i nu(w)) v q.
struct IndirectData {
  std::vector<double> beta;
  FiniteMeasure base;
  ChannelTable<cplx> q;
  ChannelTable<cmat> v;
};

StatisticalRealization indirect_realization(const IndirectData& data,
                                            double tol = kIdentityTol);

/// Unitary on H_S (x) K with U (e_b (x) phi_i) = images[i] e_b, completed
/// deterministically elsewhere. `phi` holds orthonormal ancilla columns and
/// each image is a (d_S d_K) x d_S block. Throws Error(NotIsometric).
UnitaryOperator unitary_from_isometry(Eigen::Index dim_s, const cmat& phi,
                                      const std::vector<cmat>& images,
                                      double tol = kIdentityTol);

/// The d_S x d_S operator (I (x) <bra|) u (I (x) |ket>).
cmat partial_element(const cmat& u, Eigen::Index dim_s, const cvec& bra,
                     const cvec& ket);

}  // namespace qmeas
