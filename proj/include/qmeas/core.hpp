// Dense complex linear algebra and operator primitives shared by every
// other module: density operators, unitaries, finite outcome spaces and
// measures on them, projection-valued measures, and the partial expectation.
#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qmeas {

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rvec = Eigen::VectorXd;

/// Default tolerances. Every operation that uses one takes an override.
inline constexpr double kIdentityTol = 1e-9;
inline constexpr double kClusterTol = 1e-8;
/// Eigenvalue floor for positivity checks. Those checks share the identity
/// tolerance argument, so this equals kIdentityTol.
inline constexpr double kPsdFloor = kIdentityTol;
/// Probabilities at or below this are treated as zero.
inline constexpr double kZeroProbability = 1e-12;

enum class ErrorKind {
  DimensionMismatch,
  NotHermitian,
  NotIsometric,
  NotUnitary,
  NotAbsolutelyContinuous,
  InvalidState,
  InvalidMeasure,
  InvalidOutcomeSpace,
  NotAProjectionFamily,
  EmptySelection,
  IncompatibleOutcomeSpaces,
  UnsupportedMeasure,
  PointerOverlap,
  DimensionTooSmall,
  NotOrthonormal,
  WeightMismatch,
  NotUnitaryMatrix,
  ZeroProbabilityEvent,
  NotPureState,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Expression-level helpers.

template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

template <typename DerivedA, typename DerivedB>
double max_abs_diff(const Eigen::MatrixBase<DerivedA>& a,
                    const Eigen::MatrixBase<DerivedB>& b) {
  return max_abs(a - b);
}

template <typename Derived>
double hermiticity_deviation(const Eigen::MatrixBase<Derived>& m) {
  return max_abs(m - m.adjoint());
}

/// Kronecker product. Row index of the result is i_a * rows(b) + i_b.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic>
tensor_product(const Eigen::MatrixBase<DerivedA>& a,
               const Eigen::MatrixBase<DerivedB>& b) {
  using Result = Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic,
                               Eigen::Dynamic>;
  Result out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Column-stacking vectorization, index (col * rows + row).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> vectorize(
    const Eigen::MatrixBase<Derived>& m) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> v(m.size());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    v.segment(j * m.rows(), m.rows()) = m.col(j);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Operators.

class DensityOperator {
 public:
  /// Validates Hermiticity, positivity (floor -tol) and unit trace. Throws
  /// Error(InvalidState) naming the failed invariant.
  explicit DensityOperator(cmat matrix, double tol = kIdentityTol);

  static DensityOperator pure(const cvec& psi, double tol = kIdentityTol);

  Eigen::Index dim() const { return matrix_.rows(); }
  const cmat& matrix() const { return matrix_; }

 private:
  cmat matrix_;
};

class UnitaryOperator {
 public:
  explicit UnitaryOperator(cmat matrix, double tol = kIdentityTol);

  Eigen::Index dim() const { return matrix_.rows(); }
  const cmat& matrix() const { return matrix_; }

 private:
  cmat matrix_;
};

double unitarity_deviation(const cmat& u);

// ---------------------------------------------------------------------------
// Finite outcome spaces and measures.

/// Ordered list of distinct outcome labels. Sampling and serialization use
/// the declared order.
class OutcomeSpace {
 public:
  OutcomeSpace() = default;
  explicit OutcomeSpace(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t atom) const { return labels_.at(atom); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<std::size_t> find(const std::string& label) const;
  /// Throws Error(InvalidOutcomeSpace) for unknown labels.
  std::size_t index_of(const std::string& label) const;

  friend bool operator==(const OutcomeSpace&, const OutcomeSpace&) = default;

 private:
  std::vector<std::string> labels_;
};

/// Every atom index of the space, in declared order.
std::vector<std::size_t> all_atoms(const OutcomeSpace& space);

class FiniteMeasure {
 public:
  FiniteMeasure(OutcomeSpace space, rvec weights);

  const OutcomeSpace& space() const { return space_; }
  const rvec& weights() const { return weights_; }
  double operator[](std::size_t atom) const { return weights_(atom); }
  double total() const { return weights_.sum(); }
  /// Atoms with strictly positive weight.
  std::vector<std::size_t> support() const;

 private:
  OutcomeSpace space_;
  rvec weights_;
};

class ComplexMeasure {
 public:
  ComplexMeasure(OutcomeSpace space, cvec values);
  ComplexMeasure(const FiniteMeasure& m);

  const OutcomeSpace& space() const { return space_; }
  const cvec& values() const { return values_; }
  cplx operator[](std::size_t atom) const { return values_(atom); }

 private:
  OutcomeSpace space_;
  cvec values_;
};

/// Density of `mu` against `base`, atom by atom. Zero where the base vanishes.
/// Throws Error(NotAbsolutelyContinuous) when mu charges a base-null atom.
cvec radon_nikodym(const ComplexMeasure& mu, const FiniteMeasure& base,
                   double tol = kZeroProbability);
rvec radon_nikodym(const FiniteMeasure& mu, const FiniteMeasure& base,
                   double tol = kZeroProbability);

class ProjectionValuedMeasure {
 public:
  /// Each atom projection is checked for Hermiticity and idempotence,
  /// distinct atoms for orthogonality, and the total for completeness.
  ProjectionValuedMeasure(OutcomeSpace space, std::vector<cmat> projections,
                          double tol = kIdentityTol);

  const OutcomeSpace& space() const { return space_; }
  Eigen::Index dim() const { return dim_; }
  const cmat& operator[](std::size_t atom) const { return projections_[atom]; }
  const std::vector<cmat>& projections() const { return projections_; }
  /// Rank of each atom projection (rounded trace).
  std::vector<int> ranks() const;

 private:
  OutcomeSpace space_;
  Eigen::Index dim_ = 0;
  std::vector<cmat> projections_;
};

// ---------------------------------------------------------------------------
// Operations.

/// E_s[q] on the system factor: tr[rho E_s[q]] = tr[(rho (x) s) q] for all rho.
cmat partial_expectation(const cmat& q, const cmat& s);
cmat partial_expectation(const cmat& q, const DensityOperator& s);

struct SpectralCluster {
  double eigenvalue;
  int multiplicity;
  /// Orthonormal columns spanning the eigenspace.
  cmat eigenvectors;
};

/// Eigenvalues within `cluster_tol` of their neighbour are merged, entries
/// sorted by descending eigenvalue. Throws Error(NotHermitian).
std::vector<SpectralCluster> spectral_decompose(const cmat& h,
                                                double cluster_tol = kClusterTol,
                                                double hermitian_tol = kIdentityTol);

/// Residual norm below which a standard basis candidate is skipped during
/// completion. Any value below 1/sqrt(d) guarantees the scan finishes.
inline constexpr double kCompletionFloor = 1e-3;

/// Extends an isometric block d x r to a d x d unitary. The first r columns
/// are copied verbatim; the remainder come from Gram-Schmidt against e_0,
/// e_1, ... in index order. Throws Error(NotIsometric).
UnitaryOperator complete_to_unitary(const cmat& columns,
                                    double tol = kIdentityTol);

/// Choi matrix of rho -> sum_m A_m rho A_m^dagger in the matrix-unit basis:
/// sum_m vec(A_m) vec(A_m)^dagger.
cmat choi_matrix(std::span<const cmat> kraus, Eigen::Index dim);

/// Smallest eigenvalue of a Hermitian matrix.
double min_eigenvalue(const cmat& h);

}  // namespace qmeas
