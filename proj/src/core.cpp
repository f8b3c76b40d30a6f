#include "qmeas/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace qmeas {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotHermitian: return "NotHermitian";
    case ErrorKind::NotIsometric: return "NotIsometric";
    case ErrorKind::NotUnitary: return "NotUnitary";
    case ErrorKind::NotAbsolutelyContinuous: return "NotAbsolutelyContinuous";
    case ErrorKind::InvalidState: return "InvalidState";
    case ErrorKind::InvalidMeasure: return "InvalidMeasure";
    case ErrorKind::InvalidOutcomeSpace: return "InvalidOutcomeSpace";
    case ErrorKind::NotAProjectionFamily: return "NotAProjectionFamily";
    case ErrorKind::EmptySelection: return "EmptySelection";
    case ErrorKind::IncompatibleOutcomeSpaces: return "IncompatibleOutcomeSpaces";
    case ErrorKind::UnsupportedMeasure: return "UnsupportedMeasure";
    case ErrorKind::PointerOverlap: return "PointerOverlap";
    case ErrorKind::DimensionTooSmall: return "DimensionTooSmall";
    case ErrorKind::NotOrthonormal: return "NotOrthonormal";
    case ErrorKind::WeightMismatch: return "WeightMismatch";
    case ErrorKind::NotUnitaryMatrix: return "NotUnitaryMatrix";
    case ErrorKind::ZeroProbabilityEvent: return "ZeroProbabilityEvent";
    case ErrorKind::NotPureState: return "NotPureState";
  }
  return "Unknown";
}

namespace {

bool all_finite(const cmat& m) {
  return m.array().real().allFinite() && m.array().imag().allFinite();
}

}  // namespace

// ---------------------------------------------------------------------------

DensityOperator::DensityOperator(cmat matrix, double tol)
    : matrix_(std::move(matrix)) {
  if (matrix_.rows() < 1 || matrix_.rows() != matrix_.cols()) {
    throw Error(ErrorKind::InvalidState, "shape");
  }
  if (!all_finite(matrix_)) throw Error(ErrorKind::InvalidState, "finite");
  if (hermiticity_deviation(matrix_) > tol) {
    throw Error(ErrorKind::InvalidState, "hermitian");
  }
  if (std::abs(matrix_.trace() - cplx(1.0)) > tol) {
    throw Error(ErrorKind::InvalidState, "trace");
  }
  if (min_eigenvalue(matrix_) < -tol) {
    throw Error(ErrorKind::InvalidState, "positivity");
  }
}

DensityOperator DensityOperator::pure(const cvec& psi, double tol) {
  return DensityOperator(psi * psi.adjoint(), tol);
}

double unitarity_deviation(const cmat& u) {
  if (u.rows() != u.cols()) return INFINITY;
  return max_abs(u.adjoint() * u - cmat::Identity(u.rows(), u.cols()));
}

UnitaryOperator::UnitaryOperator(cmat matrix, double tol)
    : matrix_(std::move(matrix)) {
  if (matrix_.rows() < 1 || matrix_.rows() != matrix_.cols()) {
    throw Error(ErrorKind::NotUnitary, "shape");
  }
  if (unitarity_deviation(matrix_) > tol) {
    throw Error(ErrorKind::NotUnitary, "U^dagger U deviates from identity");
  }
}

// ---------------------------------------------------------------------------

OutcomeSpace::OutcomeSpace(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  if (labels_.empty()) {
    throw Error(ErrorKind::InvalidOutcomeSpace, "at least one atom required");
  }
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) {
    throw Error(ErrorKind::InvalidOutcomeSpace, "labels must be unique");
  }
}

std::optional<std::size_t> OutcomeSpace::find(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t OutcomeSpace::index_of(const std::string& label) const {
  auto idx = find(label);
  if (!idx) throw Error(ErrorKind::InvalidOutcomeSpace, "unknown label " + label);
  return *idx;
}

std::vector<std::size_t> all_atoms(const OutcomeSpace& space) {
  std::vector<std::size_t> atoms(space.size());
  for (std::size_t a = 0; a < atoms.size(); ++a) atoms[a] = a;
  return atoms;
}

FiniteMeasure::FiniteMeasure(OutcomeSpace space, rvec weights)
    : space_(std::move(space)), weights_(std::move(weights)) {
  if (static_cast<std::size_t>(weights_.size()) != space_.size()) {
    throw Error(ErrorKind::InvalidMeasure, "one weight per atom required");
  }
  if (!weights_.allFinite() || (weights_.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidMeasure, "weights must be finite and >= 0");
  }
  if (!(weights_.sum() > 0.0)) {
    throw Error(ErrorKind::InvalidMeasure, "total weight must be positive");
  }
}

std::vector<std::size_t> FiniteMeasure::support() const {
  std::vector<std::size_t> atoms;
  for (std::size_t a = 0; a < space_.size(); ++a) {
    if (weights_(a) > 0.0) atoms.push_back(a);
  }
  return atoms;
}

ComplexMeasure::ComplexMeasure(OutcomeSpace space, cvec values)
    : space_(std::move(space)), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.size()) != space_.size()) {
    throw Error(ErrorKind::InvalidMeasure, "one value per atom required");
  }
  if (!all_finite(values_)) {
    throw Error(ErrorKind::InvalidMeasure, "values must be finite");
  }
}

ComplexMeasure::ComplexMeasure(const FiniteMeasure& m)
    : space_(m.space()), values_(m.weights().cast<cplx>()) {}

cvec radon_nikodym(const ComplexMeasure& mu, const FiniteMeasure& base,
                   double tol) {
  if (!(mu.space() == base.space())) {
    throw Error(ErrorKind::IncompatibleOutcomeSpaces,
                "measures live on different outcome spaces");
  }
  cvec density = cvec::Zero(static_cast<Eigen::Index>(base.space().size()));
  for (std::size_t a = 0; a < base.space().size(); ++a) {
    if (base[a] > 0.0) {
      density(a) = mu[a] / base[a];
    } else if (std::abs(mu[a]) > tol) {
      throw Error(ErrorKind::NotAbsolutelyContinuous,
                  "measure charges base-null atom " + base.space().label(a));
    }
  }
  return density;
}

rvec radon_nikodym(const FiniteMeasure& mu, const FiniteMeasure& base,
                   double tol) {
  return radon_nikodym(ComplexMeasure(mu), base, tol).real();
}

// ---------------------------------------------------------------------------

ProjectionValuedMeasure::ProjectionValuedMeasure(OutcomeSpace space,
                                                 std::vector<cmat> projections,
                                                 double tol)
    : space_(std::move(space)), projections_(std::move(projections)) {
  if (projections_.size() != space_.size() || projections_.empty()) {
    throw Error(ErrorKind::NotAProjectionFamily, "one projection per atom required");
  }
  dim_ = projections_.front().rows();
  cmat total = cmat::Zero(dim_, dim_);
  for (std::size_t a = 0; a < projections_.size(); ++a) {
    const cmat& p = projections_[a];
    if (p.rows() != dim_ || p.cols() != dim_) {
      throw Error(ErrorKind::DimensionMismatch, "projection shapes differ");
    }
    if (hermiticity_deviation(p) > tol) {
      throw Error(ErrorKind::NotAProjectionFamily, "atom projection not Hermitian");
    }
    if (max_abs_diff(p * p, p) > tol) {
      throw Error(ErrorKind::NotAProjectionFamily, "atom projection not idempotent");
    }
    for (std::size_t b = 0; b < a; ++b) {
      if (max_abs(projections_[b] * p) > tol) {
        throw Error(ErrorKind::NotAProjectionFamily, "atoms not mutually orthogonal");
      }
    }
    total += p;
  }
  if (max_abs_diff(total, cmat::Identity(dim_, dim_)) > tol) {
    throw Error(ErrorKind::NotAProjectionFamily, "atoms do not sum to identity");
  }
}

std::vector<int> ProjectionValuedMeasure::ranks() const {
  std::vector<int> r;
  r.reserve(projections_.size());
  for (const cmat& p : projections_) {
    r.push_back(static_cast<int>(std::lround(p.trace().real())));
  }
  return r;
}

// ---------------------------------------------------------------------------

cmat partial_expectation(const cmat& q, const cmat& s) {
  const Eigen::Index dk = s.rows();
  if (s.cols() != dk || q.rows() != q.cols() || dk == 0 || q.rows() % dk != 0) {
    throw Error(ErrorKind::DimensionMismatch,
                "operator dimension is not d_S * d_K");
  }
  const Eigen::Index ds = q.rows() / dk;
  cmat out = cmat::Zero(ds, ds);
  // E[q]_{ab} = sum_{k,l} s_{lk} q_{(a,k),(b,l)}
  for (Eigen::Index a = 0; a < ds; ++a) {
    for (Eigen::Index b = 0; b < ds; ++b) {
      cplx acc = 0.0;
      for (Eigen::Index k = 0; k < dk; ++k) {
        for (Eigen::Index l = 0; l < dk; ++l) {
          acc += s(l, k) * q(a * dk + k, b * dk + l);
        }
      }
      out(a, b) = acc;
    }
  }
  return out;
}

cmat partial_expectation(const cmat& q, const DensityOperator& s) {
  return partial_expectation(q, s.matrix());
}

double min_eigenvalue(const cmat& h) {
  if (h.size() == 0) return 0.0;
  const cmat sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<cmat> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

std::vector<SpectralCluster> spectral_decompose(const cmat& h,
                                                double cluster_tol,
                                                double hermitian_tol) {
  if (h.rows() != h.cols() || h.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "spectral_decompose needs a square matrix");
  }
  if (hermiticity_deviation(h) > hermitian_tol) {
    throw Error(ErrorKind::NotHermitian, "symmetry deviation exceeds tolerance");
  }
  const cmat sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<cmat> solver(sym);
  const rvec& values = solver.eigenvalues();  // ascending
  const cmat& vectors = solver.eigenvectors();
  const Eigen::Index n = values.size();

  std::vector<SpectralCluster> clusters;
  Eigen::Index idx = n - 1;
  while (idx >= 0) {
    Eigen::Index start = idx;
    while (idx - 1 >= 0 && values(idx) - values(idx - 1) <= cluster_tol) --idx;
    // indices idx..start form one cluster
    const int mult = static_cast<int>(start - idx + 1);
    cmat vecs(n, mult);
    for (int c = 0; c < mult; ++c) vecs.col(c) = vectors.col(start - c);
    const double mean = values.segment(idx, mult).mean();
    clusters.push_back({mean, mult, std::move(vecs)});
    --idx;
  }
  return clusters;
}

UnitaryOperator complete_to_unitary(const cmat& columns, double tol) {
  const Eigen::Index d = columns.rows();
  const Eigen::Index r = columns.cols();
  if (d < 1 || r > d) throw Error(ErrorKind::NotIsometric, "block wider than tall");
  if (r > 0 &&
      max_abs_diff(columns.adjoint() * columns, cmat::Identity(r, r)) > tol) {
    throw Error(ErrorKind::NotIsometric, "columns are not orthonormal");
  }
  cmat u(d, d);
  u.leftCols(r) = columns;
  Eigen::Index filled = r;
  for (Eigen::Index j = 0; j < d && filled < d; ++j) {
    cvec v = cvec::Zero(d);
    v(j) = 1.0;
    // two passes of classical Gram-Schmidt
    for (int pass = 0; pass < 2; ++pass) {
      v -= u.leftCols(filled) * (u.leftCols(filled).adjoint() * v);
    }
    const double norm = v.norm();
    if (norm < kCompletionFloor) continue;
    u.col(filled++) = v / norm;
  }
  if (filled != d) {
    throw Error(ErrorKind::NotIsometric, "completion ran out of candidates");
  }
  return UnitaryOperator(std::move(u), std::max(tol, 1e-10));
}

cmat choi_matrix(std::span<const cmat> kraus, Eigen::Index dim) {
  cmat c = cmat::Zero(dim * dim, dim * dim);
  for (const cmat& a : kraus) {
    const cvec v = vectorize(a);
    c.noalias() += v * v.adjoint();
  }
  return c;
}

}  // namespace qmeas
