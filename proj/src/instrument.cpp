#include "qmeas/instrument.hpp"

#include <algorithm>
#include <cmath>

namespace qmeas {

KrausInstrument::KrausInstrument(OutcomeSpace space, Eigen::Index dim,
                                 std::vector<std::vector<cmat>> kraus)
    : space_(std::move(space)), dim_(dim), kraus_(std::move(kraus)) {
  if (dim_ < 1) throw Error(ErrorKind::DimensionMismatch, "system dim must be >= 1");
  if (kraus_.size() != space_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one Kraus list per atom required");
  }
  for (const auto& list : kraus_) {
    for (const cmat& k : list) {
      if (k.rows() != dim_ || k.cols() != dim_) {
        throw Error(ErrorKind::DimensionMismatch, "Kraus operator shape");
      }
    }
  }
}

std::size_t KrausInstrument::kraus_count() const {
  std::size_t n = 0;
  for (const auto& list : kraus_) n += list.size();
  return n;
}

InstrumentReport validate(const KrausInstrument& t, double tol) {
  InstrumentReport report;
  cmat total = cmat::Zero(t.dim(), t.dim());
  for (std::size_t a = 0; a < t.space().size(); ++a) {
    for (const cmat& k : t[a]) total.noalias() += k.adjoint() * k;
    report.choi_min_eigenvalues.push_back(
        min_eigenvalue(choi_matrix(t[a], t.dim())));
  }
  report.completeness_deviation =
      max_abs_diff(total, cmat::Identity(t.dim(), t.dim()));
  report.passed =
      report.completeness_deviation <= tol &&
      std::all_of(report.choi_min_eigenvalues.begin(),
                  report.choi_min_eigenvalues.end(),
                  [tol](double e) { return e >= -tol; });
  return report;
}

void require_valid(const KrausInstrument& t, double tol) {
  const InstrumentReport r = validate(t, tol);
  if (!r.passed) {
    throw Error(ErrorKind::NotOrthonormal,
                "instrument completeness deviation " +
                    std::to_string(r.completeness_deviation));
  }
}

POVMeasure::POVMeasure(OutcomeSpace space, std::vector<cmat> effects)
    : space_(std::move(space)), effects_(std::move(effects)) {
  if (effects_.size() != space_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one effect per atom required");
  }
}

POVMeasure pov_measure(const KrausInstrument& t) {
  std::vector<cmat> effects;
  effects.reserve(t.space().size());
  for (std::size_t a = 0; a < t.space().size(); ++a) {
    cmat m = cmat::Zero(t.dim(), t.dim());
    for (const cmat& k : t[a]) m.noalias() += k.adjoint() * k;
    effects.push_back(std::move(m));
  }
  return POVMeasure(t.space(), std::move(effects));
}

namespace {

void check_dim(const KrausInstrument& t, const DensityOperator& rho) {
  if (rho.dim() != t.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "state and instrument dims differ");
  }
}

cmat predual_atom(const KrausInstrument& t, std::size_t atom, const cmat& rho) {
  cmat out = cmat::Zero(t.dim(), t.dim());
  for (const cmat& k : t[atom]) out.noalias() += k * rho * k.adjoint();
  return out;
}

}  // namespace

FiniteMeasure outcome_distribution(const KrausInstrument& t,
                                   const DensityOperator& rho) {
  check_dim(t, rho);
  rvec p(static_cast<Eigen::Index>(t.space().size()));
  const POVMeasure m = pov_measure(t);
  for (std::size_t a = 0; a < t.space().size(); ++a) {
    p(a) = std::max(0.0, (rho.matrix() * m[a]).trace().real());
  }
  return FiniteMeasure(t.space(), std::move(p));
}

cmat heisenberg_apply(const KrausInstrument& t, std::span<const std::size_t> atoms,
                      const cmat& a) {
  if (a.rows() != t.dim() || a.cols() != t.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "observable shape");
  }
  cmat out = cmat::Zero(t.dim(), t.dim());
  for (std::size_t atom : atoms) {
    for (const cmat& k : t[atom]) out.noalias() += k.adjoint() * a * k;
  }
  return out;
}

cmat predual_apply(const KrausInstrument& t, std::span<const std::size_t> atoms,
                   const DensityOperator& rho) {
  check_dim(t, rho);
  if (atoms.empty()) throw Error(ErrorKind::EmptySelection, "no atoms selected");
  cmat out = cmat::Zero(t.dim(), t.dim());
  for (std::size_t atom : atoms) {
    if (atom >= t.space().size()) {
      throw Error(ErrorKind::InvalidOutcomeSpace, "atom index out of range");
    }
    out += predual_atom(t, atom, rho.matrix());
  }
  return out;
}

// ---------------------------------------------------------------------------

PosteriorFamily::PosteriorFamily(std::vector<cmat> unnormalized,
                                 double zero_threshold)
    : unnormalized_(std::move(unnormalized)), zero_threshold_(zero_threshold) {
  for (const cmat& u : unnormalized_) {
    const double p = std::max(0.0, u.trace().real());
    probabilities_.push_back(p);
    if (p > zero_threshold_) {
      // rounding in u is absolute, so the admissible error grows as 1/p
      const double tol = std::max(kIdentityTol, 1e-13 / p);
      posteriors_.emplace_back(DensityOperator(0.5 * (u + u.adjoint()) / p, tol));
    } else {
      posteriors_.emplace_back(std::nullopt);
    }
  }
}

double PosteriorFamily::total_probability() const {
  double s = 0.0;
  for (double p : probabilities_) s += p;
  return s;
}

DensityOperator PosteriorFamily::conditional(std::span<const std::size_t> atoms) const {
  if (atoms.empty()) throw Error(ErrorKind::EmptySelection, "no atoms selected");
  cmat acc = cmat::Zero(unnormalized_.front().rows(), unnormalized_.front().cols());
  for (std::size_t a : atoms) acc += unnormalized_.at(a);
  const double p = acc.trace().real();
  if (p <= zero_threshold_) {
    throw Error(ErrorKind::ZeroProbabilityEvent, "selected outcomes have no mass");
  }
  return DensityOperator(acc / p);
}

DensityOperator PosteriorFamily::prior() const {
  std::vector<std::size_t> atoms(unnormalized_.size());
  for (std::size_t a = 0; a < atoms.size(); ++a) atoms[a] = a;
  return conditional(atoms);
}

PosteriorFamily posterior_family(const KrausInstrument& t, const DensityOperator& rho,
                                 double zero_threshold) {
  check_dim(t, rho);
  std::vector<cmat> pieces;
  pieces.reserve(t.space().size());
  for (std::size_t a = 0; a < t.space().size(); ++a) {
    pieces.push_back(predual_atom(t, a, rho.matrix()));
  }
  return PosteriorFamily(std::move(pieces), zero_threshold);
}

// ---------------------------------------------------------------------------

KrausInstrument von_neumann_instrument(OutcomeSpace space,
                                       std::vector<cmat> projections,
                                       double tol) {
  if (projections.empty()) {
    throw Error(ErrorKind::NotAProjectionFamily, "no projections given");
  }
  const Eigen::Index d = projections.front().rows();
  try {
    ProjectionValuedMeasure check(space, projections, tol);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NotAProjectionFamily) throw;
    throw Error(ErrorKind::NotAProjectionFamily, e.what());
  }
  std::vector<std::vector<cmat>> kraus;
  kraus.reserve(projections.size());
  for (cmat& p : projections) kraus.push_back({std::move(p)});
  return KrausInstrument(std::move(space), d, std::move(kraus));
}

double choi_distance(const KrausInstrument& a, const KrausInstrument& b) {
  if (!(a.space() == b.space()) || a.dim() != b.dim()) {
    throw Error(ErrorKind::IncompatibleOutcomeSpaces,
                "instruments differ in outcome space or dimension");
  }
  double worst = 0.0;
  for (std::size_t atom = 0; atom < a.space().size(); ++atom) {
    worst = std::max(worst, max_abs_diff(choi_matrix(a[atom], a.dim()),
                                         choi_matrix(b[atom], b.dim())));
  }
  return worst;
}

bool instruments_equal(const KrausInstrument& a, const KrausInstrument& b,
                       double tol) {
  return choi_distance(a, b) <= tol;
}

KrausInstrument sequential_compose(const KrausInstrument& first,
                                   const KrausInstrument& second) {
  if (first.dim() != second.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "system dims differ");
  }
  std::vector<std::string> labels;
  std::vector<std::vector<cmat>> kraus;
  for (std::size_t a = 0; a < first.space().size(); ++a) {
    for (std::size_t b = 0; b < second.space().size(); ++b) {
      labels.push_back(first.space().label(a) + "," + second.space().label(b));
      std::vector<cmat> list;
      for (const cmat& ka : first[a]) {
        for (const cmat& kb : second[b]) list.push_back(kb * ka);
      }
      kraus.push_back(std::move(list));
    }
  }
  return KrausInstrument(OutcomeSpace(std::move(labels)), first.dim(),
                         std::move(kraus));
}

}  // namespace qmeas
