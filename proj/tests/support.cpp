#include "support.hpp"

#include <cmath>
#include <stdexcept>

namespace qmeas::testing {

cmat random_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  cmat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = cplx(n(rng), n(rng));
  }
  return m;
}

cmat random_unitary(Rng& rng, Eigen::Index d) {
  Eigen::HouseholderQR<cmat> qr(random_gaussian(rng, d, d));
  cmat q = qr.householderQ() * cmat::Identity(d, d);
  const cmat r = qr.matrixQR();
  for (Eigen::Index j = 0; j < d; ++j) {
    const cplx x = r(j, j);
    q.col(j) *= std::abs(x) > 0.0 ? x / std::abs(x) : cplx(1.0);
  }
  return q;
}

cvec random_unit_vector(Rng& rng, Eigen::Index d) {
  cvec v = random_gaussian(rng, d, 1);
  return v / v.norm();
}

cmat random_density(Rng& rng, Eigen::Index d) {
  const cmat g = random_gaussian(rng, d, d);
  cmat rho = g * g.adjoint();
  return rho / rho.trace().real();
}

cmat random_hermitian(Rng& rng, Eigen::Index d) {
  const cmat g = random_gaussian(rng, d, d);
  return 0.5 * (g + g.adjoint());
}

OutcomeSpace labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("w" + std::to_string(i));
  return OutcomeSpace(out);
}

KrausInstrument random_instrument(Rng& rng, Eigen::Index dim, std::size_t atoms,
                                  int max_kraus) {
  std::uniform_int_distribution<int> count(0, max_kraus);
  std::vector<int> per_atom(atoms);
  int total = 0;
  for (auto& c : per_atom) {
    c = count(rng);
    total += c;
  }
  if (total == 0) {
    per_atom[0] = 1;
    total = 1;
  }
  // an isometry C^d -> C^{d L} split into L blocks is a complete Kraus family
  Eigen::HouseholderQR<cmat> qr(random_gaussian(rng, dim * total, dim));
  const cmat iso = qr.householderQ() * cmat::Identity(dim * total, dim);
  std::vector<std::vector<cmat>> kraus(atoms);
  int block = 0;
  for (std::size_t a = 0; a < atoms; ++a) {
    for (int m = 0; m < per_atom[a]; ++m, ++block) {
      kraus[a].push_back(iso.middleRows(block * dim, dim));
    }
  }
  return KrausInstrument(labels(atoms), dim, std::move(kraus));
}

KrausInstrument random_instrument(Rng& rng) {
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<int> atoms(1, 3);
  const int d = dim(rng);
  const int m = atoms(rng);
  return random_instrument(rng, d, static_cast<std::size_t>(m), 2);
}

KrausInstrument random_factorizable_instrument(Rng& rng) {
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<int> atoms(1, 3);
  const int d = dim(rng);
  const int m = atoms(rng);
  return random_instrument(rng, d, static_cast<std::size_t>(m), 1);
}

KrausInstrument random_single_kraus_instrument(Rng& rng, Eigen::Index dim,
                                               std::size_t atoms) {
  Eigen::HouseholderQR<cmat> qr(random_gaussian(rng, dim * static_cast<Eigen::Index>(atoms), dim));
  const cmat iso = qr.householderQ() * cmat::Identity(dim * static_cast<Eigen::Index>(atoms), dim);
  std::vector<std::vector<cmat>> kraus(atoms);
  for (std::size_t a = 0; a < atoms; ++a) {
    kraus[a].push_back(iso.middleRows(static_cast<Eigen::Index>(a) * dim, dim));
  }
  return KrausInstrument(labels(atoms), dim, std::move(kraus));
}

StatisticalRealization random_realization(Rng& rng) {
  std::uniform_int_distribution<int> ds_dist(1, 3);
  std::uniform_int_distribution<int> dk_dist(2, 4);
  const Eigen::Index ds = ds_dist(rng);
  const Eigen::Index dk = dk_dist(rng);
  std::uniform_int_distribution<int> atom_dist(1, static_cast<int>(dk));
  const std::size_t atoms = static_cast<std::size_t>(atom_dist(rng));

  // spectrum with a repeated eigenvalue when possible, one zero when d_K > 2
  std::uniform_real_distribution<double> u(0.1, 1.0);
  rvec spectrum(dk);
  for (Eigen::Index i = 0; i < dk; ++i) spectrum(i) = u(rng);
  if (dk >= 3) spectrum(1) = spectrum(0);
  if (dk >= 4) spectrum(dk - 1) = 0.0;
  spectrum /= spectrum.sum();
  const cmat basis = random_unitary(rng, dk);
  cmat state = basis * spectrum.cast<cplx>().asDiagonal() * basis.adjoint();
  state = 0.5 * (state + state.adjoint());

  // each atom gets at least one basis vector of another random unitary
  const cmat frame = random_unitary(rng, dk);
  std::vector<cmat> projections(atoms, cmat::Zero(dk, dk));
  std::uniform_int_distribution<std::size_t> pick(0, atoms - 1);
  for (Eigen::Index c = 0; c < dk; ++c) {
    const std::size_t a = c < static_cast<Eigen::Index>(atoms) ? static_cast<std::size_t>(c)
                                                               : pick(rng);
    projections[a] += frame.col(c) * frame.col(c).adjoint();
  }
  return StatisticalRealization(ds, DensityOperator(state),
                                ProjectionValuedMeasure(labels(atoms), projections),
                                UnitaryOperator(random_unitary(rng, ds * dk)));
}

StatisticalRealization rank_one_mixed(Rng& rng, Eigen::Index ds, Eigen::Index dk) {
  const cmat frame = random_unitary(rng, dk);
  std::vector<cmat> p;
  for (Eigen::Index c = 0; c < dk; ++c) p.push_back(frame.col(c) * frame.col(c).adjoint());
  return StatisticalRealization(ds, DensityOperator(random_density(rng, dk)),
                                ProjectionValuedMeasure(labels(static_cast<std::size_t>(dk)), p),
                                UnitaryOperator(random_unitary(rng, ds * dk)));
}

KrausInstrument fix_z() {
  cmat p0 = cmat::Zero(2, 2);
  cmat p1 = cmat::Zero(2, 2);
  p0(0, 0) = 1.0;
  p1(1, 1) = 1.0;
  return KrausInstrument(OutcomeSpace({"+1", "-1"}), 2, {{p0}, {p1}});
}

KrausInstrument fix_ad() {
  const double h = std::sqrt(0.5);
  cmat a0(2, 2);
  cmat a1(2, 2);
  a0 << 1.0, 0.0, 0.0, h;
  a1 << 0.0, h, 0.0, 0.0;
  return KrausInstrument(OutcomeSpace({"0", "1"}), 2, {{a0}, {a1}});
}

cmat hadamard() {
  const double h = std::sqrt(0.5);
  cmat m(2, 2);
  m << h, h, h, -h;
  return m;
}

KrausInstrument fix_iso() { return KrausInstrument(OutcomeSpace({"w0"}), 2, {{hadamard()}}); }

cvec psi_plus() {
  cvec v(2);
  v << std::sqrt(0.5), std::sqrt(0.5);
  return v;
}

QuantumStochasticRep qsr_of(const KrausInstrument& t) {
  FactorizeResult f = factorize(from_realization(dilate(t, DilationMode::Invariant)));
  if (auto* nf = std::get_if<NotFactorizable>(&f)) {
    throw std::runtime_error("fixture not factorizable: " + nf->reason);
  }
  return std::get<QuantumStochasticRep>(std::move(f));
}

GaugeTransform random_gauge(Rng& rng, const StochasticRealization& sr, bool rescale) {
  GaugeTransform t;
  for (int n : sr.dims()) t.gauge.z.push_back(n > 0 ? random_unitary(rng, n) : cmat(0, 0));
  for (const auto& b : sr.beta()) t.gauge.j.push_back(random_unitary(rng, b.multiplicity));
  std::uniform_real_distribution<double> angle(-3.0, 3.0);
  t.phase = angle(rng);
  if (rescale) {
    std::uniform_real_distribution<double> scale(0.2, 3.0);
    rvec w = sr.base().weights();
    for (Eigen::Index a = 0; a < w.size(); ++a) {
      if (w(a) > 0.0) w(a) *= scale(rng);
    }
    t.new_base = FiniteMeasure(sr.space(), w);
  }
  return t;
}

}  // namespace qmeas::testing
