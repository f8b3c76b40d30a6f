#include "qmeas/realization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qmeas {

StatisticalRealization::StatisticalRealization(Eigen::Index dim_s,
                                               DensityOperator state,
                                               ProjectionValuedMeasure pvm,
                                               UnitaryOperator unitary)
    : dim_s_(dim_s),
      state_(std::move(state)),
      pvm_(std::move(pvm)),
      unitary_(std::move(unitary)) {
  if (dim_s_ < 1) throw Error(ErrorKind::DimensionMismatch, "system dim must be >= 1");
  if (pvm_.dim() != state_.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "PVM and ancilla state dims differ");
  }
  if (unitary_.dim() != dim_s_ * state_.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "unitary must act on H_S (x) K");
  }
}

std::vector<std::size_t> CanonicalForm::support() const {
  std::vector<std::size_t> atoms;
  for (std::size_t a = 0; a < dims.size(); ++a) {
    if (dims[a] > 0) atoms.push_back(a);
  }
  return atoms;
}

cmat partial_element(const cmat& u, Eigen::Index dim_s, const cvec& bra,
                     const cvec& ket) {
  const Eigen::Index dk = bra.size();
  if (ket.size() != dk || u.rows() != dim_s * dk || u.cols() != dim_s * dk) {
    throw Error(ErrorKind::DimensionMismatch, "partial_element shapes");
  }
  const cmat id = cmat::Identity(dim_s, dim_s);
  return tensor_product(id, cmat(bra.adjoint())) * u * tensor_product(id, cmat(ket));
}

namespace {

/// Index of the first entry whose magnitude is within rounding of the maximum.
Eigen::Index leading_entry(const cvec& v) {
  const double top = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= top * (1.0 - 1e-12)) return i;
  }
  return 0;
}

Eigen::Index first_nonzero(const cvec& v, double tol) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > tol) return i;
  }
  return v.size();
}

cmat block_basis_of(const cmat& p, int rank) {
  const Eigen::Index dk = p.rows();
  cmat basis(dk, rank);
  int filled = 0;
  for (Eigen::Index j = 0; j < dk && filled < rank; ++j) {
    cvec v = p.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis.leftCols(filled) * (basis.leftCols(filled).adjoint() * v);
    }
    const double norm = v.norm();
    if (norm < kCompletionFloor) continue;
    v /= norm;
    const cplx lead = v(leading_entry(v));
    v *= std::conj(lead) / std::abs(lead);
    basis.col(filled++) = v;
  }
  if (filled != rank) {
    throw Error(ErrorKind::NotAProjectionFamily, "projection rank inconsistent");
  }
  std::vector<int> order(rank);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return first_nonzero(basis.col(x), 1e-12) < first_nonzero(basis.col(y), 1e-12);
  });
  cmat sorted(dk, rank);
  for (int c = 0; c < rank; ++c) sorted.col(c) = basis.col(order[c]);
  return sorted;
}

}  // namespace

CanonicalForm canonicalize(const StatisticalRealization& g,
                           const std::optional<FiniteMeasure>& nu, double tol) {
  const auto& pvm = g.pvm();
  const std::size_t atoms = pvm.space().size();
  const std::vector<int> dims = pvm.ranks();

  rvec weights(static_cast<Eigen::Index>(atoms));
  for (std::size_t a = 0; a < atoms; ++a) weights(a) = dims[a] > 0 ? 1.0 : 0.0;
  if (nu) {
    if (!(nu->space() == pvm.space())) {
      throw Error(ErrorKind::UnsupportedMeasure, "base measure on another outcome space");
    }
    for (std::size_t a = 0; a < atoms; ++a) {
      const bool charged = (*nu)[a] > 0.0;
      if (charged != (dims[a] > 0)) {
        throw Error(ErrorKind::UnsupportedMeasure,
                    "base measure type differs from the PVM at atom " +
                        pvm.space().label(a));
      }
    }
    weights = nu->weights();
  }

  std::vector<cmat> blocks;
  cmat all(g.dim_k(), g.dim_k());
  Eigen::Index col = 0;
  for (std::size_t a = 0; a < atoms; ++a) {
    blocks.push_back(block_basis_of(pvm[a], dims[a]));
    all.middleCols(col, dims[a]) = blocks.back();
    col += dims[a];
  }
  if (col != g.dim_k()) {
    throw Error(ErrorKind::NotAProjectionFamily, "multiplicities do not fill K");
  }
  cmat rotation = all.adjoint();
  if (unitarity_deviation(rotation) > tol) {
    throw Error(ErrorKind::NotAProjectionFamily, "block bases are not orthonormal");
  }
  return CanonicalForm{FiniteMeasure(pvm.space(), weights), dims, std::move(blocks),
                       std::move(rotation)};
}

VQFamily extract_vq(const StatisticalRealization& g, const CanonicalForm& cf,
                    double cluster_tol) {
  if (cf.dims.size() != g.space().size()) {
    throw Error(ErrorKind::DimensionMismatch, "canonical form from another PVM");
  }
  std::vector<ChannelProfile> profile;
  std::vector<cmat> eigenvectors;
  for (auto& cluster : spectral_decompose(g.state().matrix(), cluster_tol)) {
    if (cluster.eigenvalue <= cluster_tol) continue;
    profile.push_back({cluster.eigenvalue, cluster.multiplicity});
    eigenvectors.push_back(std::move(cluster.eigenvectors));
  }
  std::vector<int> mult;
  for (const auto& p : profile) mult.push_back(p.multiplicity);

  const Eigen::Index ds = g.dim_s();
  ChannelTable<cmat> v(mult, cf.dims, cmat::Zero(ds, ds));
  ChannelTable<cplx> q(mult, cf.dims, cplx(0.0));
  const cmat& u = g.unitary().matrix();
  for (std::size_t i = 0; i < profile.size(); ++i) {
    for (int k = 0; k < profile[i].multiplicity; ++k) {
      const cvec phi = eigenvectors[i].col(k);
      for (std::size_t a = 0; a < cf.dims.size(); ++a) {
        if (cf.dims[a] == 0) continue;
        const double scale = 1.0 / std::sqrt(cf.base[a]);
        for (int n = 0; n < cf.dims[a]; ++n) {
          const cvec e = cf.block_basis[a].col(n);
          v(i, k, a, n) = scale * partial_element(u, ds, e, phi);
          q(i, k, a, n) = scale * e.dot(phi);
        }
      }
    }
  }
  return VQFamily{cf.base, std::move(profile), std::move(eigenvectors), std::move(v),
                  std::move(q)};
}

OrthonormalityDeviation vq_orthonormality(const VQFamily& vq) {
  OrthonormalityDeviation dev;
  const auto& v = vq.v;
  if (v.channels() == 0) return dev;
  const Eigen::Index ds = [&] {
    Eigen::Index d = 0;
    v.for_each([&](auto, auto, auto, auto, const cmat& m) { d = m.rows(); });
    return d;
  }();
  const cmat id = cmat::Identity(ds, ds);
  for (std::size_t j = 0; j < v.channels(); ++j) {
    for (int p = 0; p < v.multiplicity(j); ++p) {
      for (std::size_t i = 0; i < v.channels(); ++i) {
        for (int k = 0; k < v.multiplicity(i); ++k) {
          cmat op = cmat::Zero(ds, ds);
          cplx sc = 0.0;
          for (std::size_t a = 0; a < v.atoms(); ++a) {
            const double w = vq.base[a];
            for (int n = 0; n < v.dim(a); ++n) {
              op += v(j, p, a, n).adjoint() * v(i, k, a, n) * w;
              sc += std::conj(vq.q(j, p, a, n)) * vq.q(i, k, a, n) * w;
            }
          }
          const bool diag = (i == j && k == p);
          dev.operator_relation =
              std::max(dev.operator_relation, max_abs_diff(op, diag ? id : cmat::Zero(ds, ds)));
          dev.scalar_relation =
              std::max(dev.scalar_relation, std::abs(sc - (diag ? 1.0 : 0.0)));
        }
      }
    }
  }
  return dev;
}

KrausInstrument instrument_of(const StatisticalRealization& g) {
  const VQFamily vq = extract_vq(g, canonicalize(g));
  std::vector<std::vector<cmat>> kraus(g.space().size());
  vq.v.for_each([&](std::size_t i, int, std::size_t a, int, const cmat& op) {
    kraus[a].push_back(std::sqrt(vq.profile[i].weight * vq.base[a]) * op);
  });
  return KrausInstrument(g.space(), g.dim_s(), std::move(kraus));
}

cmat heisenberg_map(const StatisticalRealization& g, std::size_t atom, const cmat& a) {
  const cmat& u = g.unitary().matrix();
  return partial_expectation(u.adjoint() * tensor_product(a, g.pvm()[atom]) * u,
                             g.state());
}

cmat theta_direct(const StatisticalRealization& g, const cmat& s, std::size_t atom) {
  const cmat id = cmat::Identity(g.dim_s(), g.dim_s());
  return partial_expectation(tensor_product(id, g.pvm()[atom]) * g.unitary().matrix(),
                             s);
}

InvariantSet invariants(const StatisticalRealization& g, double cluster_tol) {
  const CanonicalForm cf = canonicalize(g);
  const VQFamily vq = extract_vq(g, cf, cluster_tol);
  const std::size_t atoms = g.space().size();
  const Eigen::Index ds = g.dim_s();

  InvariantSet inv;
  inv.support = cf.support();
  inv.multiplicity = cf.dims;
  inv.profile = vq.profile;
  inv.total_measure = rvec::Zero(static_cast<Eigen::Index>(atoms));
  inv.total_theta.assign(atoms, cmat::Zero(ds, ds));
  for (std::size_t i = 0; i < vq.profile.size(); ++i) {
    const double k = vq.profile[i].multiplicity;
    const cmat s_i = vq.eigenvectors[i] * vq.eigenvectors[i].adjoint() / k;
    rvec measure(static_cast<Eigen::Index>(atoms));
    std::vector<cmat> theta(atoms, cmat::Zero(ds, ds));
    for (std::size_t a = 0; a < atoms; ++a) {
      measure(a) = (s_i * g.pvm()[a]).trace().real();
      for (int kk = 0; kk < vq.profile[i].multiplicity; ++kk) {
        for (int n = 0; n < cf.dims[a]; ++n) {
          theta[a] += vq.v(i, kk, a, n) * std::conj(vq.q(i, kk, a, n)) * cf.base[a];
        }
      }
      theta[a] /= k;
      const double w = vq.profile[i].weight * k;
      inv.total_measure(a) += w * measure(a);
      inv.total_theta[a] += w * theta[a];
    }
    inv.channel_measures.push_back(std::move(measure));
    inv.channel_theta.push_back(std::move(theta));
  }
  return inv;
}

InvariantComparison compare_invariants(const InvariantSet& a, const InvariantSet& b,
                                       double tol, double cluster_tol) {
  InvariantComparison out;
  if (a.support != b.support) {
    out.mismatch = "spectral support";
    return out;
  }
  if (a.multiplicity != b.multiplicity) {
    out.mismatch = "multiplicity function";
    return out;
  }
  if (a.profile.size() != b.profile.size()) {
    out.mismatch = "number of channels";
    return out;
  }
  for (std::size_t i = 0; i < a.profile.size(); ++i) {
    if (a.profile[i].multiplicity != b.profile[i].multiplicity ||
        std::abs(a.profile[i].weight - b.profile[i].weight) > cluster_tol) {
      out.mismatch = "eigenvalue profile";
      return out;
    }
  }
  for (std::size_t i = 0; i < a.channel_measures.size(); ++i) {
    out.measure_deviation = std::max(
        out.measure_deviation, max_abs_diff(a.channel_measures[i], b.channel_measures[i]));
  }
  out.measure_deviation =
      std::max(out.measure_deviation, max_abs_diff(a.total_measure, b.total_measure));

  // best single phase: arg of the total Frobenius inner product <a, b>
  cplx overlap = 0.0;
  for (std::size_t i = 0; i < a.channel_theta.size(); ++i) {
    for (std::size_t w = 0; w < a.channel_theta[i].size(); ++w) {
      overlap += (a.channel_theta[i][w].conjugate().cwiseProduct(b.channel_theta[i][w])).sum();
    }
  }
  out.phase = std::abs(overlap) > 0.0 ? std::arg(overlap) : 0.0;
  const cplx rot = std::polar(1.0, out.phase);
  for (std::size_t i = 0; i < a.channel_theta.size(); ++i) {
    for (std::size_t w = 0; w < a.channel_theta[i].size(); ++w) {
      out.theta_deviation = std::max(
          out.theta_deviation, max_abs_diff(rot * a.channel_theta[i][w], b.channel_theta[i][w]));
    }
  }
  for (std::size_t w = 0; w < a.total_theta.size(); ++w) {
    out.theta_deviation = std::max(out.theta_deviation,
                                   max_abs_diff(rot * a.total_theta[w], b.total_theta[w]));
  }
  out.equal = out.measure_deviation <= tol && out.theta_deviation <= tol;
  if (!out.equal) out.mismatch = "measure or operator tables";
  return out;
}

StatisticalRealization apply_unitary_equivalence(const StatisticalRealization& g,
                                                 const UnitaryOperator& w,
                                                 double phase) {
  if (w.dim() != g.dim_k()) {
    throw Error(ErrorKind::DimensionMismatch, "W must act on the ancilla space");
  }
  const cmat& wm = w.matrix();
  std::vector<cmat> projections;
  for (const cmat& p : g.pvm().projections()) projections.push_back(wm.adjoint() * p * wm);
  const cmat id = cmat::Identity(g.dim_s(), g.dim_s());
  const cmat u = std::polar(1.0, phase) * tensor_product(id, cmat(wm.adjoint())) *
                 g.unitary().matrix() * tensor_product(id, wm);
  return StatisticalRealization(
      g.dim_s(), DensityOperator(wm.adjoint() * g.state().matrix() * wm),
      ProjectionValuedMeasure(g.space(), std::move(projections)), UnitaryOperator(u));
}

UnitaryOperator unitary_from_isometry(Eigen::Index dim_s, const cmat& phi,
                                      const std::vector<cmat>& images, double tol) {
  const Eigen::Index dk = phi.rows();
  const Eigen::Index r = phi.cols();
  const Eigen::Index total = dim_s * dk;
  if (static_cast<Eigen::Index>(images.size()) != r) {
    throw Error(ErrorKind::DimensionMismatch, "one image block per ancilla column");
  }
  cmat block(total, r * dim_s);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (images[i].rows() != total || images[i].cols() != dim_s) {
      throw Error(ErrorKind::DimensionMismatch, "image block shape");
    }
    block.middleCols(i * dim_s, dim_s) = images[i];
  }
  const cmat y = complete_to_unitary(block, tol).matrix();
  const cmat q = complete_to_unitary(phi, tol).matrix();

  // column (i, b) of y goes to position b * dk + i; the rest fill in order
  cmat placed(total, total);
  std::vector<bool> used(static_cast<std::size_t>(total), false);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index b = 0; b < dim_s; ++b) {
      placed.col(b * dk + i) = y.col(i * dim_s + b);
      used[static_cast<std::size_t>(b * dk + i)] = true;
    }
  }
  Eigen::Index next = r * dim_s;
  for (Eigen::Index pos = 0; pos < total; ++pos) {
    if (!used[static_cast<std::size_t>(pos)]) placed.col(pos) = y.col(next++);
  }
  const cmat id = cmat::Identity(dim_s, dim_s);
  return UnitaryOperator(placed * tensor_product(id, cmat(q.adjoint())),
                         std::max(tol, 1e-10));
}

StatisticalRealization dilate(const KrausInstrument& t, DilationMode mode, double tol) {
  require_valid(t, tol);
  const Eigen::Index ds = t.dim();
  const Eigen::Index l = static_cast<Eigen::Index>(t.kraus_count());
  if (l < 1) throw Error(ErrorKind::DimensionTooSmall, "instrument has no Kraus operators");

  std::vector<cmat> projections;
  cmat image = cmat::Zero(ds * l, ds);
  Eigen::Index chi = 0;
  for (std::size_t a = 0; a < t.space().size(); ++a) {
    cmat p = cmat::Zero(l, l);
    for (const cmat& k : t[a]) {
      p(chi, chi) = 1.0;
      for (Eigen::Index x = 0; x < ds; ++x) image.row(x * l + chi) = k.row(x);
      ++chi;
    }
    projections.push_back(std::move(p));
  }
  cvec eta = cvec::Zero(l);
  if (mode == DilationMode::Minimal) {
    eta(0) = 1.0;
  } else {
    eta.setConstant(1.0 / std::sqrt(static_cast<double>(l)));
  }
  UnitaryOperator u = unitary_from_isometry(ds, cmat(eta), {image}, tol);
  return StatisticalRealization(ds, DensityOperator::pure(eta),
                                ProjectionValuedMeasure(t.space(), std::move(projections)),
                                std::move(u));
}

StatisticalRealization von_neumann_process(const OutcomeSpace& space,
                                           const std::vector<cmat>& projections,
                                           const cvec& eta, const cmat& pointers,
                                           double tol) {
  const Eigen::Index m = static_cast<Eigen::Index>(space.size());
  const Eigen::Index dk = pointers.rows();
  if (pointers.cols() != m || static_cast<Eigen::Index>(projections.size()) != m) {
    throw Error(ErrorKind::DimensionMismatch, "one pointer and projection per outcome");
  }
  if (dk < m) throw Error(ErrorKind::DimensionTooSmall, "d_K below outcome count");
  if (eta.size() != dk) throw Error(ErrorKind::DimensionMismatch, "eta not in K");
  if (max_abs_diff(pointers.adjoint() * pointers, cmat::Identity(m, m)) > tol) {
    throw Error(ErrorKind::PointerOverlap, "pointer states are not orthonormal");
  }
  if (std::abs(eta.norm() - 1.0) > tol) {
    throw Error(ErrorKind::InvalidState, "eta must be a unit vector");
  }
  const KrausInstrument vn = von_neumann_instrument(space, projections, tol);
  const Eigen::Index ds = vn.dim();

  cmat image = cmat::Zero(ds * dk, ds);
  for (Eigen::Index j = 0; j < m; ++j) {
    image += tensor_product(projections[j], cmat(pointers.col(j)));
  }
  std::vector<cmat> pvm;
  cmat rest = cmat::Identity(dk, dk);
  for (Eigen::Index j = 0; j < m; ++j) {
    pvm.push_back(pointers.col(j) * pointers.col(j).adjoint());
    rest -= pvm.back();
  }
  pvm.back() += rest;
  UnitaryOperator u = unitary_from_isometry(ds, cmat(eta), {image}, tol);
  return StatisticalRealization(ds, DensityOperator::pure(eta),
                                ProjectionValuedMeasure(space, std::move(pvm)),
                                std::move(u));
}

StatisticalRealization indirect_realization(const IndirectData& data, double tol) {
  const std::size_t channels = data.beta.size();
  const auto& q = data.q;
  const auto& v = data.v;
  if (channels == 0 || q.channels() != channels ||
      q.multiplicities() != v.multiplicities() || q.dims() != v.dims()) {
    throw Error(ErrorKind::WeightMismatch, "beta, q and v tables disagree in shape");
  }
  for (int k : q.multiplicities()) {
    if (k != 1) throw Error(ErrorKind::WeightMismatch, "indirect data is single-index");
  }
  double beta_sum = 0.0;
  for (double b : data.beta) {
    if (!(b > 0.0)) throw Error(ErrorKind::WeightMismatch, "beta must be positive");
    beta_sum += b;
  }
  if (std::abs(beta_sum - 1.0) > tol) {
    throw Error(ErrorKind::WeightMismatch, "beta must sum to one");
  }
  const std::size_t atoms = data.base.space().size();
  if (q.atoms() != atoms) {
    throw Error(ErrorKind::DimensionMismatch, "tables and base measure disagree");
  }
  for (std::size_t a = 0; a < atoms; ++a) {
    if ((data.base[a] > 0.0) != (q.dim(a) > 0)) {
      throw Error(ErrorKind::UnsupportedMeasure,
                  "dimension function and base measure have different supports");
    }
  }
  Eigen::Index ds = 0;
  v.for_each([&](auto, auto, auto, auto, const cmat& m) { ds = m.rows(); });
  if (ds == 0) throw Error(ErrorKind::DimensionMismatch, "empty operator table");

  // orthonormality of the scalar densities and of the products v q
  const cmat id = cmat::Identity(ds, ds);
  for (std::size_t j = 0; j < channels; ++j) {
    for (std::size_t i = 0; i < channels; ++i) {
      cplx sc = 0.0;
      cmat op = cmat::Zero(ds, ds);
      for (std::size_t a = 0; a < atoms; ++a) {
        for (int n = 0; n < q.dim(a); ++n) {
          sc += std::conj(q(j, 0, a, n)) * q(i, 0, a, n) * data.base[a];
          op += (v(j, 0, a, n) * q(j, 0, a, n)).adjoint() * (v(i, 0, a, n) * q(i, 0, a, n)) *
                data.base[a];
        }
      }
      const double want = i == j ? 1.0 : 0.0;
      if (std::abs(sc - want) > tol) {
        throw Error(ErrorKind::NotOrthonormal, "scalar densities are not orthonormal");
      }
      if (max_abs_diff(op, want * id) > tol) {
        throw Error(ErrorKind::NotOrthonormal, "operator family is not orthonormal");
      }
    }
  }

  std::vector<Eigen::Index> offset(atoms + 1, 0);
  for (std::size_t a = 0; a < atoms; ++a) offset[a + 1] = offset[a] + q.dim(a);
  const Eigen::Index dk = offset[atoms];
  if (dk < static_cast<Eigen::Index>(channels)) {
    throw Error(ErrorKind::DimensionTooSmall, "more channels than ancilla dimensions");
  }

  cmat phi = cmat::Zero(dk, static_cast<Eigen::Index>(channels));
  std::vector<cmat> images(channels, cmat::Zero(ds * dk, ds));
  for (std::size_t i = 0; i < channels; ++i) {
    for (std::size_t a = 0; a < atoms; ++a) {
      const double root = std::sqrt(data.base[a]);
      for (int n = 0; n < q.dim(a); ++n) {
        const Eigen::Index e = offset[a] + n;
        phi(e, static_cast<Eigen::Index>(i)) = q(i, 0, a, n) * root;
        const cmat w = v(i, 0, a, n) * q(i, 0, a, n) * root;
        for (Eigen::Index x = 0; x < ds; ++x) images[i].row(x * dk + e) = w.row(x);
      }
    }
  }
  cmat state = cmat::Zero(dk, dk);
  for (std::size_t i = 0; i < channels; ++i) {
    state += data.beta[i] * phi.col(i) * phi.col(i).adjoint();
  }
  std::vector<cmat> projections;
  for (std::size_t a = 0; a < atoms; ++a) {
    cmat p = cmat::Zero(dk, dk);
    for (int n = 0; n < q.dim(a); ++n) p(offset[a] + n, offset[a] + n) = 1.0;
    projections.push_back(std::move(p));
  }
  UnitaryOperator u = unitary_from_isometry(ds, phi, images, tol);
  return StatisticalRealization(ds, DensityOperator(state, tol),
                                ProjectionValuedMeasure(data.base.space(), std::move(projections)),
                                std::move(u));
}

}  // namespace qmeas
