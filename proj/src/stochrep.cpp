#include "qmeas/stochrep.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace qmeas {

namespace {

void check_support(const FiniteMeasure& base, const std::vector<int>& dims) {
  if (dims.size() != base.space().size()) {
    throw Error(ErrorKind::DimensionMismatch, "dimension function and outcome space differ");
  }
  for (std::size_t a = 0; a < dims.size(); ++a) {
    if ((base[a] > 0.0) != (dims[a] > 0)) {
      throw Error(ErrorKind::UnsupportedMeasure,
                  "N(w) > 0 must hold exactly where the base measure is positive (atom " +
                      base.space().label(a) + ")");
    }
  }
}

}  // namespace

OrthonormalityDeviation sr_orthonormality(const std::vector<ChannelProfile>& beta,
                                          const FiniteMeasure& base,
                                          const ChannelTable<cplx>& q,
                                          const ChannelTable<cmat>& w,
                                          Eigen::Index dim_s) {
  OrthonormalityDeviation dev;
  const cmat id = cmat::Identity(dim_s, dim_s);
  for (std::size_t j = 0; j < beta.size(); ++j) {
    for (int p = 0; p < q.multiplicity(j); ++p) {
      for (std::size_t i = 0; i < beta.size(); ++i) {
        for (int k = 0; k < q.multiplicity(i); ++k) {
          cplx sc = 0.0;
          cmat op = cmat::Zero(dim_s, dim_s);
          for (std::size_t a = 0; a < q.atoms(); ++a) {
            for (int n = 0; n < q.dim(a); ++n) {
              sc += std::conj(q(j, p, a, n)) * q(i, k, a, n) * base[a];
              op.noalias() += w(j, p, a, n).adjoint() * w(i, k, a, n) * base[a];
            }
          }
          const double want = (i == j && k == p) ? 1.0 : 0.0;
          dev.scalar_relation = std::max(dev.scalar_relation, std::abs(sc - want));
          dev.operator_relation = std::max(dev.operator_relation, max_abs_diff(op, want * id));
        }
      }
    }
  }
  return dev;
}

StochasticRealization::StochasticRealization(std::vector<ChannelProfile> beta,
                                             FiniteMeasure base, ChannelTable<cplx> q,
                                             ChannelTable<cmat> w, Eigen::Index dim_s,
                                             double tol)
    : beta_(std::move(beta)),
      base_(std::move(base)),
      q_(std::move(q)),
      w_(std::move(w)),
      dim_s_(dim_s) {
  if (dim_s_ < 1) throw Error(ErrorKind::DimensionMismatch, "system dim must be >= 1");
  if (beta_.empty()) throw Error(ErrorKind::WeightMismatch, "no channels");
  if (q_.channels() != beta_.size() || q_.multiplicities() != w_.multiplicities() ||
      q_.dims() != w_.dims()) {
    throw Error(ErrorKind::DimensionMismatch, "q and W tables disagree in shape");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    if (!(beta_[i].weight > 0.0) || beta_[i].multiplicity != q_.multiplicity(i)) {
      throw Error(ErrorKind::WeightMismatch, "channel weights must be positive and match k");
    }
    total += beta_[i].weight * beta_[i].multiplicity;
  }
  if (std::abs(total - 1.0) > tol) {
    throw Error(ErrorKind::WeightMismatch, "sum of beta k must be one");
  }
  check_support(base_, q_.dims());
  w_.for_each([&](auto, auto, auto, auto, const cmat& m) {
    if (m.rows() != dim_s_ || m.cols() != dim_s_) {
      throw Error(ErrorKind::DimensionMismatch, "W operator shape");
    }
  });
  const OrthonormalityDeviation dev = sr_orthonormality(beta_, base_, q_, w_, dim_s_);
  if (dev.scalar_relation > tol) {
    throw Error(ErrorKind::NotOrthonormal,
                "scalar densities deviate by " + std::to_string(dev.scalar_relation));
  }
  if (dev.operator_relation > tol) {
    throw Error(ErrorKind::NotOrthonormal,
                "operator family deviates by " + std::to_string(dev.operator_relation));
  }
}

StochasticRealization from_realization(const StatisticalRealization& g,
                                       double cluster_tol) {
  VQFamily vq = extract_vq(g, canonicalize(g), cluster_tol);
  return StochasticRealization(std::move(vq.profile), std::move(vq.base), std::move(vq.q),
                               std::move(vq.v), g.dim_s());
}

KrausInstrument instrument_of_sr(const StochasticRealization& sr, double tol) {
  const OrthonormalityDeviation dev =
      sr_orthonormality(sr.beta(), sr.base(), sr.q(), sr.w(), sr.dim_s());
  if (dev.scalar_relation > tol || dev.operator_relation > tol) {
    throw Error(ErrorKind::NotOrthonormal, "stochastic realization is not orthonormal");
  }
  std::vector<std::vector<cmat>> kraus(sr.space().size());
  sr.w().for_each([&](std::size_t i, int, std::size_t a, int, const cmat& op) {
    kraus[a].push_back(std::sqrt(sr.beta()[i].weight * sr.base()[a]) * op);
  });
  return KrausInstrument(sr.space(), sr.dim_s(), std::move(kraus));
}

namespace {

void check_gauge(const Gauge& g, const StochasticRealization& sr, double tol) {
  if (g.z.size() != sr.space().size() || g.j.size() != sr.channels()) {
    throw Error(ErrorKind::DimensionMismatch, "one z per atom and one J per channel");
  }
  auto check = [tol](const cmat& m, int size, const char* what) {
    if (m.rows() != size || m.cols() != size) {
      throw Error(ErrorKind::DimensionMismatch, std::string(what) + " has the wrong size");
    }
    if (size > 0 && unitarity_deviation(m) > tol) {
      throw Error(ErrorKind::NotUnitaryMatrix, std::string(what) + " is not unitary");
    }
  };
  for (std::size_t a = 0; a < g.z.size(); ++a) check(g.z[a], sr.dims()[a], "z");
  for (std::size_t i = 0; i < g.j.size(); ++i) check(g.j[i], sr.beta()[i].multiplicity, "J");
}

template <typename T>
ChannelTable<T> mix(const ChannelTable<T>& src, const Gauge& g, const rvec& ratio,
                    cplx factor, const T& zero) {
  ChannelTable<T> out(src.multiplicities(), src.dims(), zero);
  for (std::size_t i = 0; i < src.channels(); ++i) {
    const int kk = src.multiplicity(i);
    for (std::size_t a = 0; a < src.atoms(); ++a) {
      const int nn = src.dim(a);
      for (int k = 0; k < kk; ++k) {
        for (int n = 0; n < nn; ++n) {
          T acc = zero;
          for (int p = 0; p < kk; ++p) {
            for (int m = 0; m < nn; ++m) {
              acc += (g.z[a](n, m) * g.j[i](k, p)) * src(i, p, a, m);
            }
          }
          out(i, k, a, n) = (factor * ratio(a)) * acc;
        }
      }
    }
  }
  return out;
}

}  // namespace

StochasticRealization apply_transform(const StochasticRealization& sr,
                                      const GaugeTransform& t, double tol) {
  check_gauge(t.gauge, sr, tol);
  if (t.operator_gauge) check_gauge(*t.operator_gauge, sr, tol);

  const std::size_t atoms = sr.space().size();
  rvec ratio = rvec::Ones(static_cast<Eigen::Index>(atoms));
  FiniteMeasure base = sr.base();
  if (t.new_base) {
    if (!(t.new_base->space() == sr.space())) {
      throw Error(ErrorKind::IncompatibleOutcomeSpaces, "new base on another outcome space");
    }
    for (std::size_t a = 0; a < atoms; ++a) {
      const double old_w = sr.base()[a];
      const double new_w = (*t.new_base)[a];
      if ((old_w > 0.0) != (new_w > 0.0)) {
        throw Error(ErrorKind::NotAbsolutelyContinuous,
                    "new base measure has a different null set");
      }
      ratio(a) = old_w > 0.0 ? std::sqrt(old_w / new_w) : 0.0;
    }
    base = *t.new_base;
  }
  const Eigen::Index ds = sr.dim_s();
  ChannelTable<cplx> q = mix(sr.q(), t.gauge, ratio, cplx(1.0), cplx(0.0));
  ChannelTable<cmat> w = mix(sr.w(), t.operator_gauge ? *t.operator_gauge : t.gauge, ratio,
                             std::polar(1.0, t.phase), cmat(cmat::Zero(ds, ds)));
  return StochasticRealization(sr.beta(), std::move(base), std::move(q), std::move(w), ds,
                               tol);
}

// ---------------------------------------------------------------------------

ChannelDensities::ChannelDensities(FiniteMeasure base, std::size_t channels,
                                   std::vector<cvec> table)
    : base_(std::move(base)), channels_(channels), table_(std::move(table)) {
  if (table_.size() != channels_ * channels_) {
    throw Error(ErrorKind::DimensionMismatch, "density table must be channels x channels");
  }
  for (const cvec& v : table_) {
    if (v.size() != static_cast<Eigen::Index>(base_.space().size())) {
      throw Error(ErrorKind::DimensionMismatch, "density per atom required");
    }
  }
}

double ChannelDensities::orthonormality_deviation() const {
  double worst = 0.0;
  const cvec nu = base_.weights().cast<cplx>();
  for (std::size_t j = 0; j < channels_; ++j) {
    for (std::size_t i = 0; i < channels_; ++i) {
      const cplx s = (*this)(j, i).cwiseProduct(nu).sum();
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

double ChannelDensities::min_diagonal() const {
  double lowest = 0.0;
  for (std::size_t i = 0; i < channels_; ++i) {
    lowest = std::min(lowest, diagonal(i).minCoeff());
  }
  return lowest;
}

ChannelDensities channel_densities(const ChannelTable<cplx>& q, const FiniteMeasure& base) {
  const std::size_t c = q.channels();
  const Eigen::Index atoms = static_cast<Eigen::Index>(q.atoms());
  std::vector<cvec> table(c * c, cvec::Zero(atoms));
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < c; ++i) {
      cvec& p = table[j * c + i];
      const int shared = std::min(q.multiplicity(i), q.multiplicity(j));
      for (Eigen::Index a = 0; a < atoms; ++a) {
        cplx s = 0.0;
        for (int k = 0; k < shared; ++k) {
          for (int n = 0; n < q.dim(a); ++n) s += std::conj(q(j, k, a, n)) * q(i, k, a, n);
        }
        p(a) = s / static_cast<double>(q.multiplicity(i));
      }
    }
  }
  return ChannelDensities(base, c, std::move(table));
}

SrInvariants sr_invariants(const StochasticRealization& sr) {
  const std::size_t atoms = sr.space().size();
  const Eigen::Index ds = sr.dim_s();
  SrInvariants inv{sr.base().support(), sr.dims(), sr.beta(),
                   channel_densities(sr.q(), sr.base()), {}, rvec::Zero(atoms),
                   {}, std::vector<cmat>(atoms, cmat::Zero(ds, ds))};
  for (std::size_t i = 0; i < sr.channels(); ++i) {
    const int kk = sr.beta()[i].multiplicity;
    rvec measure = rvec::Zero(static_cast<Eigen::Index>(atoms));
    std::vector<cmat> theta(atoms, cmat::Zero(ds, ds));
    for (std::size_t a = 0; a < atoms; ++a) {
      for (int k = 0; k < kk; ++k) {
        for (int n = 0; n < sr.dims()[a]; ++n) {
          const cplx q = sr.q()(i, k, a, n);
          measure(a) += std::norm(q) * sr.base()[a];
          theta[a] += sr.w()(i, k, a, n) * std::conj(q) * sr.base()[a];
        }
      }
      measure(a) /= kk;
      theta[a] /= static_cast<double>(kk);
      const double weight = sr.beta()[i].weight * kk;
      inv.total_measure(a) += weight * measure(a);
      inv.total_theta[a] += weight * theta[a];
    }
    inv.channel_measures.push_back(std::move(measure));
    inv.channel_theta.push_back(std::move(theta));
  }
  return inv;
}

namespace {

InvariantSet as_invariant_set(const SrInvariants& s) {
  std::vector<std::size_t> order(s.beta.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return s.beta[x].weight > s.beta[y].weight;
  });
  InvariantSet out;
  out.support = s.support;
  out.multiplicity = s.dims;
  out.total_measure = s.total_measure;
  out.total_theta = s.total_theta;
  for (std::size_t i : order) {
    out.profile.push_back(s.beta[i]);
    out.channel_measures.push_back(s.channel_measures[i]);
    out.channel_theta.push_back(s.channel_theta[i]);
  }
  return out;
}

}  // namespace

InvariantComparison compare_sr(const StochasticRealization& a,
                               const StochasticRealization& b, double tol,
                               double cluster_tol) {
  if (!(a.space() == b.space()) || a.dim_s() != b.dim_s()) {
    throw Error(ErrorKind::IncompatibleOutcomeSpaces,
                "stochastic realizations differ in outcome space or system dim");
  }
  return compare_invariants(as_invariant_set(sr_invariants(a)),
                            as_invariant_set(sr_invariants(b)), tol, cluster_tol);
}

bool equivalent(const StochasticRealization& a, const StochasticRealization& b,
                double tol) {
  return compare_sr(a, b, tol).equal;
}

// ---------------------------------------------------------------------------

QuantumStochasticRep::QuantumStochasticRep(std::vector<ChannelProfile> profile,
                                           std::vector<std::vector<cmat>> pi,
                                           ChannelDensities densities, Eigen::Index dim_s,
                                           double tol)
    : profile_(std::move(profile)),
      pi_(std::move(pi)),
      densities_(std::move(densities)),
      dim_s_(dim_s) {
  const std::size_t atoms = densities_.base().space().size();
  if (profile_.empty() || pi_.size() != profile_.size() ||
      densities_.channels() != profile_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "profile, Pi table and densities disagree");
  }
  double total = 0.0;
  for (const auto& p : profile_) {
    if (!(p.weight > 0.0) || p.multiplicity < 1) {
      throw Error(ErrorKind::WeightMismatch, "channel weights must be positive");
    }
    total += p.weight * p.multiplicity;
  }
  if (std::abs(total - 1.0) > tol) {
    throw Error(ErrorKind::WeightMismatch, "sum of alpha k must be one");
  }
  for (const auto& row : pi_) {
    if (row.size() != atoms) throw Error(ErrorKind::DimensionMismatch, "Pi per atom required");
    for (const cmat& m : row) {
      if (m.rows() != dim_s_ || m.cols() != dim_s_) {
        throw Error(ErrorKind::DimensionMismatch, "Pi operator shape");
      }
    }
  }
  for (std::size_t i = 0; i < profile_.size(); ++i) {
    channel_measures_.push_back(
        densities_.diagonal(i).cwiseProduct(densities_.base().weights()));
    if (std::abs(channel_measures_.back().sum() - 1.0) > tol) {
      throw Error(ErrorKind::NotOrthonormal, "channel measure is not a probability measure");
    }
  }
  if (densities_.min_diagonal() < -tol) {
    throw Error(ErrorKind::NotOrthonormal, "negative diagonal density");
  }
  const double dev = orthonormality_deviation();
  if (dev > tol) {
    throw Error(ErrorKind::NotOrthonormal,
                "joint orthonormality deviates by " + std::to_string(dev));
  }
}

double QuantumStochasticRep::orthonormality_deviation() const {
  const cmat id = cmat::Identity(dim_s_, dim_s_);
  const auto& nu = densities_.base();
  double worst = 0.0;
  for (std::size_t j = 0; j < channels(); ++j) {
    for (std::size_t i = 0; i < channels(); ++i) {
      cmat acc = cmat::Zero(dim_s_, dim_s_);
      for (std::size_t a = 0; a < nu.space().size(); ++a) {
        acc.noalias() += pi_[j][a].adjoint() * pi_[i][a] * (densities_(j, i)(a) * nu[a]);
      }
      worst = std::max(worst, max_abs_diff(acc, (i == j ? 1.0 : 0.0) * id));
    }
  }
  return worst;
}

KrausInstrument qsr_instrument(const QuantumStochasticRep& qsr) {
  std::vector<std::vector<cmat>> kraus(qsr.space().size());
  for (std::size_t i = 0; i < qsr.channels(); ++i) {
    for (std::size_t a = 0; a < kraus.size(); ++a) {
      const double mass = qsr.channel_measure(i)(a);
      if (mass <= 0.0) continue;
      kraus[a].push_back(std::sqrt(qsr.channel_weight(i) * mass) * qsr.pi(i, a));
    }
  }
  return KrausInstrument(qsr.space(), qsr.dim_s(), std::move(kraus));
}

FactorizeResult factorize(const StochasticRealization& sr, double tol) {
  const Eigen::Index ds = sr.dim_s();
  const std::size_t atoms = sr.space().size();
  double global = 0.0;
  sr.w().for_each([&](auto, auto, auto, auto, const cmat& m) {
    global = std::max(global, max_abs(m));
  });

  ChannelTable<cplx> qf = sr.q();
  std::vector<std::vector<cmat>> pi(sr.channels(),
                                    std::vector<cmat>(atoms, cmat::Zero(ds, ds)));
  for (std::size_t i = 0; i < sr.channels(); ++i) {
    const int kk = sr.beta()[i].multiplicity;
    for (std::size_t a = 0; a < atoms; ++a) {
      const int nn = sr.dims()[a];
      if (nn == 0) continue;
      const int count = kk * nn;
      cmat stack(ds * ds, count);
      cvec q(count);
      for (int k = 0; k < kk; ++k) {
        for (int n = 0; n < nn; ++n) {
          stack.col(k * nn + n) = vectorize(sr.w()(i, k, a, n));
          q(k * nn + n) = sr.q()(i, k, a, n);
        }
      }
      const double local = max_abs(stack);
      // W vanishes here: Pi = 0 and the densities stay as given
      if (local <= tol * std::max(global, 1.0)) continue;

      const Eigen::VectorXd sv =
          Eigen::SelfAdjointEigenSolver<cmat>(stack.adjoint() * stack).eigenvalues();
      if (count > 1 && sv(count - 2) > tol * sv(count - 1)) {
        return NotFactorizable{i, a, "operators are not multiples of a common operator"};
      }
      const double mass = q.squaredNorm();
      if (mass <= tol * tol) {
        return NotFactorizable{i, a, "densities vanish where the operators do not"};
      }
      cvec fit = stack * q.conjugate() / mass;
      const double residual = max_abs(stack - fit * q.transpose());
      if (residual > tol * std::max(local, 1.0)) {
        return NotFactorizable{i, a, "operators are not proportional to the densities"};
      }
      const double top = max_abs(fit);
      cplx lead = 0.0;
      cmat op(ds, ds);
      for (Eigen::Index r = 0; r < ds; ++r) {
        for (Eigen::Index c = 0; c < ds; ++c) op(r, c) = fit(c * ds + r);
      }
      for (Eigen::Index idx = 0; idx < ds * ds && lead == 0.0; ++idx) {
        const cplx x = op(idx / ds, idx % ds);
        if (std::abs(x) >= (1.0 - 1e-9) * top) lead = x / std::abs(x);
      }
      pi[i][a] = std::conj(lead) * op;
      for (int k = 0; k < kk; ++k) {
        for (int n = 0; n < nn; ++n) qf(i, k, a, n) *= lead;
      }
    }
  }

  try {
    QuantumStochasticRep qsr(sr.beta(), std::move(pi), channel_densities(qf, sr.base()), ds,
                             std::max(tol, kIdentityTol));
    if (choi_distance(qsr_instrument(qsr), instrument_of_sr(sr, std::max(tol, kIdentityTol))) >
        std::max(tol, kIdentityTol)) {
      return NotFactorizable{0, 0, "factorized form does not reproduce the instrument"};
    }
    return qsr;
  } catch (const Error& e) {
    return NotFactorizable{0, 0, e.what()};
  }
}

StochasticRealization product_density_realization(const StatisticalRealization& g,
                                                  double cluster_tol) {
  const CanonicalForm cf = canonicalize(g);
  const VQFamily vq = extract_vq(g, cf, cluster_tol);
  const std::vector<std::size_t> support = cf.support();
  const std::size_t m = support.size();

  std::vector<ChannelProfile> beta;
  std::vector<std::pair<std::size_t, int>> source;
  for (std::size_t i = 0; i < vq.profile.size(); ++i) {
    for (int k = 0; k < vq.profile[i].multiplicity; ++k) {
      beta.push_back({vq.profile[i].weight, 1});
      source.emplace_back(i, k);
    }
  }
  if (beta.size() > m) {
    throw Error(ErrorKind::DimensionTooSmall, "more ancilla eigenvectors than support atoms");
  }
  const Eigen::Index ds = g.dim_s();
  std::vector<int> ones(beta.size(), 1);
  ChannelTable<cplx> q(ones, cf.dims, cplx(0.0));
  ChannelTable<cmat> w(ones, cf.dims, cmat::Zero(ds, ds));
  for (std::size_t c = 0; c < beta.size(); ++c) {
    const auto [i, k] = source[c];
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t a = support[s];
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c * s) /
                           static_cast<double>(m);
      const cplx f = std::polar(1.0 / std::sqrt(m * cf.base[a]), angle);
      const double g_n = 1.0 / std::sqrt(static_cast<double>(cf.dims[a]));
      for (int n = 0; n < cf.dims[a]; ++n) {
        q(c, 0, a, n) = f * g_n;
        w(c, 0, a, n) = vq.v(i, k, a, n);
      }
    }
  }
  return StochasticRealization(std::move(beta), cf.base, std::move(q), std::move(w), ds);
}

}  // namespace qmeas
