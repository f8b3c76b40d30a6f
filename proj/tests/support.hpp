// Random generators and fixtures shared by the test binaries.
#pragma once

#include <random>
#include <vector>

#include "qmeas/instrument.hpp"
#include "qmeas/measurement.hpp"
#include "qmeas/realization.hpp"
#include "qmeas/stochrep.hpp"

namespace qmeas::testing {

using Rng = std::mt19937_64;

cmat random_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols);
cmat random_unitary(Rng& rng, Eigen::Index d);
cvec random_unit_vector(Rng& rng, Eigen::Index d);
cmat random_density(Rng& rng, Eigen::Index d);
cmat random_hermitian(Rng& rng, Eigen::Index d);

/// d_S in [1, 3], 1 to 3 atoms, 0 to 2 Kraus operators each (at least one
/// overall), complete by construction.
KrausInstrument random_instrument(Rng& rng);
KrausInstrument random_instrument(Rng& rng, Eigen::Index dim, std::size_t atoms,
                                  int max_kraus);
/// d_S in [1, 3], 1 to 3 atoms, at most one Kraus operator per atom. Its
/// invariant-mode dilation is always factorizable.
KrausInstrument random_factorizable_instrument(Rng& rng);
/// One Kraus operator per atom.
KrausInstrument random_single_kraus_instrument(Rng& rng, Eigen::Index dim,
                                               std::size_t atoms);

/// Random ancilla state (with a degenerate pair when d_K allows), random PVM
/// grouped from a random unitary, random joint unitary.
StatisticalRealization random_realization(Rng& rng);

/// Rank-one pointer atoms (one per ancilla dimension) and a random mixed
/// ancilla state: single-copy channels with N(w) = 1 everywhere.
StatisticalRealization rank_one_mixed(Rng& rng, Eigen::Index ds, Eigen::Index dk);

OutcomeSpace labels(std::size_t n);

KrausInstrument fix_z();
KrausInstrument fix_ad();
KrausInstrument fix_iso();
cvec psi_plus();
cmat hadamard();

/// Factorized representation of an instrument through its invariant-mode
/// dilation. Fails the calling test when not factorizable.
QuantumStochasticRep qsr_of(const KrausInstrument& t);

/// Random gauge transform: z, J and phase, optionally with a rescaled base.
GaugeTransform random_gauge(Rng& rng, const StochasticRealization& sr, bool rescale);

}  // namespace qmeas::testing
