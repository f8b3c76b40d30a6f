#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "qmeas/core.hpp"

namespace qmeas {

/// Weight of one channel (a distinct ancilla eigenvalue or a stochastic
/// weight) together with its multiplicity.
struct ChannelProfile {
  double weight;
  int multiplicity;
};

/// Values indexed by (channel i, copy k < multiplicity(i), atom, n < dim(atom)).
/// Atoms with dim 0 carry no entries.
template <typename T>
class ChannelTable {
 public:
  ChannelTable() = default;
  ChannelTable(std::vector<int> multiplicities, std::vector<int> dims, T fill)
      : multiplicities_(std::move(multiplicities)), dims_(std::move(dims)) {
    channel_offsets_.assign(multiplicities_.size() + 1, 0);
    for (std::size_t i = 0; i < multiplicities_.size(); ++i) {
      channel_offsets_[i + 1] = channel_offsets_[i] + multiplicities_[i];
    }
    atom_offsets_.assign(dims_.size() + 1, 0);
    for (std::size_t a = 0; a < dims_.size(); ++a) {
      atom_offsets_[a + 1] = atom_offsets_[a] + dims_[a];
    }
    data_.assign(static_cast<std::size_t>(channel_offsets_.back()) *
                     static_cast<std::size_t>(atom_offsets_.back()),
                 fill);
  }

  std::size_t channels() const { return multiplicities_.size(); }
  int multiplicity(std::size_t i) const { return multiplicities_[i]; }
  const std::vector<int>& multiplicities() const { return multiplicities_; }
  std::size_t atoms() const { return dims_.size(); }
  int dim(std::size_t atom) const { return dims_[atom]; }
  const std::vector<int>& dims() const { return dims_; }

  T& operator()(std::size_t i, int k, std::size_t atom, int n) {
    return data_[index(i, k, atom, n)];
  }
  const T& operator()(std::size_t i, int k, std::size_t atom, int n) const {
    return data_[index(i, k, atom, n)];
  }

  bool same_shape(const ChannelTable& other) const {
    return multiplicities_ == other.multiplicities_ && dims_ == other.dims_;
  }

  /// Calls f(i, k, atom, n, value) in storage order.
  template <typename F>
  void for_each(F&& f) const {
    for (std::size_t i = 0; i < channels(); ++i)
      for (int k = 0; k < multiplicities_[i]; ++k)
        for (std::size_t a = 0; a < dims_.size(); ++a)
          for (int n = 0; n < dims_[a]; ++n) f(i, k, a, n, (*this)(i, k, a, n));
  }

 private:
  std::size_t index(std::size_t i, int k, std::size_t atom, int n) const {
    const std::size_t row = static_cast<std::size_t>(channel_offsets_[i] + k);
    return row * static_cast<std::size_t>(atom_offsets_.back()) +
           static_cast<std::size_t>(atom_offsets_[atom] + n);
  }

  std::vector<int> multiplicities_;
  std::vector<int> dims_;
  std::vector<int> channel_offsets_;
  std::vector<int> atom_offsets_;
  std::vector<T> data_;
};

}  // namespace qmeas
