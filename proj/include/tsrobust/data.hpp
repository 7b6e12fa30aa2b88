#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsrobust/errors.hpp"

namespace tsrobust {

// Labeled univariate series collection. All series share length k; labels
// are contiguous class indices in [0, num_classes).
struct Dataset {
  std::vector<double> series;  // n * k, row-major
  std::vector<int> labels;     // n
  int k = 0;
  int num_classes = 0;
  std::string split;  // "train" | "test"
  std::string name;

  int size() const { return static_cast<int>(labels.size()); }
  std::span<const double> row(int i) const {
    return {series.data() + static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k)};
  }
  void validate() const;
};

// UCR TSV: one record per line, label then k tab-separated values, LF, no
// header. Raw labels are remapped to contiguous [0, C) preserving ascending
// order of the raw values.
Dataset load_ucr_tsv(const std::string& path);
void save_ucr_tsv(const Dataset& d, const std::string& path);

// Per-series transform to mean 0, population std 1; constant series map to
// all-zeros.
Dataset z_normalize(const Dataset& d);

// Seeded two-class synthetic set: class 0 is a three-cycle sine plus
// Gaussian noise, class 1 the same shifted by pi/2. Series are z-normalized;
// train and test are disjoint draws from one stream.
std::pair<Dataset, Dataset> synth_two_class(int n_per_class, int k, std::uint64_t seed,
                                            double noise_amplitude = 0.1);

}  // namespace tsrobust
