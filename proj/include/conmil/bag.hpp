#pragma once

#include <string>

#include "conmil/ndarray.hpp"

namespace conmil {

// One time-series sample: a T x c series plus its class label. Synthetic
// data also carries T x K binary instance labels marking, per class, the
// time steps covered by that class's motif.
struct Bag {
  std::string id;
  NdArray series;           // T x c
  std::size_t label = 0;    // in {0..K-1}
  NdArray instance_labels;  // T x K of {0,1}; empty when unavailable

  std::size_t length() const { return series.rows(); }
  std::size_t channels() const { return series.cols(); }
  bool has_instance_labels() const { return !instance_labels.empty(); }
};

}  // namespace conmil
