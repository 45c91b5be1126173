#pragma once

#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/tensor.hpp"

namespace metadenoise {

/// Noisy inputs with their clean references, index-aligned.
struct PairedSet {
  std::vector<Tensor> noisy;
  std::vector<Tensor> clean;

  std::size_t size() const noexcept { return noisy.size(); }
  bool empty() const noexcept { return noisy.empty(); }

  void push_back(Tensor x, Tensor y) {
    require_same_shape(x, y, "paired sample");
    noisy.push_back(std::move(x));
    clean.push_back(std::move(y));
  }

  void append(const PairedSet& other) {
    noisy.insert(noisy.end(), other.noisy.begin(), other.noisy.end());
    clean.insert(clean.end(), other.clean.begin(), other.clean.end());
  }

  void check() const {
    if (noisy.size() != clean.size()) throw DimensionError("paired set has unequal noisy/clean counts");
  }
};

}  // namespace metadenoise
