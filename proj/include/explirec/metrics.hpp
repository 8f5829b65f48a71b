#pragma once

#include <cmath>
#include <span>

#include "explirec/error.hpp"

namespace explirec {

// Root mean squared error between predictions and ground truth.
inline double rmse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.empty() || predictions.size() != truths.size())
    throw Error(ErrorCode::length_mismatch, "rmse needs two equal-length nonempty lists");
  double sse = 0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    double d = predictions[k] - truths[k];
    sse += d * d;
  }
  return std::sqrt(sse / static_cast<double>(predictions.size()));
}

}  // namespace explirec
