#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "explirec/error.hpp"

namespace explirec {

struct TrainConfig {
  std::size_t latent_dim = 32;
  std::size_t epochs = 200;
  double learning_rate = 0.005;
  double l2_reg = 0.02;
  std::size_t batch_size = 256;
  std::uint64_t seed = 20180101;
  std::size_t hidden_units = 16;  // NCF only; 0 reduces NCF to biased MF
  std::size_t knn_k = 40;
  std::size_t knn_min_overlap = 1;

  void validate() const {
    if (latent_dim == 0 || batch_size == 0 || knn_k == 0 || knn_min_overlap == 0)
      throw Error(ErrorCode::usage, "latent_dim, batch_size, knn_k and knn_min_overlap must be positive");
    if (!(learning_rate > 0)) throw Error(ErrorCode::usage, "learning_rate must be positive");
    if (!(l2_reg >= 0)) throw Error(ErrorCode::usage, "l2_reg must be non-negative");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, latent_dim, epochs, learning_rate,
                                                l2_reg, batch_size, seed, hidden_units, knn_k,
                                                knn_min_overlap)

}  // namespace explirec
