#pragma once

#include <cstdint>
#include <vector>

#include "deepinsert/insertion/layout.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"
#include "deepinsert/numerics/matrix.hpp"

namespace fx {

using deepinsert::model::ModelConfig;
using deepinsert::model::Weights;
using deepinsert::numerics::Matrix;

ModelConfig tiny_config(std::size_t n_layers = 4, std::size_t insert_layer = 0);

// Gaussian entries with the given standard deviation.
Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev = 1.0);

// Weights large enough that attention is far from uniform, with perturbed
// norm gains and biases, so equivalence checks are not vacuous.
Weights strong_weights(const ModelConfig& config, std::uint64_t seed, double stddev = 0.3);

std::vector<std::int64_t> random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed);

deepinsert::insertion::PromptLayout random_layout(const ModelConfig& config, std::size_t pre, std::size_t mm,
                                                  std::size_t post, std::uint64_t seed);

}  // namespace fx
