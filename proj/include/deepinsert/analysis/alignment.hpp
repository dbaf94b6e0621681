#pragma once

#include <vector>

#include "deepinsert/modality/adapter.hpp"
#include "deepinsert/modality/encoder.hpp"
#include "deepinsert/modality/grid_task.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"
#include "deepinsert/numerics/matrix.hpp"

namespace deepinsert::analysis {

using numerics::MatrixD;

// Indices of the k largest inner products <x_i, x_j>, j != i, for every row i;
// ties go to the lower index. Each set is sorted ascending.
std::vector<std::vector<std::size_t>> knn_sets(const MatrixD& features, std::size_t k);

// Mean over samples of |knn_a(i) ∩ knn_b(i)| / k. Requires equal row counts
// and k < n.
double mutual_knn_alignment(const MatrixD& a, const MatrixD& b, std::size_t k);

// Entry (i, j) aligns layer i of model A with layer j of model B.
MatrixD alignment_grid(const std::vector<MatrixD>& layers_a, const std::vector<MatrixD>& layers_b, std::size_t k);

// Residual stream at the last prompt token after every layer, one row per
// sample: n_layers matrices of samples.size() x d_model.
std::vector<MatrixD> collect_layer_features(const std::vector<modality::GridSample>& samples,
                                            const model::Weights& weights, const modality::Adapter& adapter,
                                            const modality::FrozenEncoder& encoder, const model::ModelConfig& config);

}  // namespace deepinsert::analysis
