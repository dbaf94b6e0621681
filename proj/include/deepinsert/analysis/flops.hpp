#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/numerics/op_counter.hpp"

namespace deepinsert::analysis {

struct FlopsQuery {
    std::uint64_t n_layers = 0;
    std::uint64_t d_model = 0;
    std::uint64_t d_ff = 0;
    std::uint64_t n_heads = 0;
    std::uint64_t text_length = 0;
    std::uint64_t mm_length = 0;
    std::uint64_t insert_layer = 0;

    void validate() const;
    static FlopsQuery from(const model::ModelConfig& config, std::uint64_t text_length, std::uint64_t mm_length);
};

// FLOPs of the matmuls in one block for L tokens (2 per multiply-add).
// attention includes the output projection; softmax is not counted.
struct LayerFlops {
    std::uint64_t projection = 0;    // 6 L d^2
    std::uint64_t attention = 0;     // 4 L^2 d + 2 L d^2
    std::uint64_t feed_forward = 0;  // 4 L d d_ff
    std::uint64_t total() const { return projection + attention + feed_forward; }

    LayerFlops& operator+=(const LayerFlops& o);
    friend bool operator==(const LayerFlops&, const LayerFlops&) = default;
};

LayerFlops flops_per_layer(std::uint64_t length, std::uint64_t d_model, std::uint64_t d_ff, std::uint64_t n_heads);

struct FlopsReport {
    FlopsQuery query;
    LayerFlops text_layer;  // a layer below the insertion layer
    LayerFlops full_layer;  // a layer at or above it
    LayerFlops sum;         // over all layers
    std::uint64_t total = 0;
};

// Rejects insert_layer > n_layers.
FlopsReport flops_deepinsert(const FlopsQuery& q);

// N * f(L_text + L_mm) - N_DI * (8 L_mm d^2 + 4 (2 L_text + L_mm) L_mm d + 4 L_mm d d_ff)
std::uint64_t flops_subtractive(const FlopsQuery& q);
// N_DI * f(L_text) + (N - N_DI) * f(L_text + L_mm)
std::uint64_t flops_split(const FlopsQuery& q);

// Rows entering each layer during prefill, accounting for late insertion and
// token pruning.
std::vector<std::uint64_t> effective_lengths(const FlopsQuery& q, const insertion::PruneConfig& prune);

// Sum over layers of f(lengths[l]).
LayerFlops flops_piecewise(const std::vector<std::uint64_t>& lengths, std::uint64_t d_model, std::uint64_t d_ff,
                           std::uint64_t n_heads);

// The instrumented counter mapped onto the analytical components.
LayerFlops from_counter(const numerics::OpCounter& counter);

struct Reconciliation {
    LayerFlops expected;
    LayerFlops instrumented;
    bool exact = false;
    std::string message;  // per-component differences when not exact
};

Reconciliation reconcile_counts(const numerics::OpCounter& instrumented, const LayerFlops& expected);

}  // namespace deepinsert::analysis
