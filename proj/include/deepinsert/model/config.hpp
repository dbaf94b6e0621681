#pragma once

#include <cstddef>
#include <string>

namespace deepinsert::model {

struct ModelConfig {
    std::size_t n_layers = 8;
    std::size_t d_model = 64;
    std::size_t d_ff = 256;
    std::size_t n_heads = 4;
    std::size_t vocab_size = 64;
    std::size_t max_positions = 64;
    // First layer that processes multimodal tokens; 0 is the conventional model.
    std::size_t insert_layer = 0;
    float norm_eps = 1e-5f;

    std::size_t head_dim() const { return d_model / n_heads; }

    // Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

ModelConfig with_insert_layer(ModelConfig config, std::size_t insert_layer);

std::string describe(const ModelConfig& config);

}  // namespace deepinsert::model
