#include "deepinsert/model/config.hpp"

#include <sstream>
#include <stdexcept>

namespace deepinsert::model {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
    if (n_layers == 0) fail("n_layers must be positive");
    if (d_model == 0 || n_heads == 0) fail("d_model and n_heads must be positive");
    if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (head_dim() % 2 != 0) fail("head dimension must be even for rotary embeddings");
    if (d_ff == 0) fail("d_ff must be positive");
    if (vocab_size == 0) fail("vocab_size must be positive");
    if (max_positions == 0) fail("max_positions must be positive");
    if (insert_layer > n_layers) {
        fail("insert_layer " + std::to_string(insert_layer) + " exceeds n_layers " + std::to_string(n_layers));
    }
    if (!(norm_eps > 0.0f)) fail("norm_eps must be positive");
}

ModelConfig with_insert_layer(ModelConfig config, std::size_t insert_layer) {
    config.insert_layer = insert_layer;
    config.validate();
    return config;
}

std::string describe(const ModelConfig& c) {
    std::ostringstream os;
    os << "N=" << c.n_layers << " d_model=" << c.d_model << " d_ff=" << c.d_ff << " heads=" << c.n_heads
       << " vocab=" << c.vocab_size << " max_pos=" << c.max_positions << " N_DI=" << c.insert_layer;
    return os.str();
}

}  // namespace deepinsert::model
