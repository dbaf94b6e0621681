#include "fixtures.hpp"

#include "deepinsert/numerics/rng.hpp"

namespace fx {

using deepinsert::numerics::Rng;

ModelConfig tiny_config(std::size_t n_layers, std::size_t insert_layer) {
    ModelConfig c;
    c.n_layers = n_layers;
    c.d_model = 8;
    c.d_ff = 16;
    c.n_heads = 2;
    c.vocab_size = 21;
    c.max_positions = 64;
    c.insert_layer = insert_layer;
    return c;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = static_cast<float>(rng.normal(0.0, stddev));
    return m;
}

Weights strong_weights(const ModelConfig& config, std::uint64_t seed, double stddev) {
    Rng rng(seed);
    Weights w = deepinsert::model::init_weights(config, rng);
    w.for_each_tensor([&](const std::string& name, Matrix& m) {
        const bool gain = name.find("gain") != std::string::npos;
        for (auto& v : m.values()) {
            v = static_cast<float>(gain ? 1.0 + rng.normal(0.0, 0.2) : rng.normal(0.0, stddev));
        }
    });
    return w;
}

std::vector<std::int64_t> random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int64_t> out(n);
    for (auto& t : out) t = static_cast<std::int64_t>(rng.below(vocab));
    return out;
}

deepinsert::insertion::PromptLayout random_layout(const ModelConfig& config, std::size_t pre, std::size_t mm,
                                                  std::size_t post, std::uint64_t seed) {
    deepinsert::insertion::PromptLayout layout;
    layout.pre_text = random_tokens(pre, config.vocab_size, seed);
    layout.post_text = random_tokens(post, config.vocab_size, seed + 1000);
    layout.mm_embeddings = random_matrix(mm, config.d_model, seed + 2000);
    return layout;
}

}  // namespace fx
