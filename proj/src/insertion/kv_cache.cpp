#include "deepinsert/insertion/kv_cache.hpp"

#include <stdexcept>

namespace deepinsert::insertion {

SplitKVCache::SplitKVCache(std::size_t n_layers, std::size_t insert_layer)
    : layers_(n_layers), insert_layer_(insert_layer) {
    if (insert_layer > n_layers) throw std::invalid_argument("SplitKVCache: insert_layer exceeds n_layers");
}

std::size_t SplitKVCache::shallow_rows() const { return insert_layer_ > 0 ? layers_.front().rows() : 0; }

std::size_t SplitKVCache::deep_rows() const { return insert_layer_ < layers_.size() ? layers_.back().rows() : 0; }

void SplitKVCache::validate() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& kv = layers_[l];
        if (kv.keys.rows() != kv.rows() || kv.values.rows() != kv.rows() || kv.segments.size() != kv.rows()) {
            throw std::logic_error("kv cache layer " + std::to_string(l) + ": inconsistent row counts");
        }
        for (std::size_t i = 0; i < kv.rows(); ++i) {
            if (i > 0 && kv.positions[i] <= kv.positions[i - 1]) {
                throw std::logic_error("kv cache layer " + std::to_string(l) + ": positions not increasing");
            }
            if (is_shallow(l) && kv.segments[i] == model::Segment::multimodal) {
                throw std::logic_error("kv cache layer " + std::to_string(l) +
                                       ": multimodal row in a layer below the insertion layer");
            }
        }
    }
}

}  // namespace deepinsert::insertion
