#pragma once

#include <cstdint>
#include <vector>

#include "deepinsert/model/block.hpp"

namespace deepinsert::insertion {

// Per-layer K/V store with two regions: layers below the insertion layer hold
// language rows only (plus decoded tokens); layers at or above it hold the
// full combined sequence.
class SplitKVCache {
public:
    SplitKVCache() = default;
    SplitKVCache(std::size_t n_layers, std::size_t insert_layer);

    std::size_t n_layers() const { return layers_.size(); }
    std::size_t insert_layer() const { return insert_layer_; }
    bool is_shallow(std::size_t layer) const { return layer < insert_layer_; }

    model::LayerKV& layer(std::size_t i) { return layers_.at(i); }
    const model::LayerKV& layer(std::size_t i) const { return layers_.at(i); }

    // Row count of the first shallow layer (0 if there is none).
    std::size_t shallow_rows() const;
    // Row count of the last layer (0 if every layer is shallow).
    std::size_t deep_rows() const;

    // Position the next decoded token must carry.
    std::int64_t next_position() const { return next_position_; }
    void set_next_position(std::int64_t p) { next_position_ = p; }

    // Throws if a shallow layer holds a multimodal row or any layer's
    // positions are not strictly increasing.
    void validate() const;

private:
    std::vector<model::LayerKV> layers_;
    std::size_t insert_layer_ = 0;
    std::int64_t next_position_ = 0;
};

}  // namespace deepinsert::insertion
