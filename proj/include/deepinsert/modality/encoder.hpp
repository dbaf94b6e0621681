#pragma once

#include <cstdint>
#include <string>

#include "deepinsert/modality/grid_task.hpp"
#include "deepinsert/numerics/matrix.hpp"

namespace deepinsert::modality {

// Seed-pinned perceptual stand-in: a per-symbol embedding table pushed through
// a fixed random projection. Never trained.
class FrozenEncoder {
public:
    FrozenEncoder(std::uint64_t seed, std::size_t n_symbols, std::size_t d_enc, std::size_t d_symbol = 16);

    std::size_t d_enc() const { return features_.cols(); }
    std::size_t n_symbols() const { return features_.rows(); }

    // grid_size^2 x d_enc, row i = features of cell i in row-major order.
    numerics::Matrix encode(const GridSample& sample) const;

    const numerics::Matrix& symbol_table() const { return symbol_table_; }
    const numerics::Matrix& projection() const { return projection_; }

    // FNV-1a over the raw bytes of every parameter.
    std::string checksum() const;

private:
    numerics::Matrix symbol_table_;
    numerics::Matrix projection_;
    numerics::Matrix features_;  // symbol_table_ * projection_
};

}  // namespace deepinsert::modality
