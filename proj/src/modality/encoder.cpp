#include "deepinsert/modality/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "deepinsert/common/io.hpp"
#include "deepinsert/numerics/kernels.hpp"
#include "deepinsert/numerics/rng.hpp"

namespace deepinsert::modality {

FrozenEncoder::FrozenEncoder(std::uint64_t seed, std::size_t n_symbols, std::size_t d_enc, std::size_t d_symbol)
    : symbol_table_(n_symbols, d_symbol), projection_(d_symbol, d_enc) {
    numerics::Rng rng(seed);
    for (auto& v : symbol_table_.values()) v = static_cast<float>(rng.normal());
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_symbol));
    for (auto& v : projection_.values()) v = static_cast<float>(rng.normal(0.0, scale));
    features_ = numerics::matmul(symbol_table_, projection_, numerics::OpTag::head);
}

numerics::Matrix FrozenEncoder::encode(const GridSample& sample) const {
    numerics::Matrix out(sample.cells.size(), d_enc());
    for (std::size_t i = 0; i < sample.cells.size(); ++i) {
        const int s = sample.cells[i];
        if (s < 0 || static_cast<std::size_t>(s) >= n_symbols()) {
            throw std::out_of_range("encode: symbol " + std::to_string(s) + " outside encoder alphabet");
        }
        auto src = features_.row(static_cast<std::size_t>(s));
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::string FrozenEncoder::checksum() const {
    std::string bytes;
    for (const auto* m : {&symbol_table_, &projection_, &features_}) {
        bytes.append(reinterpret_cast<const char*>(m->data()), m->size() * sizeof(float));
    }
    return common::fnv1a_hex(bytes);
}

}  // namespace deepinsert::modality
