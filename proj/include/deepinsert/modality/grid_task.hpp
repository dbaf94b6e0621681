#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepinsert::modality {

enum class QueryType { cell, majority };

std::string to_string(QueryType q);
QueryType parse_query_type(const std::string& s);

// Token ids used by the grid-QA prompts.
struct GridVocab {
    std::size_t grid_size = 4;
    std::size_t n_symbols = 8;

    static constexpr std::int64_t bos = 0;
    static constexpr std::int64_t eos = 1;
    static constexpr std::int64_t image = 2;  // multimodal placeholder
    static constexpr std::int64_t query_cell = 3;
    static constexpr std::int64_t query_majority = 4;

    std::int64_t row(std::size_t r) const { return 5 + static_cast<std::int64_t>(r); }
    std::int64_t col(std::size_t c) const { return 5 + static_cast<std::int64_t>(grid_size + c); }
    std::int64_t symbol(std::size_t s) const { return 5 + static_cast<std::int64_t>(2 * grid_size + s); }
    std::size_t size() const { return 5 + 2 * grid_size + n_symbols; }

    std::vector<std::int64_t> symbol_tokens() const;
};

struct GridSample {
    std::size_t grid_size = 0;
    std::vector<int> cells;  // row-major symbol ids
    QueryType qtype = QueryType::cell;
    std::vector<int> args;  // (row, col) for cell, (row) for majority
    std::vector<std::int64_t> question_tokens;
    std::int64_t answer_token = 0;

    int at(std::size_t r, std::size_t c) const { return cells[r * grid_size + c]; }

    // [bos, image, question...]
    std::vector<std::int64_t> prompt_template() const;

    friend bool operator==(const GridSample&, const GridSample&) = default;
};

struct DatasetConfig {
    std::uint64_t seed = 0;
    std::size_t size = 20000;
    std::size_t grid_size = 4;
    std::size_t n_symbols = 8;
    double cell_fraction = 0.5;  // remainder are row-majority queries
    double val_fraction = 0.1;
    double test_fraction = 0.1;
};

struct DatasetSplits {
    std::vector<GridSample> train;
    std::vector<GridSample> val;
    std::vector<GridSample> test;
};

// Deterministic per seed. Every grid is distinct across all splits, and each
// split cycles through the answer symbols so answers are balanced within a
// split and query type.
DatasetSplits generate_dataset(const DatasetConfig& config);

// Symbol most frequent in row r; throws if not unique.
int row_majority(const GridSample& sample, std::size_t r);

std::uint64_t grid_hash(const GridSample& sample);

}  // namespace deepinsert::modality
