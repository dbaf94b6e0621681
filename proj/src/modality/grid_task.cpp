#include "deepinsert/modality/grid_task.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "deepinsert/numerics/rng.hpp"

namespace deepinsert::modality {

std::string to_string(QueryType q) { return q == QueryType::cell ? "cell" : "majority"; }

QueryType parse_query_type(const std::string& s) {
    if (s == "cell") return QueryType::cell;
    if (s == "majority") return QueryType::majority;
    throw std::invalid_argument("unknown query type '" + s + "'");
}

std::vector<std::int64_t> GridVocab::symbol_tokens() const {
    std::vector<std::int64_t> out;
    for (std::size_t s = 0; s < n_symbols; ++s) out.push_back(symbol(s));
    return out;
}

std::vector<std::int64_t> GridSample::prompt_template() const {
    std::vector<std::int64_t> out{GridVocab::bos, GridVocab::image};
    out.insert(out.end(), question_tokens.begin(), question_tokens.end());
    return out;
}

int row_majority(const GridSample& sample, std::size_t r) {
    std::vector<int> counts;
    for (std::size_t c = 0; c < sample.grid_size; ++c) {
        const int s = sample.at(r, c);
        if (static_cast<std::size_t>(s) >= counts.size()) counts.resize(s + 1, 0);
        ++counts[s];
    }
    const int best = *std::max_element(counts.begin(), counts.end());
    if (std::count(counts.begin(), counts.end(), best) != 1) {
        throw std::logic_error("row " + std::to_string(r) + " has no unique majority symbol");
    }
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::uint64_t grid_hash(const GridSample& sample) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ sample.grid_size;
    for (int c : sample.cells) {
        h ^= static_cast<std::uint64_t>(c) + 1;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

using numerics::Rng;

int draw_symbol_except(Rng& rng, std::size_t n_symbols, int excluded) {
    int s = static_cast<int>(rng.below(n_symbols - 1));
    return s >= excluded ? s + 1 : s;
}

GridSample make_sample(Rng& rng, const DatasetConfig& cfg, const GridVocab& vocab, QueryType qtype, int answer) {
    const std::size_t g = cfg.grid_size;
    GridSample s;
    s.grid_size = g;
    s.qtype = qtype;
    s.cells.resize(g * g);
    for (auto& c : s.cells) c = static_cast<int>(rng.below(cfg.n_symbols));
    const auto r = static_cast<std::size_t>(rng.below(g));
    if (qtype == QueryType::cell) {
        const auto c = static_cast<std::size_t>(rng.below(g));
        s.cells[r * g + c] = answer;
        s.args = {static_cast<int>(r), static_cast<int>(c)};
        s.question_tokens = {GridVocab::query_cell, vocab.row(r), vocab.col(c)};
    } else {
        // answer appears m times; every other symbol in the row fewer times.
        const std::size_t m = g == 1 ? 1 : 2 + static_cast<std::size_t>(rng.below(g - 1));
        std::vector<std::size_t> cols(g);
        for (std::size_t i = 0; i < g; ++i) cols[i] = i;
        rng.shuffle(cols);
        std::vector<int> counts(cfg.n_symbols, 0);
        for (std::size_t i = 0; i < m; ++i) s.cells[r * g + cols[i]] = answer;
        counts[answer] = static_cast<int>(m);
        for (std::size_t i = m; i < g; ++i) {
            int sym = draw_symbol_except(rng, cfg.n_symbols, answer);
            while (counts[sym] + 1 >= static_cast<int>(m)) sym = draw_symbol_except(rng, cfg.n_symbols, answer);
            ++counts[sym];
            s.cells[r * g + cols[i]] = sym;
        }
        s.args = {static_cast<int>(r)};
        s.question_tokens = {GridVocab::query_majority, vocab.row(r)};
    }
    s.answer_token = vocab.symbol(static_cast<std::size_t>(answer));
    return s;
}

std::size_t fraction_count(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
}

}  // namespace

DatasetSplits generate_dataset(const DatasetConfig& cfg) {
    if (cfg.size < 3) throw std::invalid_argument("generate_dataset: size must be at least 3");
    if (cfg.grid_size == 0 || cfg.n_symbols < 2) {
        throw std::invalid_argument("generate_dataset: need grid_size >= 1 and at least 2 symbols");
    }
    if (cfg.cell_fraction < 0.0 || cfg.cell_fraction > 1.0) {
        throw std::invalid_argument("generate_dataset: cell_fraction must be in [0, 1]");
    }
    // Majority rows with a unique mode need enough distinct filler symbols.
    if (cfg.cell_fraction < 1.0 && cfg.grid_size > 2 && cfg.n_symbols < cfg.grid_size - 1) {
        throw std::invalid_argument("generate_dataset: too few symbols for unique row majorities");
    }
    // Distinct grids available: S^(G^2). Compare in log space.
    const double log_capacity =
        static_cast<double>(cfg.grid_size * cfg.grid_size) * std::log(static_cast<double>(cfg.n_symbols));
    if (log_capacity < std::log(static_cast<double>(cfg.size) * 4.0)) {
        throw std::invalid_argument("generate_dataset: " + std::to_string(cfg.n_symbols) + "^" +
                                    std::to_string(cfg.grid_size * cfg.grid_size) + " distinct grids cannot supply " +
                                    std::to_string(cfg.size) + " samples without duplicates");
    }

    std::size_t n_val = std::max<std::size_t>(1, fraction_count(cfg.size, cfg.val_fraction));
    std::size_t n_test = std::max<std::size_t>(1, fraction_count(cfg.size, cfg.test_fraction));
    if (n_val + n_test >= cfg.size)
        throw std::invalid_argument("generate_dataset: split fractions leave no training data");
    const std::size_t n_train = cfg.size - n_val - n_test;

    GridVocab vocab{cfg.grid_size, cfg.n_symbols};
    Rng rng(cfg.seed);
    std::unordered_set<std::uint64_t> seen;

    auto build_split = [&](std::size_t n) {
        const std::size_t n_cell = fraction_count(n, cfg.cell_fraction);
        std::vector<GridSample> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const bool cell = i < n_cell;
            const std::size_t k = cell ? i : i - n_cell;
            const int answer = static_cast<int>(k % cfg.n_symbols);
            const QueryType q = cell ? QueryType::cell : QueryType::majority;
            GridSample s = make_sample(rng, cfg, vocab, q, answer);
            int attempts = 0;
            while (!seen.insert(grid_hash(s)).second) {
                if (++attempts > 1000) throw std::runtime_error("generate_dataset: could not draw a distinct grid");
                s = make_sample(rng, cfg, vocab, q, answer);
            }
            out.push_back(std::move(s));
        }
        rng.shuffle(out);
        return out;
    };

    DatasetSplits splits;
    splits.train = build_split(n_train);
    splits.val = build_split(n_val);
    splits.test = build_split(n_test);
    return splits;
}

}  // namespace deepinsert::modality
