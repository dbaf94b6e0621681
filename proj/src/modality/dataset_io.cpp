#include "deepinsert/modality/dataset_io.hpp"

#include <json.hpp>
#include <sstream>

#include "deepinsert/common/io.hpp"

namespace deepinsert::modality {

namespace {

constexpr const char* kHeaderPrefix = "# gridqa schema_version=";

nlohmann::json to_json(const GridSample& s) {
    nlohmann::json grid = nlohmann::json::array();
    for (std::size_t r = 0; r < s.grid_size; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < s.grid_size; ++c) row.push_back(s.at(r, c));
        grid.push_back(std::move(row));
    }
    return {{"grid", grid},
            {"qtype", to_string(s.qtype)},
            {"args", s.args},
            {"question_tokens", s.question_tokens},
            {"answer_token", s.answer_token}};
}

GridSample from_json(const nlohmann::json& j) {
    GridSample s;
    const auto& grid = j.at("grid");
    s.grid_size = grid.size();
    for (const auto& row : grid) {
        if (row.size() != s.grid_size) throw std::invalid_argument("grid is not square");
        for (const auto& v : row) s.cells.push_back(v.get<int>());
    }
    s.qtype = parse_query_type(j.at("qtype").get<std::string>());
    s.args = j.at("args").get<std::vector<int>>();
    s.question_tokens = j.at("question_tokens").get<std::vector<std::int64_t>>();
    s.answer_token = j.at("answer_token").get<std::int64_t>();
    return s;
}

}  // namespace

std::string to_jsonl(const std::vector<GridSample>& samples) {
    std::string out = std::string(kHeaderPrefix) + std::to_string(kDatasetSchemaVersion) + "\n";
    for (const auto& s : samples) {
        out += to_json(s).dump();
        out += '\n';
    }
    return out;
}

std::vector<GridSample> from_jsonl(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind(kHeaderPrefix, 0) != 0) {
        throw DatasetFormatError(source + ": line 1: missing '" + kHeaderPrefix + "N' header");
    }
    const std::string version = line.substr(std::string(kHeaderPrefix).size());
    if (version != std::to_string(kDatasetSchemaVersion)) {
        throw DatasetFormatError(source + ": schema version " + version + " does not match supported version " +
                                 std::to_string(kDatasetSchemaVersion));
    }
    std::vector<GridSample> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            samples.push_back(from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw DatasetFormatError(source + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return samples;
}

void write_split(const std::filesystem::path& path, const std::vector<GridSample>& samples) {
    common::write_file_atomic(path, to_jsonl(samples));
}

std::vector<GridSample> read_split(const std::filesystem::path& path) {
    return from_jsonl(common::read_file(path), path.string());
}

}  // namespace deepinsert::modality
