#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepinsert/modality/grid_task.hpp"

namespace deepinsert::modality {

// JSONL split files. The first line is a schema comment,
//   # gridqa schema_version=1
// followed by one object per sample:
//   {"grid": [[int]], "qtype": "cell"|"majority", "args": [int],
//    "question_tokens": [int], "answer_token": int}
inline constexpr int kDatasetSchemaVersion = 1;

class DatasetFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string to_jsonl(const std::vector<GridSample>& samples);
std::vector<GridSample> from_jsonl(const std::string& text, const std::string& source = "<memory>");

void write_split(const std::filesystem::path& path, const std::vector<GridSample>& samples);
std::vector<GridSample> read_split(const std::filesystem::path& path);

}  // namespace deepinsert::modality
