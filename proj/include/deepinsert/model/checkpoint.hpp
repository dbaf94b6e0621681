#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"

namespace deepinsert::model {

// Binary tensor container, little-endian:
//   magic "DINSCKPT" | u32 format version
//   u32 config byte length | config block (7 x u64 + f32, see ModelConfig field order)
//   u32 metadata count | { u32 key length | key | u64 value }*
//   u32 tensor count   | { u32 name length | name | u64 rows | u64 cols | rows*cols f32 }*
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NamedTensor {
    std::string name;
    numerics::Matrix value;
};

struct TensorFile {
    ModelConfig config;
    std::map<std::string, std::uint64_t> metadata;
    std::vector<NamedTensor> tensors;

    const numerics::Matrix& get(const std::string& name) const;
    bool contains(const std::string& name) const;
};

std::string serialize(const TensorFile& file);
TensorFile deserialize(const std::string& bytes, const std::string& source = "<memory>");

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

void append_weights(TensorFile& file, const Weights& weights, const std::string& prefix = "");

// Copies every tensor of weights from file, rejecting any whose shape differs
// (the diagnostic names the tensor).
void restore_weights(const TensorFile& file, Weights& weights, const std::string& prefix = "");

}  // namespace deepinsert::model
