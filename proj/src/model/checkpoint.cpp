#include "deepinsert/model/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "deepinsert/common/io.hpp"

namespace deepinsert::model {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'I', 'N', 'S', 'C', 'K', 'P', 'T'};

class Writer {
public:
    template <typename U>
    void put(U v) {
        char buf[sizeof(U)];
        std::memcpy(buf, &v, sizeof(U));
        out_.append(buf, sizeof(U));
    }
    void put_bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void put_string(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    template <typename U>
    U get(const char* what) {
        need(sizeof(U), what);
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }
    void get_bytes(void* dst, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::string get_string(const char* what) {
        const auto n = get<std::uint32_t>(what);
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError(source_ + ": truncated while reading " + what + " at byte " + std::to_string(pos_));
        }
    }
    const std::string& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

const numerics::Matrix& TensorFile::get(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw CheckpointError("checkpoint has no tensor named '" + name + "'");
}

bool TensorFile::contains(const std::string& name) const {
    return std::any_of(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == name; });
}

std::string serialize(const TensorFile& file) {
    Writer w;
    w.put_bytes(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(kCheckpointVersion);
    const ModelConfig& c = file.config;
    w.put<std::uint32_t>(7 * 8 + 4);
    for (std::uint64_t v : {c.n_layers, c.d_model, c.d_ff, c.n_heads, c.vocab_size, c.max_positions, c.insert_layer}) {
        w.put<std::uint64_t>(v);
    }
    w.put<float>(c.norm_eps);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(file.metadata.size()));
    for (const auto& [key, value] : file.metadata) {
        w.put_string(key);
        w.put<std::uint64_t>(value);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& t : file.tensors) {
        w.put_string(t.name);
        w.put<std::uint64_t>(t.value.rows());
        w.put<std::uint64_t>(t.value.cols());
        w.put_bytes(t.value.data(), t.value.size() * sizeof(float));
    }
    return w.take();
}

TensorFile deserialize(const std::string& bytes, const std::string& source) {
    Reader r(bytes, source);
    char magic[8];
    r.get_bytes(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError(source + ": not a checkpoint file");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const auto config_len = r.get<std::uint32_t>("config length");
    if (config_len != 7 * 8 + 4) throw CheckpointError(source + ": unexpected config block length");
    TensorFile file;
    ModelConfig& c = file.config;
    for (std::size_t* field :
         {&c.n_layers, &c.d_model, &c.d_ff, &c.n_heads, &c.vocab_size, &c.max_positions, &c.insert_layer}) {
        *field = static_cast<std::size_t>(r.get<std::uint64_t>("config"));
    }
    c.norm_eps = r.get<float>("config");
    const auto n_meta = r.get<std::uint32_t>("metadata count");
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string key = r.get_string("metadata key");
        file.metadata[key] = r.get<std::uint64_t>("metadata value");
    }
    const auto n_tensors = r.get<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        NamedTensor t;
        t.name = r.get_string("tensor name");
        const auto rows = r.get<std::uint64_t>("tensor rows");
        const auto cols = r.get<std::uint64_t>("tensor cols");
        std::vector<float> data(static_cast<std::size_t>(rows * cols));
        r.get_bytes(data.data(), data.size() * sizeof(float), t.name.c_str());
        t.value = numerics::Matrix(rows, cols, std::move(data));
        file.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw CheckpointError(source + ": trailing bytes after last tensor");
    return file;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
    common::write_file_atomic(path, serialize(file));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
    return deserialize(common::read_file(path), path.string());
}

void append_weights(TensorFile& file, const Weights& weights, const std::string& prefix) {
    weights.for_each_tensor(
        [&](const std::string& name, const numerics::Matrix& m) { file.tensors.push_back({prefix + name, m}); });
}

void restore_weights(const TensorFile& file, Weights& weights, const std::string& prefix) {
    weights.for_each_tensor([&](const std::string& name, numerics::Matrix& m) {
        const numerics::Matrix& src = file.get(prefix + name);
        if (src.rows() != m.rows() || src.cols() != m.cols()) {
            throw CheckpointError("tensor '" + prefix + name + "' has shape " + src.shape_string() + ", expected " +
                                  m.shape_string());
        }
        m = src;
    });
}

}  // namespace deepinsert::model
