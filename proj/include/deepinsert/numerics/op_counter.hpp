#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace deepinsert::numerics {

// Component a matmul's mul-adds are attributed to. The first five make up the
// per-layer model-core cost; the rest are tracked but never reconciled
// against the analytical FLOPs model.
enum class OpTag : std::uint8_t {
    projection,
    attention_score,
    attention_value,
    output_projection,
    feed_forward,
    head,      // embedding/LM head, adapter, policy
    backward,  // anything issued by a backward pass
};

inline constexpr std::size_t kOpTagCount = 7;

std::string_view to_string(OpTag tag);

// Cumulative scalar multiply + add count per component.
class OpCounter {
public:
    void add(OpTag tag, std::uint64_t n) { counts_[static_cast<std::size_t>(tag)] += n; }
    std::uint64_t get(OpTag tag) const { return counts_[static_cast<std::size_t>(tag)]; }

    // projection + attention (score, value, output projection) + feed-forward.
    std::uint64_t core_total() const;
    std::uint64_t attention_total() const {
        return get(OpTag::attention_score) + get(OpTag::attention_value) + get(OpTag::output_projection);
    }
    std::uint64_t total() const;

    void reset() { counts_.fill(0); }
    void merge(const OpCounter& other);

    friend bool operator==(const OpCounter&, const OpCounter&) = default;

private:
    std::array<std::uint64_t, kOpTagCount> counts_{};
};

// Per-thread accumulator all matmuls report into. Threads never share it;
// callers merge snapshots explicitly.
OpCounter& thread_counter();

// Snapshot the thread counter on construction; delta() is the work done since.
class CounterScope {
public:
    CounterScope() : start_(thread_counter()) {}
    OpCounter delta() const;

private:
    OpCounter start_;
};

}  // namespace deepinsert::numerics
