#include "deepinsert/numerics/op_counter.hpp"

namespace deepinsert::numerics {

std::string_view to_string(OpTag tag) {
    switch (tag) {
        case OpTag::projection:
            return "projection";
        case OpTag::attention_score:
            return "attention_score";
        case OpTag::attention_value:
            return "attention_value";
        case OpTag::output_projection:
            return "output_projection";
        case OpTag::feed_forward:
            return "feed_forward";
        case OpTag::head:
            return "head";
        case OpTag::backward:
            return "backward";
    }
    return "unknown";
}

std::uint64_t OpCounter::core_total() const {
    return get(OpTag::projection) + attention_total() + get(OpTag::feed_forward);
}

std::uint64_t OpCounter::total() const {
    std::uint64_t sum = 0;
    for (auto c : counts_) sum += c;
    return sum;
}

void OpCounter::merge(const OpCounter& other) {
    for (std::size_t i = 0; i < kOpTagCount; ++i) counts_[i] += other.counts_[i];
}

OpCounter& thread_counter() {
    thread_local OpCounter counter;
    return counter;
}

OpCounter CounterScope::delta() const {
    OpCounter out;
    const OpCounter& now = thread_counter();
    for (std::size_t i = 0; i < kOpTagCount; ++i) {
        const auto tag = static_cast<OpTag>(i);
        out.add(tag, now.get(tag) - start_.get(tag));
    }
    return out;
}

}  // namespace deepinsert::numerics
