#pragma once

#include <cstdint>
#include <vector>

namespace pathprof {

// Fixed-capacity dynamic bitset over 64-bit words. Capacity is set at
// construction; all binary operations require equal capacities.
class Bitset {
public:
    Bitset() = default;
    explicit Bitset(std::int64_t capacity);

    std::int64_t capacity() const { return capacity_; }
    bool empty() const { return count() == 0; }

    void set(std::int64_t i);
    void reset(std::int64_t i);
    bool test(std::int64_t i) const;

    std::int64_t count() const;

    void or_with(const Bitset& other);
    void and_with(const Bitset& other);
    std::int64_t intersect_count(const Bitset& other) const;
    std::int64_t union_count(const Bitset& other) const;
    bool is_subset_of(const Bitset& other) const;

    // Ascending list of set bit positions.
    std::vector<std::int64_t> to_indices() const;

    // Invokes fn(i) for each set bit in ascending order.
    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (std::size_t w = 0; w < words_.size(); ++w) {
            std::uint64_t word = words_[w];
            while (word != 0) {
                const int bit = __builtin_ctzll(word);
                fn(static_cast<std::int64_t>(w) * 64 + bit);
                word &= word - 1;
            }
        }
    }

    bool operator==(const Bitset& other) const {
        return capacity_ == other.capacity_ && words_ == other.words_;
    }
    bool operator!=(const Bitset& other) const { return !(*this == other); }

    // Raw little-endian byte view (ceil(capacity/8) bytes, trailing bits zero).
    std::vector<std::uint8_t> to_bytes() const;
    static Bitset from_bytes(std::int64_t capacity, const std::vector<std::uint8_t>& bytes);

private:
    void check_index(std::int64_t i) const;
    void check_same_capacity(const Bitset& other) const;

    std::int64_t capacity_ = 0;
    std::vector<std::uint64_t> words_;
};

}  // namespace pathprof
