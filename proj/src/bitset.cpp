#include "pathprof/bitset.hpp"

#include <bit>

#include "pathprof/errors.hpp"

namespace pathprof {

Bitset::Bitset(std::int64_t capacity) : capacity_(capacity) {
    if (capacity < 0) {
        throw DomainError("Bitset capacity must be nonnegative");
    }
    words_.assign(static_cast<std::size_t>((capacity + 63) / 64), 0);
}

void Bitset::check_index(std::int64_t i) const {
    if (i < 0 || i >= capacity_) {
        throw DomainError("Bitset index " + std::to_string(i) + " out of range [0, " +
                          std::to_string(capacity_) + ")");
    }
}

void Bitset::check_same_capacity(const Bitset& other) const {
    if (capacity_ != other.capacity_) {
        throw DomainError("Bitset capacity mismatch: " + std::to_string(capacity_) + " vs " +
                          std::to_string(other.capacity_));
    }
}

void Bitset::set(std::int64_t i) {
    check_index(i);
    words_[static_cast<std::size_t>(i / 64)] |= std::uint64_t{1} << (i % 64);
}

void Bitset::reset(std::int64_t i) {
    check_index(i);
    words_[static_cast<std::size_t>(i / 64)] &= ~(std::uint64_t{1} << (i % 64));
}

bool Bitset::test(std::int64_t i) const {
    check_index(i);
    return (words_[static_cast<std::size_t>(i / 64)] >> (i % 64)) & 1;
}

std::int64_t Bitset::count() const {
    std::int64_t n = 0;
    for (std::uint64_t w : words_) {
        n += std::popcount(w);
    }
    return n;
}

void Bitset::or_with(const Bitset& other) {
    check_same_capacity(other);
    for (std::size_t i = 0; i < words_.size(); ++i) {
        words_[i] |= other.words_[i];
    }
}

void Bitset::and_with(const Bitset& other) {
    check_same_capacity(other);
    for (std::size_t i = 0; i < words_.size(); ++i) {
        words_[i] &= other.words_[i];
    }
}

std::int64_t Bitset::intersect_count(const Bitset& other) const {
    check_same_capacity(other);
    std::int64_t n = 0;
    for (std::size_t i = 0; i < words_.size(); ++i) {
        n += std::popcount(words_[i] & other.words_[i]);
    }
    return n;
}

std::int64_t Bitset::union_count(const Bitset& other) const {
    check_same_capacity(other);
    std::int64_t n = 0;
    for (std::size_t i = 0; i < words_.size(); ++i) {
        n += std::popcount(words_[i] | other.words_[i]);
    }
    return n;
}

bool Bitset::is_subset_of(const Bitset& other) const {
    check_same_capacity(other);
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if ((words_[i] & ~other.words_[i]) != 0) {
            return false;
        }
    }
    return true;
}

std::vector<std::int64_t> Bitset::to_indices() const {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(count()));
    for_each([&](std::int64_t i) { out.push_back(i); });
    return out;
}

std::vector<std::uint8_t> Bitset::to_bytes() const {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>((capacity_ + 7) / 8), 0);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const std::size_t word = i / 8;
        const std::size_t shift = (i % 8) * 8;
        bytes[i] = static_cast<std::uint8_t>((words_[word] >> shift) & 0xff);
    }
    return bytes;
}

Bitset Bitset::from_bytes(std::int64_t capacity, const std::vector<std::uint8_t>& bytes) {
    Bitset b(capacity);
    const std::size_t expected = static_cast<std::size_t>((capacity + 7) / 8);
    if (bytes.size() != expected) {
        throw DomainError("Bitset byte payload has " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected));
    }
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const std::size_t word = i / 8;
        const std::size_t shift = (i % 8) * 8;
        b.words_[word] |= static_cast<std::uint64_t>(bytes[i]) << shift;
    }
    // Trailing padding bits must be zero.
    if (capacity % 64 != 0 && !b.words_.empty()) {
        const std::uint64_t mask = (std::uint64_t{1} << (capacity % 64)) - 1;
        if ((b.words_.back() & ~mask) != 0) {
            throw DomainError("Bitset payload has nonzero padding bits past capacity");
        }
    }
    return b;
}

}  // namespace pathprof
