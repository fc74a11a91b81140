#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>

namespace ehfetch {

// Little-endian cursor over a byte span. Every read is bounds checked and
// returns nullopt instead of reading past the end.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data, std::size_t pos = 0)
        : data_(data), pos_(pos) {}

    std::size_t pos() const { return pos_; }
    std::size_t size() const { return data_.size(); }
    std::size_t remaining() const { return pos_ <= data_.size() ? data_.size() - pos_ : 0; }
    bool at_end() const { return pos_ >= data_.size(); }
    void seek(std::size_t pos) { pos_ = pos; }

    bool skip(std::size_t n) {
        if (remaining() < n) return false;
        pos_ += n;
        return true;
    }

    template <typename T>
    std::optional<T> read() {
        if (remaining() < sizeof(T)) return std::nullopt;
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::optional<std::uint64_t> uleb128() {
        std::uint64_t result = 0;
        unsigned shift = 0;
        while (!at_end()) {
            std::uint8_t byte = data_[pos_++];
            if (shift < 64) result |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
            shift += 7;
            if ((byte & 0x80) == 0) return result;
        }
        return std::nullopt;
    }

    std::optional<std::int64_t> sleb128() {
        std::int64_t result = 0;
        unsigned shift = 0;
        std::uint8_t byte = 0;
        do {
            if (at_end()) return std::nullopt;
            byte = data_[pos_++];
            if (shift < 64) result |= static_cast<std::int64_t>(byte & 0x7f) << shift;
            shift += 7;
        } while (byte & 0x80);
        if (shift < 64 && (byte & 0x40)) result |= -(static_cast<std::int64_t>(1) << shift);
        return result;
    }

    std::optional<std::span<const std::uint8_t>> bytes(std::size_t n) {
        if (remaining() < n) return std::nullopt;
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_;
};

}  // namespace ehfetch
