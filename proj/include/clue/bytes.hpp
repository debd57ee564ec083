#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "clue/common.hpp"

namespace clue {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

// Append-only little-endian encoder.
class ByteWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { raw(&v, sizeof v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void bytes(const void* p, std::size_t n) { raw(p, n); }
    void zeros(std::size_t n) { buf_.insert(buf_.end(), n, 0); }

    std::size_t size() const { return buf_.size(); }
    std::vector<std::uint8_t>& buffer() { return buf_; }

  private:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t> buf_;
};

// Bounds-checked little-endian decoder; throws FormatError on overrun.
class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return take<std::uint8_t>(); }
    std::uint16_t u16() { return take<std::uint16_t>(); }
    std::uint32_t u32() { return take<std::uint32_t>(); }
    float f32() { return take<float>(); }

    void read(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, data_.data() + pos_, n);
        pos_ += n;
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    template <class T>
    T take() {
        T v;
        read(&v, sizeof v);
        return v;
    }
    void need(std::size_t n) const {
        if (remaining() < n)
            throw FormatError("truncated input: need " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", have " + std::to_string(remaining()));
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace clue
