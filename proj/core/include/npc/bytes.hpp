#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace npc {

using Bytes = std::vector<std::uint8_t>;

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void raw(std::span<const std::uint8_t> bytes);
    void raw(std::string_view text);

    std::size_t size() const noexcept { return buf_.size(); }
    Bytes take() && { return std::move(buf_); }
    const Bytes& bytes() const noexcept { return buf_; }

private:
    Bytes buf_;
};

/// Bounds-checked little-endian cursor. Every overrun raises FormatError
/// carrying the offset at which the read was attempted.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    std::span<const std::uint8_t> raw(std::size_t n);
    std::string_view text(std::size_t n);

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    void require(std::size_t n) const;

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

float load_f32_le(const std::uint8_t* p);
void store_f32_le(float v, std::uint8_t* p);

/// 64-bit FNV-1a. Seeded continuation lets a digest span several buffers.
std::uint64_t fnv1a64(std::span<const std::uint8_t> data,
                      std::uint64_t state = 0xcbf29ce484222325ULL);

std::string to_hex(std::uint64_t v);

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> data);

}  // namespace npc
