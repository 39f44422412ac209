#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "sara/errors.hpp"

namespace sara::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);

/// Appends little-endian encodings regardless of host byte order.
class ByteWriter {
public:
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { out_.append(s); }
    void str(std::string_view s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    std::string& buffer() { return out_; }
    std::string take() { return std::move(out_); }

private:
    template <typename U>
    void put_le(U v)
    {
        for (std::size_t i = 0; i < sizeof(U); ++i)
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }

    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view in) : in_(in) {}

    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

    std::string_view bytes(std::size_t n)
    {
        require(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string str()
    {
        const auto n = u32();
        return std::string(bytes(n));
    }

    std::size_t remaining() const { return in_.size() - pos_; }

private:
    void require(std::size_t n) const
    {
        if (in_.size() - pos_ < n)
            throw TruncationError("unexpected end of data: need " + std::to_string(n) + " bytes, have " +
                                  std::to_string(in_.size() - pos_));
    }

    template <typename U>
    U get_le()
    {
        require(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace sara::io
