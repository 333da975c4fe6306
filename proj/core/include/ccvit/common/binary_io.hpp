#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccvit/common/error.hpp"

namespace ccvit {

// Little-endian writer over a std::ostream. Byte order is explicit so files
// are identical across hosts.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void bytes(std::string_view b) { out_.write(b.data(), static_cast<std::streamsize>(b.size())); }

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
        out_.write(b, 4);
    }

    void u64(std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
        out_.write(b, 8);
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void f32s(std::span<const float> values) {
        for (float v : values) f32(v);
    }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    bool good() const { return out_.good(); }

private:
    std::ostream& out_;
};

// Counterpart to BinaryWriter. Every read checks for truncation and throws
// FormatError naming what was being read.
class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    std::string bytes(std::size_t n, std::string_view what) {
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("truncated file while reading " + std::string(what));
        return s;
    }

    std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(bytes(1, what)[0]); }

    std::uint32_t u32(std::string_view what) {
        auto b = bytes(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }

    std::uint64_t u64(std::string_view what) {
        auto b = bytes(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }

    float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
    double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

    std::vector<float> f32s(std::size_t n, std::string_view what) {
        auto raw = bytes(n * 4, what);
        std::vector<float> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t v = 0;
            for (int k = 0; k < 4; ++k)
                v |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + k])) << (8 * k);
            out[i] = std::bit_cast<float>(v);
        }
        return out;
    }

    std::string str(std::string_view what, std::size_t max_len = 1u << 16) {
        auto n = u32(what);
        if (n > max_len) throw FormatError("implausible string length while reading " + std::string(what));
        return bytes(n, what);
    }

    // True when the stream has no bytes left.
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
};

} // namespace ccvit
