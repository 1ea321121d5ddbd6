#pragma once

// Little-endian fixed-width and varint encoding shared by the dataset cache
// and the checkpoint format.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "relrec/error.hpp"

namespace relrec::bin {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw Error(ErrorCode::parse, "unexpected end of binary stream");
    }
    return value;
}

inline void write_varint(std::ostream& out, std::uint64_t value) {
    while (value >= 0x80) {
        out.put(static_cast<char>((value & 0x7f) | 0x80));
        value >>= 7;
    }
    out.put(static_cast<char>(value));
}

inline std::uint64_t read_varint(std::istream& in) {
    std::uint64_t value = 0;
    for (int shift = 0; shift < 64; shift += 7) {
        const int byte = in.get();
        if (byte == std::char_traits<char>::eof()) {
            throw Error(ErrorCode::parse, "unexpected end of varint");
        }
        value |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
        if ((byte & 0x80) == 0) {
            return value;
        }
    }
    throw Error(ErrorCode::parse, "varint too long");
}

constexpr std::uint64_t zigzag(std::int64_t v) noexcept {
    return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}

constexpr std::int64_t unzigzag(std::uint64_t v) noexcept {
    return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1);
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_varint(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    const auto size = read_varint(in);
    if (size > (1ULL << 32)) {
        throw Error(ErrorCode::parse, "string length out of range");
    }
    std::string s(size, '\0');
    in.read(s.data(), static_cast<std::streamsize>(size));
    if (!in) {
        throw Error(ErrorCode::parse, "unexpected end of string");
    }
    return s;
}

}  // namespace relrec::bin
