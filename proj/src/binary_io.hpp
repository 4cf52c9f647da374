#pragma once

// Little-endian primitives shared by the bundle and patterns formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "fsel/error.hpp"

namespace fsel::binio {

template <typename T>
T byteswap(T v) noexcept {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
}

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed");
}

template <typename T>
void write_le(std::ostream& out, T v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    write_bytes(out, &v, sizeof(T));
}

template <typename T>
void write_le_array(std::ostream& out, const T* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        write_bytes(out, data, n * sizeof(T));
    } else {
        for (std::size_t i = 0; i < n; ++i) write_le(out, data[i]);
    }
}

// Returns false on clean EOF before any byte, throws FormatError on a short read.
inline bool read_bytes(std::istream& in, void* data, std::size_t n, const char* what, bool eof_ok = false) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == n) return true;
    if (got == 0 && eof_ok && in.eof()) return false;
    throw FormatError(std::string("truncated input while reading ") + what);
}

template <typename T>
T read_le(std::istream& in, const char* what) {
    T v{};
    read_bytes(in, &v, sizeof(T), what);
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    return v;
}

template <typename T>
void read_le_array(std::istream& in, T* data, std::size_t n, const char* what) {
    read_bytes(in, data, n * sizeof(T), what);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < n; ++i) data[i] = byteswap(data[i]);
    }
}

inline void write_id(std::ostream& out, const std::string& id) {
    if (id.size() > UINT32_MAX) throw DataError("image id too long");
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    write_bytes(out, id.data(), id.size());
}

inline constexpr std::uint32_t kMaxIdBytes = 1u << 20;

inline std::string read_id_body(std::istream& in, std::uint32_t len) {
    if (len > kMaxIdBytes) throw FormatError("image id length " + std::to_string(len) + " exceeds limit");
    std::string id(len, '\0');
    read_bytes(in, id.data(), len, "image id");
    return id;
}

}  // namespace fsel::binio
