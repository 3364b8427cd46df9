#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

#include "tlm/error.hpp"

// Little-endian fixed-width read/write helpers for the binary artifact formats.
namespace tlm::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
    requires std::is_arithmetic_v<T>
void write(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
    requires std::is_arithmetic_v<T>
void write_span(std::ostream& out, std::span<const T> values) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

inline void write_string(std::ostream& out, const std::string& s) {
    write<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
    requires std::is_arithmetic_v<T>
T read(std::istream& in) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw FormatError("unexpected end of binary file");
    return value;
}

template <typename T>
    requires std::is_arithmetic_v<T>
void read_span(std::istream& in, std::span<T> values) {
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()))) {
        throw FormatError("unexpected end of binary file");
    }
}

inline std::string read_string(std::istream& in, std::uint64_t max_len = (1ULL << 32)) {
    auto n = read<std::uint64_t>(in);
    if (n > max_len) throw FormatError("string length out of range");
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("unexpected end of binary file");
    return s;
}

inline void expect_header(std::istream& in, const std::string& header) {
    std::string got(header.size(), '\0');
    if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != header) {
        throw FormatError("bad file header, expected " + header.substr(0, header.find('\n')));
    }
}

}  // namespace tlm::binio
