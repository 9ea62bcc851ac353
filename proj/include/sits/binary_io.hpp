#pragma once

// Raw little-endian arrays on disk.

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sits/error.hpp"

namespace sits::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_value(T v)
{
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

template <typename T>
void write_plane(const fs::path& path, std::span<const T> values)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path.string());
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (T v : values) {
            const T le = byteswap_value(v);
            os.write(reinterpret_cast<const char*>(&le), sizeof(T));
        }
    }
    if (!os) throw FormatError("short write to " + path.string());
}

template <typename T>
std::vector<T> read_plane(const fs::path& path, std::size_t count)
{
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw FormatError(path.filename().string() + ": missing (" + path.string() + ")");
    const auto expected = count * sizeof(T);
    if (size != expected) {
        throw FormatError(path.filename().string() + ": size mismatch, expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(size));
    }
    std::vector<T> out(count);
    std::ifstream is(path, std::ios::binary);
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(expected));
    if (!is) throw FormatError(path.filename().string() + ": read failed");
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        for (auto& v : out) v = byteswap_value(v);
    }
    return out;
}

} // namespace sits::io
