#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <zlib.h>

#include "../io.hpp"
#include "image.hpp"

namespace gil::png {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = ::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

inline constexpr std::array<std::uint8_t, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

inline std::uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

}  // namespace detail

// 8-bit truecolor, no interlace, filter type 0 on every row.
inline std::vector<std::uint8_t> encode(const Image& img) {
    std::vector<std::uint8_t> raw;
    raw.reserve(img.height * (img.width * 3 + 1));
    for (std::size_t y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const auto* row = img.pixels.data() + y * img.width * 3;
        raw.insert(raw.end(), row, row + img.width * 3);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    z.resize(zlen);

    std::vector<std::uint8_t> out(detail::kSignature.begin(), detail::kSignature.end());
    std::vector<std::uint8_t> ihdr;
    detail::put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    detail::put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
    detail::put_chunk(out, "IHDR", ihdr);
    detail::put_chunk(out, "IDAT", z);
    detail::put_chunk(out, "IEND", {});
    return out;
}

inline void write(const Image& img, const std::filesystem::path& path) { write_file_atomic(path, encode(img)); }

// Reads 8-bit RGB, non-interlaced PNGs (any row filter).
inline Image decode(const std::vector<std::uint8_t>& bytes) {
    auto fail = [](const std::string& why) { return std::runtime_error("png: " + why); };
    if (bytes.size() < 8 || !std::equal(detail::kSignature.begin(), detail::kSignature.end(), bytes.begin()))
        throw fail("bad signature");
    std::size_t pos = 8, width = 0, height = 0;
    std::vector<std::uint8_t> z;
    while (pos + 12 <= bytes.size()) {
        const std::uint32_t len = detail::get_u32(&bytes[pos]);
        const std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
        if (pos + 12 + len > bytes.size()) throw fail("truncated chunk");
        const std::uint8_t* data = &bytes[pos + 8];
        if (::crc32(0L, &bytes[pos + 4], len + 4) != detail::get_u32(data + len)) throw fail("crc mismatch");
        if (type == "IHDR") {
            width = detail::get_u32(data);
            height = detail::get_u32(data + 4);
            if (data[8] != 8 || data[9] != 2 || data[12] != 0) throw fail("only 8-bit RGB non-interlaced supported");
        } else if (type == "IDAT") {
            z.insert(z.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    const std::size_t stride = width * 3;
    std::vector<std::uint8_t> raw(height * (stride + 1));
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, z.data(), static_cast<uLong>(z.size())) != Z_OK || rawlen != raw.size())
        throw fail("inflate failed");

    Image img(width, height);
    std::vector<std::uint8_t> prev(stride, 0);
    for (std::size_t y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = &raw[y * (stride + 1) + 1];
        std::uint8_t* dst = img.pixels.data() + y * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= 3 ? dst[i - 3] : 0, b = prev[i], c = i >= 3 ? prev[i - 3] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw fail("unknown filter");
            }
            dst[i] = static_cast<std::uint8_t>(v);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

}  // namespace gil::png
