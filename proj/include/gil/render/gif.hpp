#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "../error.hpp"
#include "../io.hpp"
#include "image.hpp"

namespace gil::gif {

struct Palette {
    std::vector<Rgb8> colors;
    std::vector<std::uint8_t> indices;  // one per pixel
};

namespace detail {

inline std::uint32_t pack(Rgb8 c) { return (std::uint32_t{c[0]} << 16) | (std::uint32_t{c[1]} << 8) | c[2]; }
inline Rgb8 unpack(std::uint32_t v) {
    return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

struct WeightedColor {
    Rgb8 color;
    std::uint32_t count;
};

}  // namespace detail

// Adaptive palette of at most 256 entries by median cut. Frames with 256 or
// fewer distinct colors keep them exactly.
inline Palette quantize(const Image& img) {
    std::unordered_map<std::uint32_t, std::uint32_t> histogram;
    const std::size_t n = img.width * img.height;
    for (std::size_t i = 0; i < n; ++i) ++histogram[detail::pack(img.at(i % img.width, i / img.width))];

    std::vector<detail::WeightedColor> colors;
    colors.reserve(histogram.size());
    for (const auto& [packed, count] : histogram) colors.push_back({detail::unpack(packed), count});
    std::sort(colors.begin(), colors.end(),
              [](const auto& a, const auto& b) { return detail::pack(a.color) < detail::pack(b.color); });

    Palette pal;
    std::unordered_map<std::uint32_t, std::uint8_t> lookup;
    if (colors.size() <= 256) {
        for (const auto& c : colors) {
            lookup[detail::pack(c.color)] = static_cast<std::uint8_t>(pal.colors.size());
            pal.colors.push_back(c.color);
        }
    } else {
        struct Box {
            std::size_t begin, end;  // range in `colors`
        };
        auto extent = [&](const Box& b, int& axis) {
            std::array<int, 3> lo{255, 255, 255}, hi{0, 0, 0};
            for (std::size_t i = b.begin; i < b.end; ++i)
                for (int a = 0; a < 3; ++a) {
                    lo[a] = std::min<int>(lo[a], colors[i].color[a]);
                    hi[a] = std::max<int>(hi[a], colors[i].color[a]);
                }
            axis = 0;
            for (int a = 1; a < 3; ++a)
                if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
            return hi[axis] - lo[axis];
        };
        std::vector<Box> boxes{{0, colors.size()}};
        while (boxes.size() < 256) {
            int best = -1, best_range = 0, best_axis = 0;
            for (std::size_t b = 0; b < boxes.size(); ++b) {
                if (boxes[b].end - boxes[b].begin < 2) continue;
                int axis;
                const int r = extent(boxes[b], axis);
                if (r > best_range) {
                    best = static_cast<int>(b);
                    best_range = r;
                    best_axis = axis;
                }
            }
            if (best < 0) break;
            Box box = boxes[best];
            std::sort(colors.begin() + box.begin, colors.begin() + box.end, [&](const auto& a, const auto& b) {
                return a.color[best_axis] != b.color[best_axis] ? a.color[best_axis] < b.color[best_axis]
                                                                : detail::pack(a.color) < detail::pack(b.color);
            });
            std::uint64_t total = 0;
            for (std::size_t i = box.begin; i < box.end; ++i) total += colors[i].count;
            std::uint64_t acc = 0;
            std::size_t split = box.begin + 1;
            for (std::size_t i = box.begin; i + 1 < box.end; ++i) {
                acc += colors[i].count;
                split = i + 1;
                if (2 * acc >= total) break;
            }
            boxes[best] = {box.begin, split};
            boxes.push_back({split, box.end});
        }
        for (const auto& b : boxes) {
            std::array<std::uint64_t, 3> sum{};
            std::uint64_t total = 0;
            for (std::size_t i = b.begin; i < b.end; ++i) {
                for (int a = 0; a < 3; ++a) sum[a] += std::uint64_t{colors[i].color[a]} * colors[i].count;
                total += colors[i].count;
            }
            Rgb8 mean{};
            for (int a = 0; a < 3; ++a) mean[a] = static_cast<std::uint8_t>((sum[a] + total / 2) / total);
            pal.colors.push_back(mean);
        }
        for (const auto& c : colors) {
            std::size_t best = 0;
            int best_d = INT32_MAX;
            for (std::size_t p = 0; p < pal.colors.size(); ++p) {
                int d = 0;
                for (int a = 0; a < 3; ++a) {
                    const int diff = int{c.color[a]} - int{pal.colors[p][a]};
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = p;
                }
            }
            lookup[detail::pack(c.color)] = static_cast<std::uint8_t>(best);
        }
    }
    pal.indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) pal.indices[i] = lookup.at(detail::pack(img.at(i % img.width, i / img.width)));
    return pal;
}

namespace detail {

class BitWriter {
public:
    explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}
    void put(std::uint32_t code, int bits) {
        acc_ |= std::uint64_t{code} << nbits_;
        nbits_ += bits;
        while (nbits_ >= 8) {
            out_.push_back(static_cast<std::uint8_t>(acc_));
            acc_ >>= 8;
            nbits_ -= 8;
        }
    }
    void flush() {
        if (nbits_ > 0) out_.push_back(static_cast<std::uint8_t>(acc_));
        acc_ = 0;
        nbits_ = 0;
    }

private:
    std::vector<std::uint8_t>& out_;
    std::uint64_t acc_ = 0;
    int nbits_ = 0;
};

inline std::vector<std::uint8_t> lzw_encode(const std::vector<std::uint8_t>& indices, int min_code_size) {
    std::vector<std::uint8_t> out;
    BitWriter bw(out);
    const std::uint32_t clear = 1u << min_code_size, eoi = clear + 1;
    std::vector<std::array<std::uint16_t, 256>> trie(4096);
    auto reset = [&] {
        for (auto& t : trie) t.fill(0);
    };
    int cs = min_code_size + 1;
    std::uint32_t next = eoi + 1;
    reset();
    bw.put(clear, cs);
    if (indices.empty()) {
        bw.put(eoi, cs);
        bw.flush();
        return out;
    }
    std::uint32_t prefix = indices[0];
    for (std::size_t i = 1; i < indices.size(); ++i) {
        const std::uint8_t k = indices[i];
        if (const auto c = trie[prefix][k]) {
            prefix = c;
            continue;
        }
        bw.put(prefix, cs);
        if (next < 4096) {
            trie[prefix][k] = static_cast<std::uint16_t>(next++);
            if (next > (1u << cs) && cs < 12) ++cs;
        } else {
            bw.put(clear, cs);
            reset();
            cs = min_code_size + 1;
            next = eoi + 1;
        }
        prefix = k;
    }
    bw.put(prefix, cs);
    bw.put(eoi, cs);
    bw.flush();
    return out;
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace detail

// Animated GIF89a, looping forever, one local palette per frame.
inline std::vector<std::uint8_t> encode_animation(const std::vector<Image>& frames, unsigned frame_delay_ms) {
    if (frames.empty()) throw ContractViolation("encode_animation: at least one frame required");
    const std::size_t w = frames.front().width, h = frames.front().height;
    if (w == 0 || h == 0 || w > 0xffff || h > 0xffff) throw ContractViolation("encode_animation: bad frame size");
    for (const auto& f : frames)
        if (f.width != w || f.height != h) throw ContractViolation("encode_animation: frames differ in size");

    std::vector<std::uint8_t> out{'G', 'I', 'F', '8', '9', 'a'};
    detail::put_u16(out, static_cast<std::uint32_t>(w));
    detail::put_u16(out, static_cast<std::uint32_t>(h));
    out.insert(out.end(), {0x70, 0, 0});  // no global table, 8-bit color resolution
    const char netscape[] = "NETSCAPE2.0";
    out.insert(out.end(), {0x21, 0xFF, 11});
    out.insert(out.end(), netscape, netscape + 11);
    out.insert(out.end(), {3, 1, 0, 0, 0});

    const std::uint32_t delay_cs = (frame_delay_ms + 5) / 10;
    for (const auto& f : frames) {
        const Palette pal = quantize(f);
        int bits = 1;
        while ((1u << bits) < pal.colors.size()) ++bits;
        out.insert(out.end(), {0x21, 0xF9, 4, 0x04});
        detail::put_u16(out, delay_cs);
        out.insert(out.end(), {0, 0});
        out.push_back(0x2C);
        detail::put_u16(out, 0);
        detail::put_u16(out, 0);
        detail::put_u16(out, static_cast<std::uint32_t>(w));
        detail::put_u16(out, static_cast<std::uint32_t>(h));
        out.push_back(static_cast<std::uint8_t>(0x80 | (bits - 1)));
        for (std::size_t i = 0; i < (1u << bits); ++i) {
            const Rgb8 c = i < pal.colors.size() ? pal.colors[i] : Rgb8{0, 0, 0};
            out.insert(out.end(), c.begin(), c.end());
        }
        const int min_code = std::max(2, bits);
        out.push_back(static_cast<std::uint8_t>(min_code));
        const auto data = detail::lzw_encode(pal.indices, min_code);
        for (std::size_t i = 0; i < data.size(); i += 255) {
            const std::size_t len = std::min<std::size_t>(255, data.size() - i);
            out.push_back(static_cast<std::uint8_t>(len));
            out.insert(out.end(), data.begin() + i, data.begin() + i + len);
        }
        out.push_back(0);
    }
    out.push_back(0x3B);
    return out;
}

inline void encode_animation(const std::vector<Image>& frames, const std::filesystem::path& path,
                             unsigned frame_delay_ms) {
    write_file_atomic(path, encode_animation(frames, frame_delay_ms));
}

struct Animation {
    std::vector<Image> frames;
    std::vector<unsigned> delays_ms;
};

// Decodes non-interlaced GIFs, compositing each frame onto the canvas.
inline Animation decode(const std::vector<std::uint8_t>& bytes) {
    auto fail = [](const std::string& why) { return std::runtime_error("gif: " + why); };
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size()) throw fail("truncated");
    };
    auto u8 = [&] {
        need(1);
        return bytes[pos++];
    };
    auto u16 = [&] {
        need(2);
        const std::uint32_t v = bytes[pos] | (std::uint32_t{bytes[pos + 1]} << 8);
        pos += 2;
        return v;
    };
    auto read_table = [&](int size_bits) {
        std::vector<Rgb8> t(std::size_t{1} << (size_bits + 1));
        for (auto& c : t) c = {u8(), u8(), u8()};
        return t;
    };
    auto sub_blocks = [&] {
        std::vector<std::uint8_t> data;
        for (std::uint8_t len; (len = u8()) != 0;) {
            need(len);
            data.insert(data.end(), bytes.begin() + pos, bytes.begin() + pos + len);
            pos += len;
        }
        return data;
    };

    need(6);
    const std::string sig(bytes.begin(), bytes.begin() + 6);
    if (sig != "GIF89a" && sig != "GIF87a") throw fail("bad signature");
    pos = 6;
    const std::size_t w = u16(), h = u16();
    const std::uint8_t flags = u8();
    u8();
    u8();
    std::vector<Rgb8> global;
    if (flags & 0x80) global = read_table(flags & 7);

    Animation anim;
    Image canvas(w, h);
    unsigned pending_delay = 0;
    for (;;) {
        const std::uint8_t tag = u8();
        if (tag == 0x3B) break;
        if (tag == 0x21) {
            const std::uint8_t label = u8();
            const auto data = sub_blocks();
            if (label == 0xF9 && data.size() >= 4) pending_delay = (data[1] | (unsigned{data[2]} << 8)) * 10;
            continue;
        }
        if (tag != 0x2C) throw fail("unexpected block");
        const std::size_t left = u16(), top = u16(), fw = u16(), fh = u16();
        const std::uint8_t f = u8();
        if (f & 0x40) throw fail("interlaced frames not supported");
        const auto table = (f & 0x80) ? read_table(f & 7) : global;
        if (table.empty()) throw fail("frame without color table");
        const int min_code = u8();
        if (min_code < 2 || min_code > 8) throw fail("bad LZW code size");
        const auto data = sub_blocks();

        // LZW decode
        std::vector<std::uint8_t> indices;
        indices.reserve(fw * fh);
        const std::uint32_t clear = 1u << min_code, eoi = clear + 1;
        std::vector<std::vector<std::uint8_t>> dict;
        auto reset = [&] {
            dict.assign(eoi + 1, {});
            for (std::uint32_t i = 0; i < clear; ++i) dict[i] = {static_cast<std::uint8_t>(i)};
        };
        reset();
        int cs = min_code + 1;
        std::uint64_t acc = 0;
        int nbits = 0;
        std::size_t bp = 0;
        std::int64_t prev = -1;
        for (;;) {
            while (nbits < cs && bp < data.size()) {
                acc |= std::uint64_t{data[bp++]} << nbits;
                nbits += 8;
            }
            if (nbits < cs) break;
            const std::uint32_t code = static_cast<std::uint32_t>(acc & ((1u << cs) - 1));
            acc >>= cs;
            nbits -= cs;
            if (code == clear) {
                reset();
                cs = min_code + 1;
                prev = -1;
                continue;
            }
            if (code == eoi) break;
            std::vector<std::uint8_t> entry;
            if (code < dict.size()) {
                entry = dict[code];
                if (prev >= 0 && dict.size() < 4096) {
                    auto add = dict[prev];
                    add.push_back(entry[0]);
                    dict.push_back(std::move(add));
                }
            } else if (code == dict.size() && prev >= 0) {
                entry = dict[prev];
                entry.push_back(entry[0]);
                if (dict.size() < 4096) dict.push_back(entry);
            } else {
                throw fail("corrupt LZW stream");
            }
            indices.insert(indices.end(), entry.begin(), entry.end());
            prev = code;
            if (dict.size() == (1u << cs) && cs < 12) ++cs;
        }
        if (indices.size() < fw * fh) throw fail("short frame data");
        for (std::size_t y = 0; y < fh; ++y)
            for (std::size_t x = 0; x < fw; ++x)
                if (left + x < w && top + y < h) canvas.set(left + x, top + y, table.at(indices[y * fw + x]));
        anim.frames.push_back(canvas);
        anim.delays_ms.push_back(pending_delay);
        pending_delay = 0;
    }
    return anim;
}

}  // namespace gil::gif
