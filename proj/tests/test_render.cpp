#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "gil/gil.hpp"

using namespace gil;
namespace fs = std::filesystem;

namespace {

ExperimentConfig sized(std::size_t w, std::size_t h, std::size_t n) {
    ExperimentConfig c;
    c.width = w;
    c.height = h;
    c.n_cells = n;
    return c;
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) {
    const auto s = read_file(p);
    return {s.begin(), s.end()};
}

Image gradient(std::size_t w, std::size_t h) {
    Image img(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            img.set(x, y, {static_cast<std::uint8_t>(x * 255 / (w - 1)), static_cast<std::uint8_t>(y * 255 / (h - 1)),
                           static_cast<std::uint8_t>((x + y) % 256)});
    return img;
}

}  // namespace

TEST(RenderFrame, EmptyGridIsBackground) {
    const Grid g(5, 3);
    const auto img = render_frame(g, 2, {10, 20, 30});
    EXPECT_EQ(img.width, 10u);
    EXPECT_EQ(img.height, 6u);
    EXPECT_EQ(img, Image(10, 6, {10, 20, 30}));
}

TEST(RenderFrame, WhiteCellBecomesBlock) {
    Grid g(3, 3);
    g.write({0, 0}, {1.0, 1.0, 1.0}, 0.5, Direction::Stay);
    const auto img = render_frame(g, 4);
    for (std::size_t y = 0; y < 12; ++y)
        for (std::size_t x = 0; x < 12; ++x)
            EXPECT_EQ(img.at(x, y), (x < 4 && y < 4 ? Rgb8{255, 255, 255} : Rgb8{0, 0, 0})) << x << "," << y;
}

TEST(RenderFrame, RoundsAndClamps) {
    EXPECT_EQ(to_byte(0.0), 0);
    EXPECT_EQ(to_byte(1.0), 255);
    EXPECT_EQ(to_byte(0.5), 128);
    EXPECT_EQ(to_byte(-3.0), 0);
    EXPECT_EQ(to_byte(7.0), 255);
    EXPECT_EQ(to_byte(0.2), 51);
}

TEST(RenderFrame, PixelAuditOf500Cells) {
    const auto w = init_world(sized(100, 100, 500), 3);
    const std::size_t s = 3;
    const auto img = render_frame(w.grid, s);
    std::size_t audited = 0;
    for (const auto& e : w.registry.entries()) {
        const Rgb8 want{to_byte(e.agent.color[0]), to_byte(e.agent.color[1]), to_byte(e.agent.color[2])};
        for (std::size_t dy = 0; dy < s; ++dy)
            for (std::size_t dx = 0; dx < s; ++dx)
                ASSERT_EQ(img.at(e.position.x * s + dx, e.position.y * s + dy), want);
        ++audited;
    }
    EXPECT_EQ(audited, 500u);
    std::size_t background = 0;
    for (std::size_t y = 0; y < 100; ++y)
        for (std::size_t x = 0; x < 100; ++x)
            if (!w.grid.occupied({static_cast<int>(x), static_cast<int>(y)})) {
                ASSERT_EQ(img.at(x * s, y * s), (Rgb8{0, 0, 0}));
                ++background;
            }
    EXPECT_EQ(background, 9500u);
}

TEST(RenderFrame, PureAndRejectsZeroScale) {
    const auto w = init_world(sized(20, 20, 30), 1);
    const Grid before = w.grid;
    EXPECT_EQ(render_frame(w.grid), render_frame(w.grid));
    EXPECT_EQ(w.grid, before);
    EXPECT_THROW(render_frame(w.grid, 0), ContractViolation);
}

TEST(Png, RoundTrip) {
    const auto img = gradient(37, 23);
    const auto bytes = png::encode(img);
    ASSERT_GE(bytes.size(), 8u);
    EXPECT_EQ(bytes[1], 'P');
    EXPECT_EQ(png::decode(bytes), img);

    const auto path = fs::temp_directory_path() / "gil_test_render.png";
    png::write(img, path);
    EXPECT_EQ(png::decode(bytes_of(path)), img);
}

TEST(Png, RejectsCorruption) {
    auto bytes = png::encode(gradient(8, 8));
    bytes[bytes.size() / 2] ^= 0x5a;
    EXPECT_ANY_THROW(png::decode(bytes));
    EXPECT_ANY_THROW(png::decode({1, 2, 3}));
}

TEST(Gif, ExactForFewColors) {
    std::vector<Image> frames;
    for (int t = 0; t < 31; ++t) {
        const auto w = init_world(sized(16, 16, 20), static_cast<std::uint64_t>(t));
        frames.push_back(render_frame(w.grid, 2));
    }
    const auto bytes = gif::encode_animation(frames, 100);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "GIF89a");
    const auto anim = gif::decode(bytes);
    ASSERT_EQ(anim.frames.size(), 31u);
    for (std::size_t i = 0; i < 31; ++i) {
        EXPECT_EQ(anim.frames[i], frames[i]) << "frame " << i;
        EXPECT_EQ(anim.delays_ms[i], 100u);
    }
}

TEST(Gif, SingleFrame) {
    const Image img(5, 4, {1, 2, 3});
    const auto anim = gif::decode(gif::encode_animation({img}, 40));
    ASSERT_EQ(anim.frames.size(), 1u);
    EXPECT_EQ(anim.frames[0], img);
    EXPECT_EQ(anim.delays_ms[0], 40u);
}

TEST(Gif, LongRunsExerciseDictionaryReset) {
    // Noise fills the 4096-entry LZW table many times over.
    Image img(300, 200);
    Rng rng(5);
    for (std::size_t y = 0; y < 200; ++y)
        for (std::size_t x = 0; x < 300; ++x) {
            const auto v = static_cast<std::uint8_t>(rng.below(16) * 17);
            img.set(x, y, {v, static_cast<std::uint8_t>(255 - v), 0});
        }
    EXPECT_EQ(gif::decode(gif::encode_animation({img}, 10)).frames[0], img);
}

TEST(Gif, QuantizesManyColors) {
    const auto img = gradient(256, 128);
    std::set<Rgb8> distinct(reinterpret_cast<const Rgb8*>(img.pixels.data()),
                            reinterpret_cast<const Rgb8*>(img.pixels.data()) + img.width * img.height);
    ASSERT_GT(distinct.size(), 256u);
    const auto pal = gif::quantize(img);
    EXPECT_LE(pal.colors.size(), 256u);
    EXPECT_EQ(pal.indices.size(), img.width * img.height);

    const auto out = gif::decode(gif::encode_animation({img}, 10)).frames.at(0);
    ASSERT_EQ(out.width, img.width);
    ASSERT_EQ(out.height, img.height);
    double err = 0.0;
    int worst = 0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const int d = std::abs(int(img.pixels[i]) - int(out.pixels[i]));
        err += d;
        worst = std::max(worst, d);
    }
    EXPECT_LT(err / double(img.pixels.size()), 8.0);
    EXPECT_LE(worst, 64);
}

TEST(Gif, RejectsBadInput) {
    EXPECT_THROW(gif::encode_animation({}, 10), ContractViolation);
    EXPECT_THROW(gif::encode_animation({Image(2, 2), Image(3, 2)}, 10), ContractViolation);
    EXPECT_ANY_THROW(gif::decode({'G', 'I', 'F'}));
}

TEST(Plot, DrawsSeriesOnWhite) {
    const auto img = plot_loss_curves({{1.0, 0.5, 0.25}, {0.2, 0.2, 0.2}}, 200, 100);
    EXPECT_EQ(img.width, 200u);
    EXPECT_EQ(img.height, 100u);
    EXPECT_EQ(img.at(199, 0), (Rgb8{255, 255, 255}));
    std::size_t blue = 0, orange = 0;
    for (std::size_t y = 0; y < 100; ++y)
        for (std::size_t x = 0; x < 200; ++x) {
            blue += img.at(x, y) == Rgb8{31, 119, 180};
            orange += img.at(x, y) == Rgb8{255, 127, 14};
        }
    EXPECT_GT(blue, 100u);
    EXPECT_GT(orange, 100u);
    // Empty and non-finite series still produce a frame.
    EXPECT_EQ(plot_loss_curves({}).width, 480u);
    EXPECT_NO_THROW(plot_loss_curves({{std::nan(""), 1.0}}));
}
