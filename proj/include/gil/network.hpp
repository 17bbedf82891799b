#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "conv.hpp"
#include "error.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace gil {

inline constexpr std::size_t kStateChannels = 9;
inline constexpr std::size_t kHiddenChannels = 32;
inline constexpr std::size_t kWindow = 3;

enum class LayerId : std::size_t { Stem = 0, Block1A, Block1B, Block2A, Block2B, Head, Count };
inline constexpr std::size_t kLayerCount = static_cast<std::size_t>(LayerId::Count);

struct LayerShape {
    std::size_t cin, cout, ksize;
    constexpr std::size_t kernel_count() const noexcept { return cout * cin * ksize * ksize; }
    constexpr std::size_t param_count() const noexcept { return kernel_count() + cout; }
};

inline constexpr std::array<LayerShape, kLayerCount> kLayerShapes{{
    {kStateChannels, kHiddenChannels, 3},
    {kHiddenChannels, kHiddenChannels, 3},
    {kHiddenChannels, kHiddenChannels, 3},
    {kHiddenChannels, kHiddenChannels, 3},
    {kHiddenChannels, kHiddenChannels, 3},
    {kHiddenChannels, kStateChannels, 1},
}};

// Offset of each layer's [kernels..., bias...] slice in the flat vector.
inline constexpr std::array<std::size_t, kLayerCount + 1> kLayerOffsets = [] {
    std::array<std::size_t, kLayerCount + 1> off{};
    for (std::size_t i = 0; i < kLayerCount; ++i) off[i + 1] = off[i] + kLayerShapes[i].param_count();
    return off;
}();

inline constexpr std::size_t kParamCount = kLayerOffsets[kLayerCount];

// Stem conv 9->32, two residual blocks at width 32, 1x1 head 32->9. All
// weights live in one contiguous vector in layer order, each layer as its
// kernels followed by its bias, so flatten/unflatten are plain copies.
class NetworkParams {
public:
    NetworkParams() : values_(kParamCount, 0.0) {}

    static NetworkParams unflatten(std::span<const double> flat) {
        if (flat.size() != kParamCount)
            throw ShapeError("NetworkParams::unflatten: expected " + std::to_string(kParamCount) + " values, got " +
                             std::to_string(flat.size()));
        NetworkParams p;
        std::copy(flat.begin(), flat.end(), p.values_.begin());
        return p;
    }

    // Kaiming-uniform kernels (bound sqrt(6 / fan_in)), zero biases.
    static NetworkParams kaiming_uniform(Rng& rng) {
        NetworkParams p;
        for (std::size_t l = 0; l < kLayerCount; ++l) {
            const auto& s = kLayerShapes[l];
            const double bound = std::sqrt(6.0 / static_cast<double>(s.cin * s.ksize * s.ksize));
            double* k = p.values_.data() + kLayerOffsets[l];
            for (std::size_t i = 0; i < s.kernel_count(); ++i) k[i] = rng.uniform(-bound, bound);
        }
        return p;
    }

    std::vector<double> flatten() const { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> mutable_values() noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    ConvView layer(LayerId id) const noexcept {
        const auto i = static_cast<std::size_t>(id);
        const auto& s = kLayerShapes[i];
        std::span<const double> all(values_);
        return {s.cin, s.cout, s.ksize, all.subspan(kLayerOffsets[i], s.kernel_count()),
                all.subspan(kLayerOffsets[i] + s.kernel_count(), s.cout)};
    }

    std::span<double> kernels(LayerId id) noexcept {
        const auto i = static_cast<std::size_t>(id);
        return std::span<double>(values_).subspan(kLayerOffsets[i], kLayerShapes[i].kernel_count());
    }
    std::span<double> bias(LayerId id) noexcept {
        const auto i = static_cast<std::size_t>(id);
        return std::span<double>(values_).subspan(kLayerOffsets[i] + kLayerShapes[i].kernel_count(),
                                                  kLayerShapes[i].cout);
    }

    // Cheap content hash used to pair a tape with the parameters it saw.
    std::uint64_t fingerprint() const noexcept {
        std::array<std::uint64_t, 4> h{0xcbf29ce484222325ULL, 0x84222325cbf29ce4ULL, 0x9e3779b97f4a7c15ULL,
                                       0x632be59bd9b4e019ULL};
        const std::size_t n = values_.size();
        std::size_t i = 0;
        for (; i + 4 <= n; i += 4)
            for (std::size_t j = 0; j < 4; ++j)
                h[j] = (h[j] ^ std::bit_cast<std::uint64_t>(values_[i + j])) * 0x100000001b3ULL;
        for (; i < n; ++i) h[0] = (h[0] ^ std::bit_cast<std::uint64_t>(values_[i])) * 0x100000001b3ULL;
        return splitmix64(h[0] ^ splitmix64(h[1] ^ splitmix64(h[2] ^ splitmix64(h[3]))));
    }

    bool operator==(const NetworkParams&) const = default;

private:
    std::vector<double> values_;
};

// Activations cached by one forward pass. Single use.
class GradientTape {
public:
    bool consumed() const noexcept { return consumed_; }
    bool valid() const noexcept { return valid_; }
    std::uint64_t params_fingerprint() const noexcept { return fingerprint_; }

private:
    friend struct TapeAccess;

    struct BlockCache {
        Tensor3 input;  // post-activation block input
        Tensor3 hidden_pre;
        Tensor3 hidden;
        Tensor3 sum_pre;  // x + conv(relu(conv(x))) before the outer relu
    };

    Tensor3 input_;
    Tensor3 stem_pre_;
    std::array<BlockCache, 2> blocks_;
    Tensor3 head_input_;
    std::uint64_t fingerprint_ = 0;
    bool valid_ = false;
    bool consumed_ = false;
};

struct TapeAccess {
    static GradientTape::BlockCache& block(GradientTape& t, std::size_t i) { return t.blocks_[i]; }
    static Tensor3& input(GradientTape& t) { return t.input_; }
    static Tensor3& stem_pre(GradientTape& t) { return t.stem_pre_; }
    static Tensor3& head_input(GradientTape& t) { return t.head_input_; }
    static void seal(GradientTape& t, std::uint64_t fp) {
        t.fingerprint_ = fp;
        t.valid_ = true;
        t.consumed_ = false;
    }
    static void consume(GradientTape& t) { t.consumed_ = true; }
};

namespace detail {

inline Tensor3 relu(const Tensor3& t) {
    Tensor3 out = t;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

// grad *= 1[pre > 0]
inline void relu_backward(const Tensor3& pre, Tensor3& grad) {
    auto p = pre.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(p[i] > 0.0)) g[i] = 0.0;
}

inline void add_inplace(Tensor3& a, const Tensor3& b) {
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

}  // namespace detail

struct ForwardResult {
    Tensor3 output;
    GradientTape tape;
};

// stem -> relu -> block1 -> block2 -> head, where a block computes
// relu(x + conv_b(relu(conv_a(x)))). The head is linear.
inline ForwardResult network_forward(const NetworkParams& params, const Tensor3& input) {
    require_shape(input, kWindow, kWindow, kStateChannels, "network_forward");
    if (!input.all_finite()) throw ContractViolation("network_forward: non-finite input");

    ForwardResult r;
    GradientTape& tape = r.tape;
    TapeAccess::input(tape) = input;
    TapeAccess::stem_pre(tape) = conv2d_forward(input, params.layer(LayerId::Stem));
    Tensor3 x = detail::relu(TapeAccess::stem_pre(tape));

    constexpr std::array<std::array<LayerId, 2>, 2> block_layers{
        {{LayerId::Block1A, LayerId::Block1B}, {LayerId::Block2A, LayerId::Block2B}}};
    for (std::size_t b = 0; b < 2; ++b) {
        auto& c = TapeAccess::block(tape, b);
        c.hidden_pre = conv2d_forward(x, params.layer(block_layers[b][0]));
        c.hidden = detail::relu(c.hidden_pre);
        c.sum_pre = conv2d_forward(c.hidden, params.layer(block_layers[b][1]));
        detail::add_inplace(c.sum_pre, x);
        c.input = std::move(x);
        x = detail::relu(c.sum_pre);
    }
    r.output = conv2d_forward(x, params.layer(LayerId::Head));
    TapeAccess::head_input(tape) = std::move(x);
    TapeAccess::seal(tape, params.fingerprint());
    return r;
}

// Reverse-mode gradient of sum(output * d_output) with respect to every
// parameter, in flattened parameter order. Consumes the tape.
inline std::vector<double> network_backward(const NetworkParams& params, GradientTape& tape,
                                            const Tensor3& d_output) {
    if (!tape.valid()) throw ContractViolation("network_backward: tape was not produced by network_forward");
    if (tape.consumed()) throw ContractViolation("network_backward: tape already used");
    if (tape.params_fingerprint() != params.fingerprint())
        throw ContractViolation("network_backward: tape does not match these parameters");
    require_shape(d_output, kWindow, kWindow, kStateChannels, "network_backward");
    if (!d_output.all_finite()) throw ContractViolation("network_backward: non-finite d_output");
    TapeAccess::consume(tape);

    std::vector<double> grad(kParamCount, 0.0);
    auto slot = [&](LayerId id) {
        const auto i = static_cast<std::size_t>(id);
        std::span<double> all(grad);
        return std::pair{all.subspan(kLayerOffsets[i], kLayerShapes[i].kernel_count()),
                         all.subspan(kLayerOffsets[i] + kLayerShapes[i].kernel_count(), kLayerShapes[i].cout)};
    };

    Tensor3 dx;
    {
        auto [dk, db] = slot(LayerId::Head);
        conv2d_backward(TapeAccess::head_input(tape), params.layer(LayerId::Head), d_output, dk, db, &dx);
    }
    constexpr std::array<std::array<LayerId, 2>, 2> block_layers{
        {{LayerId::Block1A, LayerId::Block1B}, {LayerId::Block2A, LayerId::Block2B}}};
    for (std::size_t b = 2; b-- > 0;) {
        auto& c = TapeAccess::block(tape, b);
        detail::relu_backward(c.sum_pre, dx);  // dx is now d(sum_pre)
        Tensor3 d_hidden;
        {
            auto [dk, db] = slot(block_layers[b][1]);
            conv2d_backward(c.hidden, params.layer(block_layers[b][1]), dx, dk, db, &d_hidden);
        }
        detail::relu_backward(c.hidden_pre, d_hidden);
        Tensor3 d_in;
        {
            auto [dk, db] = slot(block_layers[b][0]);
            conv2d_backward(c.input, params.layer(block_layers[b][0]), d_hidden, dk, db, &d_in);
        }
        detail::add_inplace(dx, d_in);  // skip connection
    }
    detail::relu_backward(TapeAccess::stem_pre(tape), dx);
    {
        auto [dk, db] = slot(LayerId::Stem);
        conv2d_backward(TapeAccess::input(tape), params.layer(LayerId::Stem), dx, dk, db, nullptr);
    }
    return grad;
}

struct DefaultBackward {
    std::vector<double> operator()(const NetworkParams& p, GradientTape& t, const Tensor3& d) const {
        return network_backward(p, t, d);
    }
};

}  // namespace gil
