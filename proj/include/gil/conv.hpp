#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace gil {

// Non-owning view of convolution weights. Kernels are laid out
// [cout][cin][k][k]; k is 3 (padding 1) or 1 (no padding).
struct ConvView {
    std::size_t cin = 0;
    std::size_t cout = 0;
    std::size_t ksize = 3;
    std::span<const double> kernels;
    std::span<const double> bias;

    double kernel(std::size_t co, std::size_t ci, std::size_t ky, std::size_t kx) const noexcept {
        return kernels[((co * cin + ci) * ksize + ky) * ksize + kx];
    }
};

struct ConvLayer {
    std::size_t cin = 0;
    std::size_t cout = 0;
    std::size_t ksize = 3;
    std::vector<double> kernels;
    std::vector<double> bias;

    ConvLayer() = default;
    ConvLayer(std::size_t cin_, std::size_t cout_, std::size_t ksize_ = 3)
        : cin(cin_), cout(cout_), ksize(ksize_), kernels(cout_ * cin_ * ksize_ * ksize_, 0.0), bias(cout_, 0.0) {
        if (ksize != 1 && ksize != 3) throw ShapeError("ConvLayer: kernel size must be 1 or 3");
    }

    double& kernel(std::size_t co, std::size_t ci, std::size_t ky, std::size_t kx) noexcept {
        return kernels[((co * cin + ci) * ksize + ky) * ksize + kx];
    }

    ConvView view() const noexcept { return {cin, cout, ksize, kernels, bias}; }
    operator ConvView() const noexcept { return view(); }
};

namespace detail {

// Repacks kernels as [ky][kx][cin][cout] so the innermost loop runs over
// contiguous output channels.
inline void pack_kernels(const ConvView& layer, std::vector<double>& packed) {
    const std::size_t k = layer.ksize;
    packed.resize(layer.kernels.size());
    for (std::size_t co = 0; co < layer.cout; ++co)
        for (std::size_t ci = 0; ci < layer.cin; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx)
                    packed[((ky * k + kx) * layer.cin + ci) * layer.cout + co] = layer.kernel(co, ci, ky, kx);
}

inline void check_conv(const Tensor3& input, const ConvView& layer, const char* who) {
    if (layer.ksize != 1 && layer.ksize != 3) throw ShapeError(std::string(who) + ": kernel size must be 1 or 3");
    if (input.channels() != layer.cin) {
        throw ShapeError(std::string(who) + ": input has " + std::to_string(input.channels()) +
                         " channels, layer expects " + std::to_string(layer.cin));
    }
    if (input.height() == 0 || input.width() == 0) throw ShapeError(std::string(who) + ": empty spatial extent");
    if (layer.kernels.size() != layer.cout * layer.cin * layer.ksize * layer.ksize || layer.bias.size() != layer.cout)
        throw ShapeError(std::string(who) + ": weight buffers do not match layer dimensions");
}

}  // namespace detail

// Same-size cross-correlation with zero padding, plus bias.
inline Tensor3 conv2d_forward(const Tensor3& input, const ConvView& layer) {
    detail::check_conv(input, layer, "conv2d_forward");
    const std::size_t H = input.height(), W = input.width(), cin = layer.cin, cout = layer.cout, k = layer.ksize;
    const std::ptrdiff_t pad = k == 3 ? 1 : 0;

    thread_local std::vector<double> packed;
    detail::pack_kernels(layer, packed);

    Tensor3 out(H, W, cout);
    auto od = out.data();
    auto id = input.data();
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            double* o = od.data() + out.index(y, x, 0);
            for (std::size_t co = 0; co < cout; ++co) o[co] = layer.bias[co];
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
                    const double* in = id.data() + input.index(sy, sx, 0);
                    const double* w = packed.data() + (ky * k + kx) * cin * cout;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double v = in[ci];
                        if (v == 0.0) continue;
                        const double* wr = w + ci * cout;
                        for (std::size_t co = 0; co < cout; ++co) o[co] += v * wr[co];
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates kernel/bias gradients into d_kernels/d_bias (same layout as the
// layer) and, when d_input is non-null, writes the input gradient.
inline void conv2d_backward(const Tensor3& input, const ConvView& layer, const Tensor3& d_output,
                            std::span<double> d_kernels, std::span<double> d_bias, Tensor3* d_input) {
    detail::check_conv(input, layer, "conv2d_backward");
    const std::size_t H = input.height(), W = input.width(), cin = layer.cin, cout = layer.cout, k = layer.ksize;
    if (d_output.height() != H || d_output.width() != W || d_output.channels() != cout)
        throw ShapeError("conv2d_backward: d_output shape " + d_output.shape_string());
    if (d_kernels.size() != layer.kernels.size() || d_bias.size() != cout)
        throw ShapeError("conv2d_backward: gradient buffer size mismatch");
    const std::ptrdiff_t pad = k == 3 ? 1 : 0;

    // Input gradient runs over kernels packed [ky][kx][cout][cin] so its
    // inner loop is contiguous in cin.
    thread_local std::vector<double> packed;
    thread_local std::vector<double> d_packed;
    if (d_input) {
        packed.resize(layer.kernels.size());
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx)
                        packed[((ky * k + kx) * cout + co) * cin + ci] = layer.kernel(co, ci, ky, kx);
        *d_input = Tensor3(H, W, cin);
    }
    d_packed.assign(layer.kernels.size(), 0.0);

    auto gd = d_output.data();
    auto id = input.data();
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double* g = gd.data() + d_output.index(y, x, 0);
            for (std::size_t co = 0; co < cout; ++co) d_bias[co] += g[co];
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
                    const double* in = id.data() + input.index(sy, sx, 0);
                    double* dw = d_packed.data() + (ky * k + kx) * cin * cout;
                    const double* w = d_input ? packed.data() + (ky * k + kx) * cout * cin : nullptr;
                    double* din = d_input ? d_input->data().data() + d_input->index(sy, sx, 0) : nullptr;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double v = in[ci];
                        if (v == 0.0) continue;
                        double* dwr = dw + ci * cout;
                        for (std::size_t co = 0; co < cout; ++co) dwr[co] += v * g[co];
                    }
                    if (din) {
                        for (std::size_t co = 0; co < cout; ++co) {
                            const double gc = g[co];
                            if (gc == 0.0) continue;
                            const double* wr = w + co * cin;
                            for (std::size_t ci = 0; ci < cin; ++ci) din[ci] += gc * wr[ci];
                        }
                    }
                }
            }
        }
    }
    for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx)
                    d_kernels[((co * cin + ci) * k + ky) * k + kx] +=
                        d_packed[((ky * k + kx) * cin + ci) * cout + co];
}

}  // namespace gil
