#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "network.hpp"
#include "random.hpp"

namespace gil {

struct GradientCheckOptions {
    std::uint64_t seed = 0;  // drives the output projection and coordinate sampling
    // Kernel entries checked per layer; biases are always checked in full.
    // 0 checks every parameter (about 80k forward passes).
    std::size_t kernel_samples_per_layer = 128;
};

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    // Coordinates whose +-step probe flipped a ReLU on or off. Central
    // differences are meaningless across a kink, so these are excluded.
    std::size_t skipped_at_kinks = 0;
};

namespace detail {

struct Probe {
    double value;
    std::vector<bool> active;
};

inline void append_active(const Tensor3& pre, std::vector<bool>& out) {
    for (double v : pre.data()) out.push_back(v > 0.0);
}

inline Probe probe(const NetworkParams& params, const Tensor3& input, const Tensor3& projection) {
    auto fwd = network_forward(params, input);
    Probe p{0.0, {}};
    for (std::size_t i = 0; i < fwd.output.size(); ++i) p.value += fwd.output.data()[i] * projection.data()[i];
    append_active(TapeAccess::stem_pre(fwd.tape), p.active);
    for (std::size_t b = 0; b < 2; ++b) {
        append_active(TapeAccess::block(fwd.tape, b).hidden_pre, p.active);
        append_active(TapeAccess::block(fwd.tape, b).sum_pre, p.active);
    }
    return p;
}

}  // namespace detail

// Compares the analytic gradient with central differences of a random scalar
// projection of the network output. Per coordinate the error is
//   |a - n| / max(|a|, |n|, 1e-8).
template <class Backward = DefaultBackward>
GradientCheckReport gradient_check_report(const NetworkParams& params, const Tensor3& input, double step,
                                          const GradientCheckOptions& options = {}, Backward backward = {}) {
    if (!(step > 0.0)) throw ContractViolation("gradient_check: step must be > 0");
    Rng rng(derive_seed(options.seed, 0x67726164ULL));
    Tensor3 projection(kWindow, kWindow, kStateChannels);
    for (double& v : projection.data()) v = rng.uniform(-1.0, 1.0);

    auto fwd = network_forward(params, input);
    const std::vector<double> analytic = backward(params, fwd.tape, projection);
    const auto base = detail::probe(params, input, projection);

    std::vector<std::size_t> coords;
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        const auto& s = kLayerShapes[l];
        const std::size_t base = kLayerOffsets[l];
        std::vector<std::size_t> kernel_idx(s.kernel_count());
        std::iota(kernel_idx.begin(), kernel_idx.end(), base);
        const std::size_t take = options.kernel_samples_per_layer == 0
                                     ? kernel_idx.size()
                                     : std::min(options.kernel_samples_per_layer, kernel_idx.size());
        for (std::size_t i = 0; i < take; ++i) {  // partial Fisher-Yates
            std::swap(kernel_idx[i], kernel_idx[i + rng.below(kernel_idx.size() - i)]);
            coords.push_back(kernel_idx[i]);
        }
        for (std::size_t b = 0; b < s.cout; ++b) coords.push_back(base + s.kernel_count() + b);
    }

    NetworkParams shifted = params;
    GradientCheckReport report;
    for (std::size_t i : coords) {
        const double orig = shifted.values()[i];
        shifted.mutable_values()[i] = orig + step;
        const auto up = detail::probe(shifted, input, projection);
        shifted.mutable_values()[i] = orig - step;
        const auto down = detail::probe(shifted, input, projection);
        shifted.mutable_values()[i] = orig;
        if (up.active != base.active || down.active != base.active) {
            ++report.skipped_at_kinks;
            continue;
        }
        const double numeric = (up.value - down.value) / (2.0 * step);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
        ++report.checked;
    }
    return report;
}

template <class Backward = DefaultBackward>
double gradient_check(const NetworkParams& params, const Tensor3& input, double step,
                      const GradientCheckOptions& options = {}, Backward backward = {}) {
    return gradient_check_report(params, input, step, options, std::move(backward)).max_relative_error;
}

}  // namespace gil
