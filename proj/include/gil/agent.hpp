#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "network.hpp"
#include "optimizer.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace gil {

// Per-site channel layout shared by the lattice and the network output.
namespace channel {
inline constexpr std::size_t red = 0;
inline constexpr std::size_t green = 1;
inline constexpr std::size_t blue = 2;
inline constexpr std::size_t fitness = 3;
inline constexpr std::size_t move_begin = 4;
inline constexpr std::size_t move_count = 5;
inline constexpr std::size_t scored = 4;  // color + fitness
}  // namespace channel

enum class Direction : std::uint8_t { Stay = 0, Up = 1, Down = 2, Left = 3, Right = 4 };
inline constexpr std::size_t kDirectionCount = 5;

struct Displacement {
    int dx;
    int dy;
};

// y grows downward.
constexpr Displacement displacement(Direction d) noexcept {
    switch (d) {
        case Direction::Up: return {0, -1};
        case Direction::Down: return {0, 1};
        case Direction::Left: return {-1, 0};
        case Direction::Right: return {1, 0};
        case Direction::Stay: break;
    }
    return {0, 0};
}

constexpr const char* to_string(Direction d) noexcept {
    constexpr const char* names[] = {"Stay", "Up", "Down", "Left", "Right"};
    return names[static_cast<std::size_t>(d)];
}

using Color = std::array<double, 3>;

// The network's 3x3x9 output. Movement logits are the center site's
// channels 4..8 and are read through the tensor, never copied.
class Prediction {
public:
    Prediction() = default;
    explicit Prediction(Tensor3 tensor) : tensor_(std::move(tensor)) {
        require_shape(tensor_, kWindow, kWindow, kStateChannels, "Prediction");
    }

    const Tensor3& tensor() const noexcept { return tensor_; }

    std::span<const double, channel::move_count> move_logits() const noexcept {
        return std::span<const double, channel::move_count>(tensor_.site(1, 1).data() + channel::move_begin,
                                                            channel::move_count);
    }

    // Color and fitness channels of all nine sites, site-major.
    std::array<double, kWindow * kWindow * channel::scored> predicted_state() const noexcept {
        std::array<double, kWindow * kWindow * channel::scored> out{};
        std::size_t k = 0;
        for (std::size_t y = 0; y < kWindow; ++y)
            for (std::size_t x = 0; x < kWindow; ++x)
                for (std::size_t c = 0; c < channel::scored; ++c) out[k++] = tensor_(y, x, c);
        return out;
    }

private:
    Tensor3 tensor_;
};

// Three fixed +-1 vectors over the flattened parameters, one per color
// channel, stored interleaved as signs[3 * i + c].
class ColorProjection {
public:
    explicit ColorProjection(std::uint64_t seed) : seed_(seed), signs_(3 * kParamCount) {
        Rng rng(derive_seed(seed, stream::color_projection));
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < kParamCount; i += 64) {
                const std::uint64_t bits = rng.next_u64();
                for (std::size_t b = 0; b < 64 && i + b < kParamCount; ++b)
                    signs_[3 * (i + b) + c] = (bits >> b) & 1U ? 1.0 : -1.0;
            }
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }
    double sign(std::size_t c, std::size_t i) const noexcept { return signs_[3 * i + c]; }
    std::span<const double> interleaved() const noexcept { return signs_; }

private:
    std::uint64_t seed_;
    std::vector<double> signs_;
};

inline double logistic(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

// Standardize the flattened parameters, project onto the three sign vectors,
// scale by 1/sqrt(d) and squash. Each component lies in (0, 1). Parameter
// vectors with standard deviation below 1e-8 map to mid-gray.
inline Color derive_color(const NetworkParams& params, const ColorProjection& projection) {
    const auto theta = params.values();
    const std::size_t n = theta.size();
    const double d = static_cast<double>(n);

    // Four-lane accumulators; the order is fixed, so results are reproducible.
    std::array<double, 4> lane{};
    for (std::size_t i = 0; i < n; ++i) lane[i & 3] += theta[i];
    const double mean = ((lane[0] + lane[1]) + (lane[2] + lane[3])) / d;

    lane = {};
    std::array<double, 6> dot{};
    const double* p = projection.interleaved().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = theta[i] - mean;
        lane[i & 3] += x * x;
        const std::size_t half = (i & 1) * 3;
        dot[half + 0] += p[3 * i + 0] * x;
        dot[half + 1] += p[3 * i + 1] * x;
        dot[half + 2] += p[3 * i + 2] * x;
    }
    const double sd = std::sqrt(((lane[0] + lane[1]) + (lane[2] + lane[3])) / d);

    Color color{0.5, 0.5, 0.5};
    if (sd < 1e-8) return color;  // no spread: standardized vector is zero
    for (std::size_t c = 0; c < 3; ++c) color[c] = logistic((dot[c] + dot[3 + c]) / sd / std::sqrt(d));
    return color;
}

inline Color derive_color(const NetworkParams& params, std::uint64_t projection_seed) {
    return derive_color(params, ColorProjection(projection_seed));
}

struct CellAgent {
    std::int64_t id = -1;
    NetworkParams params;
    OptimizerState optimizer;
    double fitness = 0.5;
    Color color{0.5, 0.5, 0.5};
    Rng rng;
    double last_loss = 0.0;
    std::shared_ptr<const ColorProjection> projection;
};

inline constexpr double kInitialFitness = 0.5;

inline CellAgent agent_init(std::int64_t id, std::uint64_t seed, double learning_rate, double momentum,
                            std::shared_ptr<const ColorProjection> projection) {
    if (!projection) throw ContractViolation("agent_init: missing color projection");
    CellAgent a;
    a.id = id;
    Rng param_rng(derive_seed(seed, stream::agent_params, static_cast<std::uint64_t>(id)));
    a.params = NetworkParams::kaiming_uniform(param_rng);
    a.optimizer = OptimizerState(kParamCount, learning_rate, momentum);
    a.fitness = kInitialFitness;
    a.rng = Rng(derive_seed(seed, stream::agent_moves, static_cast<std::uint64_t>(id)));
    a.projection = std::move(projection);
    a.color = derive_color(a.params, *a.projection);
    a.last_loss = 0.0;
    return a;
}

// Standalone form: the color projection is derived from the same seed.
inline CellAgent agent_init(std::int64_t id, std::uint64_t seed, double learning_rate, double momentum) {
    return agent_init(id, seed, learning_rate, momentum, std::make_shared<const ColorProjection>(seed));
}

struct AgentForward {
    Prediction prediction;
    GradientTape tape;
};

inline AgentForward agent_predict(const CellAgent& agent, const Tensor3& neighborhood) {
    auto fwd = network_forward(agent.params, neighborhood);
    return {Prediction(std::move(fwd.output)), std::move(fwd.tape)};
}

// Uniformly random direction with probability epsilon, otherwise the argmax
// of the logits (lowest index on ties).
inline Direction select_move(std::span<const double, channel::move_count> logits, Rng& rng, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw ContractViolation("select_move: epsilon must be in [0, 1], got " + std::to_string(epsilon));
    std::size_t best = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) throw ContractViolation("select_move: non-finite movement logit");
        if (logits[i] > logits[best]) best = i;
    }
    if (epsilon > 0.0 && rng.uniform() < epsilon) return static_cast<Direction>(rng.below(kDirectionCount));
    return static_cast<Direction>(best);
}

struct LossResult {
    double loss = 0.0;
    Tensor3 d_output;
};

// Mean squared error over the 36 color/fitness values; movement channels are
// masked out of both the loss and its gradient.
inline LossResult compute_loss(const Prediction& prediction, const Tensor3& actual_next) {
    require_shape(actual_next, kWindow, kWindow, kStateChannels, "compute_loss");
    constexpr double n = kWindow * kWindow * channel::scored;
    const Tensor3& pred = prediction.tensor();
    LossResult r{0.0, Tensor3(kWindow, kWindow, kStateChannels)};
    for (std::size_t y = 0; y < kWindow; ++y) {
        for (std::size_t x = 0; x < kWindow; ++x) {
            for (std::size_t c = 0; c < channel::scored; ++c) {
                const double diff = pred(y, x, c) - actual_next(y, x, c);
                r.loss += diff * diff;
                r.d_output(y, x, c) = 2.0 / n * diff;
            }
        }
    }
    r.loss /= n;
    return r;
}

// One backprop + momentum step, then recolor. `tape` must come from
// agent_predict on this agent's current parameters.
template <class Backward = DefaultBackward>
void agent_learn(CellAgent& agent, GradientTape& tape, const Tensor3& d_output, double loss, Backward backward = {}) {
    if (tape.params_fingerprint() != agent.params.fingerprint() || !tape.valid())
        throw ContractViolation("agent_learn: tape does not belong to agent " + std::to_string(agent.id));
    const auto gradient = backward(agent.params, tape, d_output);
    sgd_momentum_step(agent.params, gradient, agent.optimizer);
    agent.color = derive_color(agent.params, *agent.projection);
    agent.last_loss = loss;
}

inline constexpr double kFitnessSmoothing = 0.1;

// Exponential moving average of 1 / (1 + loss).
inline double update_fitness(double old_fitness, double loss) {
    if (!(loss >= 0.0)) throw ContractViolation("update_fitness: loss must be >= 0");
    if (!(old_fitness >= 0.0 && old_fitness <= 1.0))
        throw ContractViolation("update_fitness: fitness must be in [0, 1]");
    const double f = (1.0 - kFitnessSmoothing) * old_fitness + kFitnessSmoothing * (1.0 / (1.0 + loss));
    return std::clamp(f, 0.0, 1.0);
}

}  // namespace gil
