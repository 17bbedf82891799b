#pragma once

#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "network.hpp"

namespace gil {

struct OptimizerState {
    std::vector<double> velocity;
    double learning_rate = 0.01;
    double momentum = 0.9;

    OptimizerState() = default;
    OptimizerState(std::size_t n, double lr, double mu) : velocity(n, 0.0), learning_rate(lr), momentum(mu) {
        if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0, got " + std::to_string(lr));
        if (!(mu >= 0.0 && mu < 1.0)) throw ConfigError("momentum must be in [0, 1), got " + std::to_string(mu));
    }

    bool operator==(const OptimizerState&) const = default;
};

// Classical momentum: v <- mu * v + g; theta <- theta - lr * v.
inline void sgd_momentum_step(std::span<double> theta, std::span<const double> gradient, OptimizerState& state) {
    if (theta.size() != gradient.size() || state.velocity.size() != theta.size())
        throw ShapeError("sgd_momentum_step: params " + std::to_string(theta.size()) + ", gradient " +
                         std::to_string(gradient.size()) + ", velocity " + std::to_string(state.velocity.size()));
    const double mu = state.momentum, lr = state.learning_rate;
    double* v = state.velocity.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        v[i] = mu * v[i] + gradient[i];
        theta[i] -= lr * v[i];
    }
}

inline void sgd_momentum_step(NetworkParams& params, std::span<const double> gradient, OptimizerState& state) {
    sgd_momentum_step(params.mutable_values(), gradient, state);
}

}  // namespace gil
