#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "error.hpp"

namespace gil {

struct ExperimentConfig {
    std::size_t width = 100;
    std::size_t height = 100;
    std::size_t n_cells = 30;
    std::size_t epochs = 30;
    double learning_rate = 0.01;
    double momentum = 0.99;
    double epsilon = 0.1;
    std::uint64_t seed = 0;
    std::size_t tracked_cells = 3;

    bool operator==(const ExperimentConfig&) const = default;
};

inline void validate(const ExperimentConfig& c) {
    if (c.width == 0 || c.height == 0) throw ConfigError("width and height must be >= 1");
    if (c.n_cells > c.width * c.height)
        throw ConfigError("n_cells = " + std::to_string(c.n_cells) + " exceeds grid capacity " +
                          std::to_string(c.width * c.height));
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw ConfigError("epsilon must be in [0, 1]");
    if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    return {{"width", c.width},
            {"height", c.height},
            {"n_cells", c.n_cells},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"epsilon", c.epsilon},
            {"seed", c.seed},
            {"tracked_cells", c.tracked_cells}};
}

// Flat JSON object; keys are ExperimentConfig field names, missing keys keep
// the values already in `into`. Returns true if the object set "seed".
inline bool apply_config_json(const nlohmann::json& j, ExperimentConfig& into) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    bool saw_seed = false;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "width") into.width = value.get<std::size_t>();
            else if (key == "height") into.height = value.get<std::size_t>();
            else if (key == "n_cells") into.n_cells = value.get<std::size_t>();
            else if (key == "epochs") into.epochs = value.get<std::size_t>();
            else if (key == "learning_rate") into.learning_rate = value.get<double>();
            else if (key == "momentum") into.momentum = value.get<double>();
            else if (key == "epsilon") into.epsilon = value.get<double>();
            else if (key == "seed") {
                into.seed = value.get<std::uint64_t>();
                saw_seed = true;
            } else if (key == "tracked_cells") into.tracked_cells = value.get<std::size_t>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return saw_seed;
}

inline nlohmann::json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open config file");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace gil
