#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "io.hpp"
#include "world.hpp"

namespace gil {

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<StepMetrics> metrics;
    std::optional<double> avg_cell_loss;  // mean of per-epoch mean_loss; empty with no cells
    std::vector<CellId> tracked_cells;
    std::vector<std::vector<double>> tracked_losses;  // one series per tracked cell
};

inline std::optional<double> average_cell_loss(const std::vector<StepMetrics>& metrics) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& m : metrics) {
        if (!m.mean_loss) continue;
        s += *m.mean_loss;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

// Called with the world before the first epoch and after every step.
using FrameObserver = std::function<void(const World&)>;

inline ExperimentResult run_experiment(const ExperimentConfig& config, const FrameObserver& observer = {}) {
    validate(config);
    World world = init_world(config, config.seed);

    ExperimentResult result;
    result.config = config;

    // Tracked cells are fixed at epoch 0, sampled from the master RNG.
    std::vector<CellId> ids;
    for (const auto& e : world.registry.entries()) ids.push_back(e.agent.id);
    const std::size_t k = std::min(config.tracked_cells, ids.size());
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(ids[i], ids[i + world.rng.below(ids.size() - i)]);
        result.tracked_cells.push_back(ids[i]);
    }
    result.tracked_losses.resize(k);

    if (observer) observer(world);
    result.metrics.reserve(config.epochs);
    for (std::size_t e = 0; e < config.epochs; ++e) {
        result.metrics.push_back(step(world));
        for (std::size_t i = 0; i < k; ++i)
            result.tracked_losses[i].push_back(result.metrics.back().per_cell_loss.at(result.tracked_cells[i]));
        if (observer) observer(world);
    }
    result.avg_cell_loss = average_cell_loss(result.metrics);
    return result;
}

inline nlohmann::ordered_json to_json(const ExperimentResult& r) {
    nlohmann::ordered_json j;
    j["config"] = to_json(r.config);
    j["avg_cell_loss"] = r.avg_cell_loss ? nlohmann::ordered_json(*r.avg_cell_loss) : nlohmann::ordered_json(nullptr);
    j["tracked_cells"] = r.tracked_cells;
    j["tracked_losses"] = r.tracked_losses;
    auto& rows = j["metrics"] = nlohmann::ordered_json::array();
    for (const auto& m : r.metrics) {
        nlohmann::ordered_json row;
        row["epoch"] = m.epoch;
        row["mean_loss"] = m.mean_loss ? nlohmann::ordered_json(*m.mean_loss) : nlohmann::ordered_json(nullptr);
        auto& cells = row["cells"] = nlohmann::ordered_json::array();
        for (const auto& [id, loss] : m.per_cell_loss)
            cells.push_back({{"id", id}, {"loss", loss}, {"fitness", m.per_cell_fitness.at(id)}});
        rows.push_back(std::move(row));
    }
    return j;
}

inline constexpr double kColorScaleSq = 255.0 * 255.0;

inline std::string metrics_csv(const ExperimentResult& result) {
    std::string out = "epoch,cell_id,loss,loss_x255sq,fitness\n";
    for (const auto& m : result.metrics) {
        for (const auto& [id, loss] : m.per_cell_loss) {
            out += std::to_string(m.epoch) + ',' + std::to_string(id) + ',' + format_real(loss) + ',' +
                   format_real(loss * kColorScaleSq) + ',' + format_real(m.per_cell_fitness.at(id)) + '\n';
        }
    }
    return out;
}

inline void write_metrics_csv(const ExperimentResult& result, const std::filesystem::path& path) {
    write_file_atomic(path, metrics_csv(result));
}

struct MetricsRow {
    std::size_t epoch = 0;
    CellId cell_id = 0;
    double loss = 0.0;
    double loss_x255sq = 0.0;
    double fitness = 0.0;
};

namespace detail {

template <class T>
T parse_field(std::string_view s, const std::string& where) {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError(where, "malformed field '" + std::string(s) + "'");
    return v;
}

}  // namespace detail

inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "epoch,cell_id,loss,loss_x255sq,fitness")
        throw IoError(path.string(), "missing metrics header");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
            f.push_back(rest.substr(0, pos));
        f.push_back(rest);
        if (f.size() != 5) throw IoError(path.string(), "expected 5 fields: " + line);
        const auto where = path.string();
        rows.push_back({detail::parse_field<std::size_t>(f[0], where), detail::parse_field<CellId>(f[1], where),
                        detail::parse_field<double>(f[2], where), detail::parse_field<double>(f[3], where),
                        detail::parse_field<double>(f[4], where)});
    }
    return rows;
}

// Recomputes avg_cell_loss from CSV rows with the same summation order as
// run_experiment (rows are sorted by epoch, then cell id).
inline std::optional<double> average_cell_loss(const std::vector<MetricsRow>& rows) {
    std::vector<StepMetrics> metrics;
    for (const auto& r : rows) {
        if (metrics.empty() || metrics.back().epoch != r.epoch) metrics.push_back({r.epoch, {}, {}, std::nullopt});
        metrics.back().per_cell_loss[r.cell_id] = r.loss;
    }
    for (auto& m : metrics) m.mean_loss = mean_of(m.per_cell_loss);
    return average_cell_loss(metrics);
}

struct SweepRow {
    double learning_rate = 0.0;
    double momentum = 0.0;
    std::optional<double> avg_cell_loss;
};

struct GridSearchResult {
    double best_learning_rate = 0.0;
    double best_momentum = 0.0;
    std::size_t best_index = 0;
    std::vector<SweepRow> table;  // learning-rate major, in the given list order
};

inline const std::vector<double> kDefaultLearningRates{0.1, 0.05, 0.01, 0.005, 0.001};
inline const std::vector<double> kDefaultMomenta{0.9, 0.95, 0.97, 0.99};

// Objective for one (learning rate, momentum) combination.
using SweepObjective = std::function<std::optional<double>(const ExperimentConfig&)>;

inline std::optional<double> avg_loss_objective(const ExperimentConfig& c) { return run_experiment(c).avg_cell_loss; }

// Every combination shares base.seed. The best row is the smallest
// avg_cell_loss, first in iteration order on ties; rows without a loss
// never beat rows with one.
inline GridSearchResult grid_search(const ExperimentConfig& base, const std::vector<double>& lrs,
                                    const std::vector<double>& momenta, const SweepObjective& objective = avg_loss_objective,
                                    std::size_t jobs = 1) {
    if (lrs.empty() || momenta.empty()) throw ConfigError("grid_search: learning-rate and momentum lists must be non-empty");
    validate(base);
    GridSearchResult result;
    std::vector<ExperimentConfig> configs;
    for (double lr : lrs) {
        for (double mu : momenta) {
            ExperimentConfig c = base;
            c.learning_rate = lr;
            c.momentum = mu;
            validate(c);
            configs.push_back(c);
            result.table.push_back({lr, mu, std::nullopt});
        }
    }

    jobs = std::clamp<std::size_t>(jobs, 1, configs.size());
    if (jobs == 1) {
        for (std::size_t i = 0; i < configs.size(); ++i) result.table[i].avg_cell_loss = objective(configs[i]);
    } else {
        // Each worker owns a fixed stride of rows, so writes never overlap.
        std::vector<std::exception_ptr> errors(jobs);
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < configs.size(); i += jobs)
                        result.table[i].avg_cell_loss = objective(configs[i]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : workers) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    std::optional<double> best;
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        const auto& v = result.table[i].avg_cell_loss;
        if (v && (!best || *v < *best)) {
            best = v;
            result.best_index = i;
        }
    }
    result.best_learning_rate = result.table[result.best_index].learning_rate;
    result.best_momentum = result.table[result.best_index].momentum;
    return result;
}

inline std::string sweep_csv(const GridSearchResult& r) {
    std::string out = "learning_rate,momentum,avg_cell_loss,best\n";
    for (std::size_t i = 0; i < r.table.size(); ++i) {
        const auto& row = r.table[i];
        out += format_real(row.learning_rate) + ',' + format_real(row.momentum) + ',' +
               (row.avg_cell_loss ? format_real(*row.avg_cell_loss) : std::string()) + ',' +
               (i == r.best_index ? "1" : "0") + '\n';
    }
    return out;
}

}  // namespace gil
