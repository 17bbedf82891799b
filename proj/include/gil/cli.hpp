#pragma once

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gil.hpp"

namespace gil::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kIoError = 2, kCheckFailed = 3 };

namespace detail {

struct ConfigFlags {
    std::string config_path;
    std::optional<std::size_t> width, height, n_cells, epochs, tracked_cells;
    std::optional<double> learning_rate, momentum, epsilon;
    std::optional<std::uint64_t> seed;
};

inline void add_config_flags(CLI::App& app, ConfigFlags& f) {
    const ExperimentConfig d;
    auto dflt = [](auto v) {
        std::ostringstream s;
        s << v;
        return " (default " + s.str() + ")";
    };
    app.add_option("-c,--config", f.config_path, "JSON config file; keys match the flag names below in snake_case");
    app.add_option("--width", f.width, "grid width" + dflt(d.width));
    app.add_option("--height", f.height, "grid height" + dflt(d.height));
    app.add_option("--n-cells,--cells", f.n_cells, "initial cell count" + dflt(d.n_cells));
    app.add_option("--epochs", f.epochs, "number of frames to simulate" + dflt(d.epochs));
    app.add_option("--learning-rate,--lr", f.learning_rate, "SGD learning rate" + dflt(d.learning_rate));
    app.add_option("--momentum", f.momentum, "SGD momentum" + dflt(d.momentum));
    app.add_option("--epsilon", f.epsilon, "random-action probability" + dflt(d.epsilon));
    app.add_option("--tracked-cells", f.tracked_cells, "cells whose loss curves are plotted" + dflt(d.tracked_cells));
    app.add_option("--seed", f.seed, "master seed; overrides the config file, which overrides $GIL_SEED" + dflt(d.seed));
}

inline std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("GIL_SEED");
    if (!s || !*s) return std::nullopt;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != std::string(s).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string("GIL_SEED is not an unsigned integer: ") + s);
    }
}

// Defaults, then $GIL_SEED, then the config file, then flags.
inline ExperimentConfig resolve_config(const ConfigFlags& f) {
    ExperimentConfig c;
    if (const auto s = env_seed()) c.seed = *s;
    if (!f.config_path.empty()) apply_config_json(read_config_file(f.config_path), c);
    if (f.width) c.width = *f.width;
    if (f.height) c.height = *f.height;
    if (f.n_cells) c.n_cells = *f.n_cells;
    if (f.epochs) c.epochs = *f.epochs;
    if (f.learning_rate) c.learning_rate = *f.learning_rate;
    if (f.momentum) c.momentum = *f.momentum;
    if (f.epsilon) c.epsilon = *f.epsilon;
    if (f.tracked_cells) c.tracked_cells = *f.tracked_cells;
    if (f.seed) c.seed = *f.seed;
    validate(c);
    return c;
}

inline std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError(dir.string(), "cannot create output directory");
    return dir;
}

inline std::string frame_name(std::size_t index) {
    std::ostringstream s;
    s << "frame_" << std::setw(5) << std::setfill('0') << index << ".png";
    return s.str();
}

struct RenderFlags {
    bool frames = false;
    bool gif = false;
    std::size_t scale = 6;
    unsigned delay_ms = 100;
};

// Runs one experiment, rendering every frame if requested.
inline ExperimentResult run_with_frames(const ExperimentConfig& config, const std::filesystem::path& out,
                                        const RenderFlags& r) {
    std::vector<Image> frames;
    std::size_t index = 0;
    std::filesystem::path frame_dir;
    if (r.frames) frame_dir = prepare_dir(out / "frames");
    FrameObserver observer;
    if (r.frames || r.gif) {
        observer = [&](const World& w) {
            Image img = render_frame(w.grid, r.scale);
            if (r.frames) png::write(img, frame_dir / frame_name(index));
            if (r.gif) frames.push_back(std::move(img));
            ++index;
        };
    }
    auto result = run_experiment(config, observer);
    if (r.gif) gif::encode_animation(frames, out / "animation.gif", r.delay_ms);
    return result;
}

inline void write_loss_curves(const ExperimentResult& result, const std::filesystem::path& out) {
    for (std::size_t i = 0; i < result.tracked_cells.size(); ++i)
        png::write(plot_loss_curves({result.tracked_losses[i]}),
                   out / ("loss_cell_" + std::to_string(result.tracked_cells[i]) + ".png"));
    if (!result.tracked_losses.empty()) png::write(plot_loss_curves(result.tracked_losses), out / "loss_curves.png");
}

inline std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

// Entry point shared by the gil executable and the tests. `args` excludes
// the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Grid world of residual conv-net cells that predict their neighborhood and learn online."};
    app.name("gil");
    app.require_subcommand(1);

    detail::ConfigFlags run_cfg, sweep_cfg, render_cfg;
    detail::RenderFlags run_render, render_render{true, true, 6, 100};
    std::string run_out = "out", sweep_out = "out", render_out = "out";

    auto* run = app.add_subcommand("run", "run one experiment; write metrics CSV, result JSON and loss curves");
    detail::add_config_flags(*run, run_cfg);
    run->add_option("-o,--out", run_out, "output directory (default out)");
    run->add_flag("--frames", run_render.frames, "also write frames/frame_NNNNN.png for every epoch");
    run->add_flag("--gif", run_render.gif, "also write animation.gif");
    run->add_option("--scale", run_render.scale, "pixels per site (default 6)")->check(CLI::PositiveNumber);
    run->add_option("--delay", run_render.delay_ms, "GIF frame delay in ms (default 100)");

    std::vector<double> lrs = kDefaultLearningRates, momenta = kDefaultMomenta;
    std::size_t jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "grid search over learning rate x momentum");
    detail::add_config_flags(*sweep, sweep_cfg);
    sweep->add_option("-o,--out", sweep_out, "output directory (default out)");
    sweep->add_option("--lrs", lrs, "learning rates (default 0.1,0.05,0.01,0.005,0.001)")->delimiter(',');
    sweep->add_option("--momenta", momenta, "momenta (default 0.9,0.95,0.97,0.99)")->delimiter(',');
    sweep->add_option("-j,--jobs", jobs, "parallel runs (default 1)")->check(CLI::PositiveNumber);

    auto* render = app.add_subcommand("render", "run one experiment and write PNG frames plus an animated GIF");
    detail::add_config_flags(*render, render_cfg);
    render->add_option("-o,--out", render_out, "output directory (default out)");
    render->add_option("--scale", render_render.scale, "pixels per site (default 6)")->check(CLI::PositiveNumber);
    render->add_option("--delay", render_render.delay_ms, "GIF frame delay in ms (default 100)");

    std::optional<std::uint64_t> gc_seed;
    std::size_t gc_count = 1, gc_samples = GradientCheckOptions{}.kernel_samples_per_layer;
    double gc_step = 1e-5, gc_tol = 1e-4;
    auto* gradcheck = app.add_subcommand("gradcheck", "compare backprop against central finite differences");
    gradcheck->add_option("--seed", gc_seed, "first seed (default $GIL_SEED or 0)");
    gradcheck->add_option("--seeds", gc_count, "number of consecutive seeds (default 1)")->check(CLI::PositiveNumber);
    gradcheck->add_option("--step", gc_step, "finite-difference step (default 1e-5)")->check(CLI::PositiveNumber);
    gradcheck->add_option("--samples", gc_samples, "kernel entries checked per layer, 0 = all (default 128)");
    gradcheck->add_option("--tolerance", gc_tol, "exit 3 when the error reaches this (default 1e-4)");

    if (args.empty()) {
        err << app.help();
        return kConfigError;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kConfigError;
    }

    try {
        if (*run) {
            const auto config = detail::resolve_config(run_cfg);
            const auto dir = detail::prepare_dir(run_out);
            const auto result = detail::run_with_frames(config, dir, run_render);
            write_metrics_csv(result, dir / "metrics.csv");
            write_file_atomic(dir / "result.json", detail::json_text(to_json(result)));
            detail::write_loss_curves(result, dir);
            out << "epochs " << result.metrics.size() << " cells " << config.n_cells << " avg_cell_loss "
                << (result.avg_cell_loss ? format_real(*result.avg_cell_loss) : std::string("null")) << '\n';
        } else if (*sweep) {
            const auto config = detail::resolve_config(sweep_cfg);
            const auto dir = detail::prepare_dir(sweep_out);
            const auto r = grid_search(config, lrs, momenta, avg_loss_objective, jobs);
            write_file_atomic(dir / "sweep.csv", sweep_csv(r));
            nlohmann::ordered_json best{{"learning_rate", r.best_learning_rate},
                                        {"momentum", r.best_momentum},
                                        {"avg_cell_loss", r.table[r.best_index].avg_cell_loss
                                                              ? nlohmann::ordered_json(*r.table[r.best_index].avg_cell_loss)
                                                              : nlohmann::ordered_json(nullptr)},
                                        {"config", to_json(config)}};
            write_file_atomic(dir / "best.json", detail::json_text(best));
            out << "best learning_rate " << format_real(r.best_learning_rate) << " momentum "
                << format_real(r.best_momentum) << '\n';
        } else if (*render) {
            const auto config = detail::resolve_config(render_cfg);
            const auto dir = detail::prepare_dir(render_out);
            detail::run_with_frames(config, dir, render_render);
            out << "frames " << config.epochs + 1 << '\n';
        } else if (*gradcheck) {
            std::uint64_t first = gc_seed ? *gc_seed : detail::env_seed().value_or(0);
            double worst = 0.0;
            for (std::uint64_t s = first; s < first + gc_count; ++s) {
                Rng rng(derive_seed(s, 0x63686b));
                const auto params = NetworkParams::kaiming_uniform(rng);
                Tensor3 input(kWindow, kWindow, kStateChannels);
                for (double& v : input.data()) v = rng.uniform(0.0, 1.0);
                const double e = gradient_check(params, input, gc_step, {s, gc_samples});
                out << "seed " << s << " max_relative_error " << format_real(e) << '\n';
                worst = std::max(worst, e);
            }
            out << "max_relative_error " << format_real(worst) << '\n';
            if (!(worst < gc_tol)) return kCheckFailed;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIoError;
    }
    return kOk;
}

}  // namespace gil::cli
