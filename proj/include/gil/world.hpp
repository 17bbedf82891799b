#pragma once

#include <algorithm>
#include <compare>
#include <concepts>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agent.hpp"
#include "config.hpp"
#include "error.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace gil {

struct Position {
    int x = 0;
    int y = 0;

    auto operator<=>(const Position&) const = default;
};

inline std::string to_string(Position p) { return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")"; }

// The vectorized lattice: 9 channels per site, all zero when empty.
class Grid {
public:
    Grid() = default;
    Grid(std::size_t width, std::size_t height) : width_(width), height_(height), sites_(width * height * kStateChannels) {}

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }

    bool in_bounds(Position p) const noexcept {
        return p.x >= 0 && p.y >= 0 && static_cast<std::size_t>(p.x) < width_ && static_cast<std::size_t>(p.y) < height_;
    }

    std::span<const double> site(Position p) const noexcept {
        return std::span<const double>(sites_).subspan(offset(p), kStateChannels);
    }

    bool occupied(Position p) const noexcept {
        for (double v : site(p))
            if (v != 0.0) return true;
        return false;
    }

    void write(Position p, const Color& color, double fitness, Direction move) noexcept {
        double* s = sites_.data() + offset(p);
        std::fill(s, s + kStateChannels, 0.0);
        s[channel::red] = color[0];
        s[channel::green] = color[1];
        s[channel::blue] = color[2];
        s[channel::fitness] = fitness;
        s[channel::move_begin + static_cast<std::size_t>(move)] = 1.0;
    }

    void clear(Position p) noexcept {
        double* s = sites_.data() + offset(p);
        std::fill(s, s + kStateChannels, 0.0);
    }

    // Movement recorded at an occupied site.
    Direction recorded_move(Position p) const noexcept {
        const auto s = site(p);
        for (std::size_t d = 0; d < kDirectionCount; ++d)
            if (s[channel::move_begin + d] == 1.0) return static_cast<Direction>(d);
        return Direction::Stay;
    }

    bool operator==(const Grid&) const = default;

private:
    std::size_t offset(Position p) const noexcept {
        return (static_cast<std::size_t>(p.y) * width_ + static_cast<std::size_t>(p.x)) * kStateChannels;
    }

    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> sites_;
};

// The 3x3 window centered at pos, indexed tensor(dy + 1, dx + 1, c).
// Off-grid and empty sites are zero.
inline Tensor3 extract_neighborhood(const Grid& grid, Position pos) {
    if (!grid.in_bounds(pos)) throw ContractViolation("extract_neighborhood: position " + to_string(pos) + " out of bounds");
    Tensor3 window(kWindow, kWindow, kStateChannels);
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            const Position q{pos.x + dx, pos.y + dy};
            if (!grid.in_bounds(q)) continue;
            const auto s = grid.site(q);
            std::copy(s.begin(), s.end(), window.site(static_cast<std::size_t>(dy + 1), static_cast<std::size_t>(dx + 1)).begin());
        }
    }
    return window;
}

using CellId = std::int64_t;

// Cell id -> (agent, position), with the inverse occupancy map.
class CellRegistry {
public:
    struct Entry {
        CellAgent agent;
        Position position;
    };

    CellRegistry() = default;
    CellRegistry(std::size_t width, std::size_t height) : width_(width), occupancy_(width * height, -1) {}

    void add(CellAgent agent, Position pos) {
        if (occupant(pos)) throw ContractViolation("CellRegistry::add: site " + to_string(pos) + " already occupied");
        if (!entries_.empty() && entries_.back().agent.id >= agent.id)
            throw ContractViolation("CellRegistry::add: ids must be added in increasing order");
        occupancy_[index(pos)] = agent.id;
        entries_.push_back({std::move(agent), pos});
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    // Sorted by id.
    std::span<Entry> entries() noexcept { return entries_; }
    std::span<const Entry> entries() const noexcept { return entries_; }

    const Entry* find(CellId id) const noexcept {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                                   [](const Entry& e, CellId v) { return e.agent.id < v; });
        return it != entries_.end() && it->agent.id == id ? &*it : nullptr;
    }

    bool contains(CellId id) const noexcept { return find(id) != nullptr; }

    const Entry& at(CellId id) const {
        const Entry* e = find(id);
        if (!e) throw ContractViolation("unknown cell id " + std::to_string(id));
        return *e;
    }

    std::optional<CellId> occupant(Position p) const noexcept {
        const CellId id = occupancy_[index(p)];
        return id < 0 ? std::nullopt : std::optional<CellId>(id);
    }

    // Applies a full relocation map at once. The result must be injective.
    void relocate(const std::map<CellId, Position>& finals) {
        for (const auto& e : entries_) occupancy_[index(e.position)] = -1;
        for (auto& e : entries_) {
            const auto it = finals.find(e.agent.id);
            if (it != finals.end()) e.position = it->second;
            CellId& slot = occupancy_[index(e.position)];
            if (slot >= 0) throw ContractViolation("CellRegistry::relocate: two cells at " + to_string(e.position));
            slot = e.agent.id;
        }
    }

private:
    std::size_t index(Position p) const noexcept {
        return static_cast<std::size_t>(p.y) * width_ + static_cast<std::size_t>(p.x);
    }

    std::size_t width_ = 0;
    std::vector<Entry> entries_;
    std::vector<CellId> occupancy_;
};

struct MoveProposal {
    CellId cell_id = -1;
    Position origin;
    Position target;
    double fitness = 0.0;
    Direction chosen = Direction::Stay;

    bool operator==(const MoveProposal&) const = default;
};

// Target site -> every proposal claiming it.
using IntermediateCellGrid = std::map<Position, std::vector<MoveProposal>>;

struct World {
    Grid grid;
    CellRegistry registry;
    std::size_t epoch = 0;
    Rng rng;
    ExperimentConfig config;
    std::uint64_t seed = 0;
    std::shared_ptr<const ColorProjection> projection;
};

struct StepMetrics {
    std::size_t epoch = 0;
    std::map<CellId, double> per_cell_loss;
    std::map<CellId, double> per_cell_fitness;  // after this epoch's update
    std::optional<double> mean_loss;            // empty when there are no cells

    bool operator==(const StepMetrics&) const = default;
};

inline std::optional<double> mean_of(const std::map<CellId, double>& values) {
    if (values.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& [id, v] : values) s += v;
    return s / static_cast<double>(values.size());
}

namespace detail {

inline World make_empty_world(const ExperimentConfig& config, std::uint64_t seed) {
    World w;
    w.config = config;
    w.seed = seed;
    w.grid = Grid(config.width, config.height);
    w.registry = CellRegistry(config.width, config.height);
    w.rng = Rng(derive_seed(seed, stream::world));
    w.projection = std::make_shared<const ColorProjection>(seed);
    return w;
}

inline void place(World& w, CellId id, Position pos) {
    auto agent = agent_init(id, w.seed, w.config.learning_rate, w.config.momentum, w.projection);
    w.grid.write(pos, agent.color, agent.fitness, Direction::Stay);
    w.registry.add(std::move(agent), pos);
}

}  // namespace detail

// Places cells 0..n-1 at the given positions.
inline World init_world(const ExperimentConfig& config, std::uint64_t seed, std::span<const Position> positions) {
    validate(config);
    if (positions.size() != config.n_cells)
        throw ConfigError("init_world: " + std::to_string(positions.size()) + " positions for " +
                          std::to_string(config.n_cells) + " cells");
    World w = detail::make_empty_world(config, seed);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (!w.grid.in_bounds(positions[i])) throw ConfigError("init_world: position " + to_string(positions[i]) + " out of bounds");
        detail::place(w, static_cast<CellId>(i), positions[i]);
    }
    return w;
}

// n_cells distinct sites drawn uniformly without replacement from the master RNG.
inline World init_world(const ExperimentConfig& config, std::uint64_t seed) {
    validate(config);
    World w = detail::make_empty_world(config, seed);
    const std::size_t capacity = config.width * config.height;
    std::vector<std::size_t> sites(capacity);
    for (std::size_t i = 0; i < capacity; ++i) sites[i] = i;
    for (std::size_t i = 0; i < config.n_cells; ++i) {
        std::swap(sites[i], sites[i + w.rng.below(capacity - i)]);
        const Position pos{static_cast<int>(sites[i] % config.width), static_cast<int>(sites[i] / config.width)};
        detail::place(w, static_cast<CellId>(i), pos);
    }
    return w;
}

using MoveDecision = std::pair<CellId, Direction>;

// Everything resolution needs to know about one cell's intent.
struct MoveRequest {
    CellId cell_id = -1;
    Position origin;
    double fitness = 0.0;
    Direction chosen = Direction::Stay;
};

// Clamps off-grid targets to the origin and groups proposals by target.
inline IntermediateCellGrid group_proposals(std::span<const MoveRequest> requests, std::size_t width, std::size_t height) {
    IntermediateCellGrid intermediate;
    std::vector<CellId> seen;
    seen.reserve(requests.size());
    for (const auto& r : requests) {
        seen.push_back(r.cell_id);
        const auto d = displacement(r.chosen);
        Position target{r.origin.x + d.dx, r.origin.y + d.dy};
        if (target.x < 0 || target.y < 0 || static_cast<std::size_t>(target.x) >= width ||
            static_cast<std::size_t>(target.y) >= height)
            target = r.origin;
        intermediate[target].push_back({r.cell_id, r.origin, target, r.fitness, r.chosen});
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        throw ContractViolation("propose_moves: duplicate decision for one cell");
    return intermediate;
}

// One decision per living cell.
inline IntermediateCellGrid propose_moves(const World& world, std::span<const MoveDecision> decisions) {
    if (decisions.size() != world.registry.size())
        throw ContractViolation("propose_moves: " + std::to_string(decisions.size()) + " decisions for " +
                                std::to_string(world.registry.size()) + " cells");
    std::vector<MoveRequest> requests;
    requests.reserve(decisions.size());
    for (const auto& [id, dir] : decisions) {
        const auto& entry = world.registry.at(id);
        requests.push_back({id, entry.position, entry.agent.fitness, dir});
    }
    return group_proposals(requests, world.grid.width(), world.grid.height());
}

// Frame-start occupancy without agents attached.
class PositionIndex {
public:
    PositionIndex(std::size_t width, std::size_t height, std::span<const std::pair<CellId, Position>> cells)
        : width_(width), occupancy_(width * height, -1), cells_(cells.begin(), cells.end()) {
        std::sort(cells_.begin(), cells_.end());
        for (const auto& [id, p] : cells_) {
            CellId& slot = occupancy_[static_cast<std::size_t>(p.y) * width_ + static_cast<std::size_t>(p.x)];
            if (slot >= 0) throw ContractViolation("PositionIndex: two cells at " + to_string(p));
            slot = id;
        }
    }

    std::size_t size() const noexcept { return cells_.size(); }
    bool contains(CellId id) const noexcept {
        return std::binary_search(cells_.begin(), cells_.end(), std::pair<CellId, Position>{id, {}},
                                  [](const auto& a, const auto& b) { return a.first < b.first; });
    }
    std::optional<CellId> occupant(Position p) const noexcept {
        const CellId id = occupancy_[static_cast<std::size_t>(p.y) * width_ + static_cast<std::size_t>(p.x)];
        return id < 0 ? std::nullopt : std::optional<CellId>(id);
    }

private:
    std::size_t width_;
    std::vector<CellId> occupancy_;
    std::vector<std::pair<CellId, Position>> cells_;
};

template <class R>
concept OccupancyIndex = requires(const R& r, Position p, CellId id) {
    { r.occupant(p) } -> std::convertible_to<std::optional<CellId>>;
    { r.contains(id) } -> std::convertible_to<bool>;
    { r.size() } -> std::convertible_to<std::size_t>;
};

// A move into T succeeds iff T was empty at frame start and the mover ranks
// first by (fitness desc, id asc) among everyone proposing T. Everyone else
// keeps their origin, so the result is injective and independent of order.
template <OccupancyIndex Registry>
std::map<CellId, Position> resolve_moves(const IntermediateCellGrid& intermediate, const Registry& registry) {
    std::map<CellId, Position> finals;
    std::size_t proposals = 0;
    for (const auto& [target, claims] : intermediate) {
        const MoveProposal* winner = nullptr;
        for (const auto& p : claims) {
            ++proposals;
            if (!registry.contains(p.cell_id))
                throw ContractViolation("resolve_moves: unknown cell id " + std::to_string(p.cell_id));
            if (p.target != target) throw ContractViolation("resolve_moves: proposal filed under the wrong target");
            if (!finals.emplace(p.cell_id, p.origin).second)
                throw ContractViolation("resolve_moves: duplicate proposal for cell " + std::to_string(p.cell_id));
            if (p.target == p.origin) continue;
            if (!winner || p.fitness > winner->fitness || (p.fitness == winner->fitness && p.cell_id < winner->cell_id))
                winner = &p;
        }
        if (winner && !registry.occupant(target)) finals[winner->cell_id] = target;
    }
    if (proposals != registry.size() || finals.size() != registry.size())
        throw ContractViolation("resolve_moves: proposals must cover every living cell exactly once");
    return finals;
}

// Throws ContractViolation describing the first disagreement between the
// registry and the lattice.
inline void check_consistency(const World& world) {
    const Grid& g = world.grid;
    std::size_t occupied = 0;
    for (int y = 0; y < static_cast<int>(g.height()); ++y) {
        for (int x = 0; x < static_cast<int>(g.width()); ++x) {
            const Position p{x, y};
            const auto id = world.registry.occupant(p);
            if (g.occupied(p) != id.has_value())
                throw ContractViolation("grid/registry disagree on occupancy at " + to_string(p));
            if (!id) continue;
            ++occupied;
            const auto& e = world.registry.at(*id);
            if (e.position != p) throw ContractViolation("occupancy map points at the wrong cell at " + to_string(p));
            const auto s = g.site(p);
            for (std::size_t c = 0; c < 3; ++c)
                if (s[c] != e.agent.color[c]) throw ContractViolation("stale color at " + to_string(p));
            if (s[channel::fitness] != e.agent.fitness) throw ContractViolation("stale fitness at " + to_string(p));
            double ones = 0.0;
            for (std::size_t d = 0; d < kDirectionCount; ++d) {
                const double v = s[channel::move_begin + d];
                if (v != 0.0 && v != 1.0) throw ContractViolation("movement channels not one-hot at " + to_string(p));
                ones += v;
            }
            if (ones != 1.0) throw ContractViolation("movement channels not one-hot at " + to_string(p));
        }
    }
    if (occupied != world.registry.size()) throw ContractViolation("registry has cells off the grid");
}

// One frame: observe, predict, choose, propose, resolve, rebuild the
// lattice, score against the new lattice at each cell's new position,
// learn, then refresh color and fitness.
inline StepMetrics step(World& world) {
    auto entries = world.registry.entries();
    const std::size_t n = entries.size();
    StepMetrics metrics;
    metrics.epoch = world.epoch;

    std::vector<AgentForward> forwards;
    forwards.reserve(n);
    std::vector<MoveDecision> decisions;
    decisions.reserve(n);
    for (auto& e : entries) {
        forwards.push_back(agent_predict(e.agent, extract_neighborhood(world.grid, e.position)));
        decisions.emplace_back(e.agent.id, select_move(forwards.back().prediction.move_logits(), e.agent.rng,
                                                       world.config.epsilon));
    }

    const auto finals = resolve_moves(propose_moves(world, decisions), world.registry);

    Grid next(world.grid.width(), world.grid.height());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = entries[i];
        const Position to = finals.at(e.agent.id);
        next.write(to, e.agent.color, e.agent.fitness, to == e.position ? Direction::Stay : decisions[i].second);
    }
    world.registry.relocate(finals);
    world.grid = std::move(next);

    std::vector<LossResult> losses;
    losses.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        losses.push_back(compute_loss(forwards[i].prediction, extract_neighborhood(world.grid, entries[i].position)));

    for (std::size_t i = 0; i < n; ++i)
        agent_learn(entries[i].agent, forwards[i].tape, losses[i].d_output, losses[i].loss);

    for (std::size_t i = 0; i < n; ++i) {
        auto& e = entries[i];
        e.agent.fitness = update_fitness(e.agent.fitness, losses[i].loss);
        world.grid.write(e.position, e.agent.color, e.agent.fitness, world.grid.recorded_move(e.position));
        metrics.per_cell_loss[e.agent.id] = losses[i].loss;
        metrics.per_cell_fitness[e.agent.id] = e.agent.fitness;
    }
    metrics.mean_loss = mean_of(metrics.per_cell_loss);
    ++world.epoch;
    return metrics;
}

}  // namespace gil
