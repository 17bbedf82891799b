#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "gil/gil.hpp"
#include "oracles.hpp"

using namespace gil;

namespace {

ExperimentConfig small_config(std::size_t w, std::size_t h, std::size_t n, double eps = 0.1) {
    ExperimentConfig c;
    c.width = w;
    c.height = h;
    c.n_cells = n;
    c.epsilon = eps;
    return c;
}

// Makes the head's movement bias for `dir` dominate every other logit.
void force_direction(World& w, CellId id, Direction dir) {
    for (auto& e : w.registry.entries()) {
        if (e.agent.id != id) continue;
        auto bias = e.agent.params.bias(LayerId::Head);
        for (std::size_t d = 0; d < 5; ++d) bias[channel::move_begin + d] = d == static_cast<std::size_t>(dir) ? 1e3 : 0.0;
        e.agent.color = derive_color(e.agent.params, *e.agent.projection);
        w.grid.write(e.position, e.agent.color, e.agent.fitness, Direction::Stay);
    }
}

std::vector<std::pair<CellId, Position>> positions_of(const World& w) {
    std::vector<std::pair<CellId, Position>> out;
    for (const auto& e : w.registry.entries()) out.emplace_back(e.agent.id, e.position);
    return out;
}

}  // namespace

TEST(InitWorld, SaturatedGrid) {
    const auto w = init_world(small_config(3, 4, 12), 5);
    std::set<Position> seen;
    for (const auto& e : w.registry.entries()) seen.insert(e.position);
    EXPECT_EQ(seen.size(), 12u);
    check_consistency(w);
}

TEST(InitWorld, Deterministic) {
    const auto a = init_world(small_config(10, 10, 7), 42);
    const auto b = init_world(small_config(10, 10, 7), 42);
    EXPECT_EQ(a.grid, b.grid);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(a.registry.entries()[i].position, b.registry.entries()[i].position);
        EXPECT_EQ(a.registry.entries()[i].agent.params, b.registry.entries()[i].agent.params);
    }
    const auto c = init_world(small_config(10, 10, 7), 43);
    EXPECT_NE(positions_of(a), positions_of(c));
}

TEST(InitWorld, FiveHundredCellsOnDefaultGrid) {
    const auto w = init_world(small_config(100, 100, 500), 1);
    std::size_t occupied = 0;
    for (int y = 0; y < 100; ++y)
        for (int x = 0; x < 100; ++x) occupied += w.grid.occupied({x, y});
    EXPECT_EQ(occupied, 500u);
    EXPECT_EQ(w.registry.size(), 500u);
    for (const auto& e : w.registry.entries()) EXPECT_EQ(w.grid.recorded_move(e.position), Direction::Stay);
    check_consistency(w);
}

TEST(InitWorld, OverCapacityIsConfigError) {
    EXPECT_THROW(init_world(small_config(3, 3, 10), 0), ConfigError);
}

TEST(Neighborhood, IsolatedCell) {
    const std::vector<Position> pos{{5, 5}};
    const auto w = init_world(small_config(11, 11, 1), 0, pos);
    const auto nb = extract_neighborhood(w.grid, {5, 5});
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) {
            bool any = false;
            for (double v : nb.site(y, x)) any |= v != 0.0;
            EXPECT_EQ(any, y == 1 && x == 1);
        }
    const auto s = nb.site(1, 1);
    const auto& a = w.registry.entries()[0].agent;
    EXPECT_EQ(s[0], a.color[0]);
    EXPECT_EQ(s[3], 0.5);
    EXPECT_EQ(s[4], 1.0);  // Stay
}

TEST(Neighborhood, CornerIsZeroPadded) {
    const auto w = init_world(small_config(2, 2, 4), 0);
    const auto nb = extract_neighborhood(w.grid, {0, 0});
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) {
            bool any = false;
            for (double v : nb.site(y, x)) any |= v != 0.0;
            EXPECT_EQ(any, y >= 1 && x >= 1) << y << "," << x;
        }
}

TEST(Neighborhood, PackedGridCenterWindowIsWholeGrid) {
    const auto w = init_world(small_config(3, 3, 9), 3);
    const auto nb = extract_neighborhood(w.grid, {1, 1});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            const auto site = w.grid.site({x, y});
            for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(nb(y, x, c), site[c]);
        }
}

TEST(Neighborhood, OutOfBoundsIsContractViolation) {
    const auto w = init_world(small_config(3, 3, 0), 0);
    EXPECT_THROW(extract_neighborhood(w.grid, {3, 0}), ContractViolation);
    EXPECT_THROW(extract_neighborhood(w.grid, {0, -1}), ContractViolation);
}

TEST(ProposeMoves, AllStay) {
    const auto w = init_world(small_config(6, 6, 8), 1);
    std::vector<MoveDecision> d;
    for (const auto& e : w.registry.entries()) d.emplace_back(e.agent.id, Direction::Stay);
    const auto ig = propose_moves(w, d);
    EXPECT_EQ(ig.size(), 8u);
    for (const auto& [target, list] : ig) {
        ASSERT_EQ(list.size(), 1u);
        EXPECT_EQ(list[0].origin, target);
    }
}

TEST(ProposeMoves, OffGridIsClampedToOrigin) {
    const std::vector<Position> pos{{0, 0}, {3, 3}};
    const auto w = init_world(small_config(4, 4, 2), 0, pos);
    const std::vector<MoveDecision> d{{0, Direction::Up}, {1, Direction::Right}};
    const auto ig = propose_moves(w, d);
    EXPECT_EQ(ig.at({0, 0})[0].target, (Position{0, 0}));
    EXPECT_EQ(ig.at({0, 0})[0].chosen, Direction::Up);
    EXPECT_EQ(ig.at({3, 3})[0].target, (Position{3, 3}));
}

TEST(ProposeMoves, CollisionGroupsTwoClaims) {
    const std::vector<Position> pos{{1, 2}, {3, 2}};
    const auto w = init_world(small_config(5, 5, 2), 0, pos);
    const std::vector<MoveDecision> d{{0, Direction::Right}, {1, Direction::Left}};
    const auto ig = propose_moves(w, d);
    EXPECT_EQ(ig.at({2, 2}).size(), 2u);
}

TEST(ProposeMoves, RejectsUnknownOrMissingCells) {
    const auto w = init_world(small_config(5, 5, 2), 0);
    const std::vector<MoveDecision> unknown{{0, Direction::Stay}, {7, Direction::Stay}};
    EXPECT_THROW(propose_moves(w, unknown), ContractViolation);
    const std::vector<MoveDecision> missing{{0, Direction::Stay}};
    EXPECT_THROW(propose_moves(w, missing), ContractViolation);
    const std::vector<MoveDecision> dup{{0, Direction::Stay}, {0, Direction::Up}};
    EXPECT_THROW(propose_moves(w, dup), ContractViolation);
}

TEST(ResolveMoves, FitterMoverWins) {
    const std::vector<std::pair<CellId, Position>> cells{{0, {1, 2}}, {1, {3, 2}}};
    const PositionIndex index(5, 5, cells);
    const std::vector<MoveRequest> req{{0, {1, 2}, 0.4, Direction::Right}, {1, {3, 2}, 0.9, Direction::Left}};
    const auto finals = resolve_moves(group_proposals(req, 5, 5), index);
    EXPECT_EQ(finals.at(1), (Position{2, 2}));
    EXPECT_EQ(finals.at(0), (Position{1, 2}));
}

TEST(ResolveMoves, EqualFitnessLowestIdWins) {
    const std::vector<std::pair<CellId, Position>> cells{{4, {1, 2}}, {9, {3, 2}}};
    const PositionIndex index(5, 5, cells);
    const std::vector<MoveRequest> req{{9, {3, 2}, 0.5, Direction::Left}, {4, {1, 2}, 0.5, Direction::Right}};
    const auto finals = resolve_moves(group_proposals(req, 5, 5), index);
    EXPECT_EQ(finals.at(4), (Position{2, 2}));
    EXPECT_EQ(finals.at(9), (Position{3, 2}));
}

TEST(ResolveMoves, CannotEnterOccupiedSite) {
    // 1 stays at (2,2); 0 tries to move in. No chains: 2 vacating (3,2)
    // does not let 3 in either.
    const std::vector<std::pair<CellId, Position>> cells{{0, {1, 2}}, {1, {2, 2}}, {2, {3, 2}}, {3, {3, 3}}};
    const PositionIndex index(5, 5, cells);
    const std::vector<MoveRequest> req{{0, {1, 2}, 0.9, Direction::Right},
                                       {1, {2, 2}, 0.1, Direction::Stay},
                                       {2, {3, 2}, 0.5, Direction::Right},
                                       {3, {3, 3}, 0.5, Direction::Up}};
    const auto finals = resolve_moves(group_proposals(req, 5, 5), index);
    EXPECT_EQ(finals.at(0), (Position{1, 2}));
    EXPECT_EQ(finals.at(1), (Position{2, 2}));
    EXPECT_EQ(finals.at(2), (Position{4, 2}));
    EXPECT_EQ(finals.at(3), (Position{3, 3}));
}

TEST(ResolveMoves, RejectsDuplicateProposals) {
    const std::vector<std::pair<CellId, Position>> cells{{0, {1, 1}}};
    const PositionIndex index(3, 3, cells);
    IntermediateCellGrid ig;
    ig[{1, 1}].push_back({0, {1, 1}, {1, 1}, 0.5, Direction::Stay});
    ig[{2, 1}].push_back({0, {1, 1}, {2, 1}, 0.5, Direction::Right});
    EXPECT_THROW(resolve_moves(ig, index), ContractViolation);
    IntermediateCellGrid missing;
    EXPECT_THROW(resolve_moves(missing, index), ContractViolation);
}

TEST(ResolveMoves, WorksOnTheLiveRegistry) {
    const std::vector<Position> pos{{1, 2}, {3, 2}};
    auto w = init_world(small_config(5, 5, 2), 0, pos);
    w.registry.entries()[1].agent.fitness = 0.9;
    const std::vector<MoveDecision> d{{0, Direction::Right}, {1, Direction::Left}};
    const auto finals = resolve_moves(propose_moves(w, d), w.registry);
    EXPECT_EQ(finals.at(1), (Position{2, 2}));
    EXPECT_EQ(finals.at(0), (Position{1, 2}));
}

TEST(ResolveMoves, MatchesOracleAndIsOrderIndependent) {
    Rng rng(2024);
    const double fitness_levels[] = {0.2, 0.5, 0.5, 0.8};
    for (int trial = 0; trial < 5000; ++trial) {
        const std::size_t n = 1 + rng.below(5);
        std::vector<std::size_t> sites(16);
        for (std::size_t i = 0; i < 16; ++i) sites[i] = i;
        std::vector<oracle::SmallCell> cells;
        std::vector<std::pair<CellId, Position>> index_cells;
        std::vector<MoveRequest> req;
        for (std::size_t i = 0; i < n; ++i) {
            std::swap(sites[i], sites[i + rng.below(16 - i)]);
            const Position p{static_cast<int>(sites[i] % 4), static_cast<int>(sites[i] / 4)};
            const auto dir = static_cast<Direction>(rng.below(5));
            const double f = fitness_levels[rng.below(4)];
            const CellId id = static_cast<CellId>(rng.below(1000)) * 8 + static_cast<CellId>(i);
            cells.push_back({id, p, dir, f});
            index_cells.emplace_back(id, p);
            req.push_back({id, p, f, dir});
        }
        const PositionIndex index(4, 4, index_cells);
        const auto finals = resolve_moves(group_proposals(req, 4, 4), index);
        ASSERT_EQ(finals, oracle::resolve(cells, 4, 4)) << "trial " << trial;
        std::set<Position> used;
        for (const auto& [id, p] : finals) used.insert(p);
        ASSERT_EQ(used.size(), finals.size());

        // Permute request order and the order inside each claim list.
        for (std::size_t i = req.size(); i > 1; --i) std::swap(req[i - 1], req[rng.below(i)]);
        auto ig = group_proposals(req, 4, 4);
        for (auto& [t, list] : ig) std::reverse(list.begin(), list.end());
        ASSERT_EQ(resolve_moves(ig, index), finals);
    }
}

TEST(Step, EmptyWorldIsNoOp) {
    auto w = init_world(small_config(5, 5, 0), 0);
    const auto before = w.grid;
    const auto m = step(w);
    EXPECT_EQ(w.grid, before);
    EXPECT_TRUE(m.per_cell_loss.empty());
    EXPECT_FALSE(m.mean_loss.has_value());
    EXPECT_EQ(w.epoch, 1u);
}

TEST(Step, DeterministicOverHundredEpochs) {
    auto a = init_world(small_config(10, 10, 5), 77);
    auto b = init_world(small_config(10, 10, 5), 77);
    for (int t = 0; t < 100; ++t) ASSERT_EQ(step(a), step(b)) << "epoch " << t;
    EXPECT_EQ(a.grid, b.grid);
}

TEST(Step, ConservesCellsAndKeepsRegistryConsistent) {
    auto w = init_world(small_config(12, 12, 40, 0.5), 3);
    for (int t = 0; t < 100; ++t) {
        const auto m = step(w);
        ASSERT_EQ(w.registry.size(), 40u);
        ASSERT_EQ(m.per_cell_loss.size(), 40u);
        ASSERT_NO_THROW(check_consistency(w)) << "epoch " << t;
        double s = 0;
        for (const auto& [id, l] : m.per_cell_loss) s += l;
        ASSERT_EQ(*m.mean_loss, s / 40.0);
        for (const auto& [id, f] : m.per_cell_fitness) {
            ASSERT_GE(f, 0.0);
            ASSERT_LE(f, 1.0);
        }
    }
}

TEST(Step, RecordsRealizedMoves) {
    // 0 moves right into empty space; 1 tries to move into 2, who stays.
    const std::vector<Position> pos{{1, 1}, {5, 5}, {6, 5}};
    auto w = init_world(small_config(10, 10, 3, 0.0), 0, pos);
    force_direction(w, 0, Direction::Right);
    force_direction(w, 1, Direction::Right);
    force_direction(w, 2, Direction::Stay);
    step(w);
    EXPECT_EQ(w.registry.at(0).position, (Position{2, 1}));
    EXPECT_EQ(w.grid.recorded_move({2, 1}), Direction::Right);
    EXPECT_EQ(w.registry.at(1).position, (Position{5, 5}));
    EXPECT_EQ(w.grid.recorded_move({5, 5}), Direction::Stay);
    check_consistency(w);
}

TEST(Step, LossIsScoredAgainstTheNewWindowAtTheNewPosition) {
    // Cell 0 moves (1,1) -> (2,1); cell 1 stays at (3,2), which is inside
    // 0's new window at offset (+1,+1) but outside its old one.
    const std::vector<Position> pos{{1, 1}, {3, 2}};
    auto w = init_world(small_config(8, 8, 2, 0.0), 9, pos);
    force_direction(w, 0, Direction::Right);
    force_direction(w, 1, Direction::Stay);
    const auto a = w.registry.at(0).agent;
    const auto b = w.registry.at(1).agent;
    const auto pred = agent_predict(a, extract_neighborhood(w.grid, {1, 1})).prediction;

    Tensor3 expected(3, 3, 9);
    auto put = [&](std::size_t y, std::size_t x, const CellAgent& c, Direction d) {
        for (std::size_t k = 0; k < 3; ++k) expected(y, x, k) = c.color[k];
        expected(y, x, 3) = c.fitness;
        expected(y, x, 4 + static_cast<std::size_t>(d)) = 1.0;
    };
    put(1, 1, a, Direction::Right);
    put(2, 2, b, Direction::Stay);

    const auto m = step(w);
    EXPECT_EQ(w.registry.at(0).position, (Position{2, 1}));
    EXPECT_DOUBLE_EQ(m.per_cell_loss.at(0), oracle::masked_mse(pred.tensor(), expected));

    Tensor3 old_anchor(3, 3, 9);
    for (std::size_t k = 0; k < 3; ++k) old_anchor(1, 2, k) = a.color[k];
    old_anchor(1, 2, 3) = a.fitness;
    EXPECT_NE(m.per_cell_loss.at(0), oracle::masked_mse(pred.tensor(), old_anchor));
}

TEST(Step, SingleCellLearnsItsEmptyNeighborhood) {
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto c = small_config(10, 10, 1, 0.0);
        c.learning_rate = 0.01;
        c.momentum = 0.9;
        auto w = init_world(c, seed);
        const double first = *step(w).mean_loss;
        double last = first;
        for (int t = 1; t < 150; ++t) last = *step(w).mean_loss;
        improved += last <= first;
    }
    EXPECT_GE(improved, 16);
}
