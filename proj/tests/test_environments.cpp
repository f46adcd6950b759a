#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "eirl/environments.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace eirl;

#ifndef EIRL_TEST_DATA
#define EIRL_TEST_DATA "tests/data"
#endif

namespace {

FeatureVector fv(std::span<const double> x) { return {x.begin(), x.end()}; }

FeatureVector phi(const ZoneGridEnvironment& env, Cell from, Direction d) {
    return zone_feature_map(env)(from, d, step_cell(from, d));
}

}  // namespace

TEST(ZoneFeatures, EmptySpaceCostsOneStep) {
    const auto env = fixture::empty_grid(5, 5, {4, 4});
    EXPECT_EQ(phi(env, {1, 1}, Direction::east), (FeatureVector{-1, 0, 0, 0, 0}));
}

TEST(ZoneFeatures, RoadInPreferredDirection) {
    auto env = fixture::empty_grid(5, 5, {4, 4});
    env.zones.push_back({ZoneKind::road, {0, 2, 5, 1}, Direction::east});
    EXPECT_EQ(phi(env, {1, 2}, Direction::east), (FeatureVector{-1, 1, 0, 0, 0}));
    EXPECT_EQ(phi(env, {1, 2}, Direction::west), (FeatureVector{-1, -1, 0, 0, 0}));
    EXPECT_EQ(phi(env, {1, 1}, Direction::south), (FeatureVector{-1, 0, 0, 0, 0}));
}

TEST(ZoneFeatures, CrossingIntoAvoidZone) {
    auto env = fixture::empty_grid(5, 5, {4, 4});
    env.zones.push_back({ZoneKind::avoid, {2, 0, 2, 2}, std::nullopt});
    EXPECT_EQ(phi(env, {1, 1}, Direction::east), (FeatureVector{-1, 0, -1, 0, 0}));
    EXPECT_EQ(phi(env, {2, 1}, Direction::east), (FeatureVector{-1, 0, 0, 0, 0}));
    EXPECT_EQ(phi(env, {3, 1}, Direction::east), (FeatureVector{-1, 0, -1, 0, 0}));
}

TEST(ZoneFeatures, SlowAndHighTraffic) {
    auto env = fixture::empty_grid(5, 5, {4, 4});
    env.zones.push_back({ZoneKind::slow, {0, 0, 1, 1}, std::nullopt});
    env.zones.push_back({ZoneKind::high_traffic, {3, 3, 1, 1}, std::nullopt});
    EXPECT_EQ(phi(env, {1, 0}, Direction::west), (FeatureVector{-1, 0, 0, -1, 0}));
    EXPECT_EQ(phi(env, {2, 3}, Direction::east), (FeatureVector{-1, 0, 0, 0, -1}));
}

TEST(ZoneMdp, ThreeByThreeCounts) {
    const auto m = build_zone_mdp(fixture::empty_grid(3, 3, {2, 2}));
    EXPECT_EQ(m.mdp.num_states(), 9u);
    for (StateId s = 0; s < 9; ++s) EXPECT_EQ(m.mdp.num_actions(s), 4u);
    EXPECT_EQ(m.mdp.feature_dim(), 5u);
}

TEST(ZoneMdp, NorthAtTopRowSelfLoops) {
    const auto m = build_zone_mdp(fixture::empty_grid(3, 3, {2, 2}));
    for (int x = 0; x < 3; ++x) {
        const auto s = *m.state_of({x, 0});
        EXPECT_EQ(m.mdp.transition(s, static_cast<ActionId>(Direction::north)), s);
    }
}

TEST(ZoneMdp, ObstaclesAreNotStatesAndBlockMoves) {
    auto env = fixture::empty_grid(3, 3, {2, 2});
    env.zones.push_back({ZoneKind::obstacle, {1, 1, 1, 1}, std::nullopt});
    const auto m = build_zone_mdp(env);
    EXPECT_EQ(m.mdp.num_states(), 8u);
    EXPECT_FALSE(m.state_of({1, 1}));
    const auto s = *m.state_of({0, 1});
    EXPECT_EQ(m.mdp.transition(s, static_cast<ActionId>(Direction::east)), s);
}

TEST(ZoneMdp, FeaturesBoundedInMinusOneOne) {
    for (Seed seed = 0; seed < 5; ++seed) {
        const auto m = build_zone_mdp(generate_environment(seed));
        for (std::size_t k = 0; k < m.mdp.num_slots(); ++k)
            for (double f : m.mdp.slot_features(k)) {
                EXPECT_GE(f, -1.0);
                EXPECT_LE(f, 1.0);
            }
    }
}

TEST(Generator, SameSeedSameEnvironment) {
    EXPECT_EQ(generate_environment(77), generate_environment(77));
    EXPECT_EQ(to_json(AnyEnvironment(generate_environment(77))).dump(),
              to_json(AnyEnvironment(generate_environment(77))).dump());
}

TEST(Generator, FiveSeedsRespectZoneCaps) {
    for (Seed seed = 100; seed < 105; ++seed) {
        const auto env = generate_environment(seed);
        std::map<ZoneKind, int> per_kind;
        for (const auto& z : env.zones) ++per_kind[z.kind];
        for (auto [kind, n] : per_kind) EXPECT_LE(n, 4) << to_string(kind);
        EXPECT_NO_THROW(validate(env));
    }
}

TEST(Generator, GoalReachableFromAlmostEveryFreeCell) {
    for (Seed seed = 0; seed < 50; ++seed) {
        const auto env = generate_environment(seed, SizeRange::square(8, 14));
        const double frac = static_cast<double>(oracle::cells_reaching_goal(env).size()) /
                            static_cast<double>(oracle::free_cells(env));
        EXPECT_GE(frac, 0.9) << "seed " << seed;
    }
}

TEST(Generator, RejectsTinySizes) {
    EXPECT_THROW(generate_environment(1, SizeRange::square(3, 3)), ConfigError);
}

TEST(EnvironmentJson, RoundTripZoneGrid) {
    const AnyEnvironment env = generate_environment(9);
    EXPECT_EQ(environment_from_json(to_json(env)), env);
}

TEST(EnvironmentJson, RoundTripWarehouse) {
    const AnyEnvironment env = generate_warehouse(9, 12, 9);
    EXPECT_EQ(environment_from_json(to_json(env)), env);
}

TEST(EnvironmentJson, OutOfBoundsZoneNamesField) {
    auto doc = to_json(AnyEnvironment(fixture::empty_grid(5, 5, {4, 4})));
    doc["zones"] = nlohmann::json::array({{{"kind", "avoid"}, {"rect", {0, 0, 1, 1}}},
                                          {{"kind", "slow"}, {"rect", {3, 3, 4, 1}}}});
    try {
        environment_from_json(doc);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("zones[1].rect"), std::string::npos) << e.what();
    }
}

TEST(EnvironmentJson, MalformedFileReportsLine) {
    const auto path = std::filesystem::temp_directory_path() / "eirl_bad_env.json";
    {
        std::ofstream out(path);
        out << "{\n  \"kind\": \"zone_grid\",\n  \"width\": 5,\n  oops\n}\n";
    }
    try {
        load_environment(path.string());
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
    }
}

TEST(EnvironmentJson, MissingAndUnknownFields) {
    EXPECT_THROW(environment_from_json(nlohmann::json{{"kind", "zone_grid"}, {"width", 5}}), ParseError);
    EXPECT_THROW(environment_from_json(nlohmann::json{{"kind", "maze"}, {"width", 5}, {"height", 5}, {"goal", {0, 0}}}),
                 ParseError);
}

TEST(EnvironmentJson, HandWrittenFiveByFiveFixture) {
    const auto env = std::get<ZoneGridEnvironment>(load_environment(EIRL_TEST_DATA "/zone5x5.json"));
    EXPECT_EQ(env.width, 5);
    EXPECT_EQ(env.height, 5);
    EXPECT_EQ(env.goal, (Cell{4, 4}));
    const std::vector<Zone> expected{
        {ZoneKind::road, {0, 2, 5, 1}, Direction::east},
        {ZoneKind::avoid, {3, 0, 2, 2}, std::nullopt},
        {ZoneKind::slow, {0, 4, 2, 1}, std::nullopt},
        {ZoneKind::high_traffic, {2, 3, 1, 2}, std::nullopt},
        {ZoneKind::obstacle, {1, 0, 1, 2}, std::nullopt},
    };
    EXPECT_EQ(env.zones, expected);
    const auto m = build_zone_mdp(env);
    EXPECT_EQ(m.mdp.num_states(), 23u);
    // (2,2) is on the eastbound road; moving east from (1,2) earns the road reward.
    const auto s = *m.state_of({1, 2});
    EXPECT_EQ(fv(m.mdp.features(s, static_cast<ActionId>(Direction::east))), (FeatureVector{-1, 1, 0, 0, 0}));
    // (2,2) -> (2,3) leaves the road and enters high traffic.
    const auto t = *m.state_of({2, 2});
    EXPECT_EQ(fv(m.mdp.features(t, static_cast<ActionId>(Direction::south))), (FeatureVector{-1, 0, 0, 0, -1}));
}

namespace {

WarehouseEnvironment open_floor(int w, int h) {
    WarehouseEnvironment env;
    env.width = w;
    env.height = h;
    env.goals = {{w - 1, h - 1}};
    return env;
}

}  // namespace

TEST(Warehouse, StateCountIsTwicePerCell) {
    for (auto [w, h] : {std::pair{5, 5}, {12, 9}, {20, 15}}) {
        const auto m = build_warehouse_mdp(generate_warehouse(3, w, h));
        EXPECT_EQ(m.mdp.num_states(), static_cast<std::size_t>(w * h * 2));
        EXPECT_EQ(m.mdp.feature_dim(), 3u);
    }
}

TEST(Warehouse, ForwardMoveInEmptyAisle) {
    const auto m = build_warehouse_mdp(open_floor(6, 6));
    const auto s = *m.state_of({1, 1}, Heading::horizontal);
    // rule table: straight move = -1, no restricted cell = 0, off-road = -1
    EXPECT_EQ(fv(m.mdp.features(s, static_cast<ActionId>(Direction::east))), (FeatureVector{-1, 0, -1}));
}

TEST(Warehouse, HeadingChangeCostsDouble) {
    const auto m = build_warehouse_mdp(open_floor(6, 6));
    const auto s = *m.state_of({1, 1}, Heading::horizontal);
    const auto a = static_cast<ActionId>(Direction::south);
    EXPECT_EQ(m.mdp.features(s, a)[0], -2.0);
    EXPECT_EQ(m.states[m.mdp.transition(s, a)].heading, Heading::vertical);
}

TEST(Warehouse, RoadAndRestrictedFeatures) {
    auto env = open_floor(6, 6);
    env.zones.push_back({ZoneKind::road, {0, 1, 6, 1}, Direction::east});
    env.zones.push_back({ZoneKind::restricted, {3, 3, 1, 1}, std::nullopt});
    const auto m = build_warehouse_mdp(env);
    const auto s = *m.state_of({1, 1}, Heading::horizontal);
    EXPECT_EQ(fv(m.mdp.features(s, static_cast<ActionId>(Direction::east))), (FeatureVector{-1, 0, 1}));
    EXPECT_EQ(fv(m.mdp.features(s, static_cast<ActionId>(Direction::west))), (FeatureVector{-1, 0, -1}));
    const auto r = *m.state_of({3, 2}, Heading::vertical);
    EXPECT_EQ(fv(m.mdp.features(r, static_cast<ActionId>(Direction::south))), (FeatureVector{-1, -1, -1}));
}

TEST(Warehouse, NeutralOffRoadOption) {
    const auto m = build_warehouse_mdp(open_floor(6, 6), {0.95, false});
    const auto s = *m.state_of({1, 1}, Heading::horizontal);
    EXPECT_EQ(fv(m.mdp.features(s, static_cast<ActionId>(Direction::east))), (FeatureVector{-1, 0, 0}));
}

TEST(Warehouse, GoalCellsAbsorbInBothHeadings) {
    const auto m = build_warehouse_mdp(open_floor(5, 5));
    for (auto h : {Heading::horizontal, Heading::vertical}) EXPECT_TRUE(m.mdp.is_terminal(*m.state_of({4, 4}, h)));
}
