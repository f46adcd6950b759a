#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "eirl/environments.hpp"
#include "eirl/simulator.hpp"
#include "fixtures.hpp"

using namespace eirl;

TEST(SampleEpisode, TerminalStartGivesEmptyTrajectory) {
    const auto mdp = fixture::two_state_chain();
    const auto sol = soft_value_iteration(mdp, RewardWeights({1.0}), ExpertiseLevel(1.0));
    std::mt19937_64 rng(0);
    EXPECT_TRUE(sample_episode(mdp, sol, 1, 500, rng).empty());
}

TEST(SampleEpisode, NearDeterministicAtSmallBeta) {
    const auto mdp = fixture::two_state_chain();
    const auto sol = soft_value_iteration(mdp, RewardWeights({1.0}), ExpertiseLevel(1e-4));
    EXPECT_GE(maxent_policy(sol, 0)[0], 1.0 - 1e-6);
    for (Seed seed = 0; seed < 200; ++seed) {
        std::mt19937_64 rng(seed);
        EXPECT_EQ(sample_episode(mdp, sol, 0, 500, rng), (Trajectory{{{0, 0}}}));
    }
}

TEST(SampleEpisode, RespectsHorizonCap) {
    const auto mdp = fixture::self_loops(4, 0.9);
    const auto sol = soft_value_iteration(mdp, RewardWeights({0.0}), ExpertiseLevel(1.0));
    std::mt19937_64 rng(3);
    EXPECT_EQ(sample_episode(mdp, sol, 0, 17, rng).size(), 17u);
}

TEST(SampleEpisode, ActionFrequenciesMatchPolicy) {
    const auto model = build_zone_mdp(generate_environment(31));
    const auto sol = soft_value_iteration(model.mdp, RewardWeights({0.5, 0.5, 0.2, 0.1, 0.3}), ExpertiseLevel(0.3));
    const auto states = model.non_terminal_states();
    const std::size_t n = 10000;
    for (std::size_t which = 0; which < 3; ++which) {
        const StateId s = states[(which * 37) % states.size()];
        const auto p = maxent_policy(sol, s);
        std::vector<double> counts(p.size(), 0.0);
        std::mt19937_64 rng(derive_seed(5, which));
        for (std::size_t i = 0; i < n; ++i) {
            const auto t = sample_episode(model.mdp, sol, s, 1, rng);
            const auto acts = model.mdp.actions(s);
            counts[std::find(acts.begin(), acts.end(), t.steps[0].action) - acts.begin()] += 1.0;
        }
        for (std::size_t a = 0; a < p.size(); ++a) {
            const double se = std::sqrt(n * p[a] * (1.0 - p[a]));
            EXPECT_LE(std::abs(counts[a] - n * p[a]), 3.0 * se + 1e-9) << "state " << s << " action " << a;
        }
    }
}

TEST(SampleEpisode, ChiSquareGoodnessOfFit) {
    const auto model = build_zone_mdp(generate_environment(32));
    const auto sol = soft_value_iteration(model.mdp, RewardWeights({0.3, 0.6, 0.2, 0.4, 0.1}), ExpertiseLevel(0.5));
    const auto states = model.non_terminal_states();
    std::mt19937_64 rng(99);
    const StateId s = states[states.size() / 2];
    const auto p = maxent_policy(sol, s);
    std::vector<double> counts(p.size(), 0.0);
    const auto acts = model.mdp.actions(s);
    for (int i = 0; i < 10000; ++i) {
        const auto t = sample_episode(model.mdp, sol, s, 1, rng);
        counts[std::find(acts.begin(), acts.end(), t.steps[0].action) - acts.begin()] += 1.0;
    }
    double chi2 = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) chi2 += std::pow(counts[a] - 1e4 * p[a], 2) / (1e4 * p[a]);
    const boost::math::chi_squared dist(static_cast<double>(p.size() - 1));
    EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 1e-3);
}

TEST(EpisodeSet, TwentyEpisodesDeterministic) {
    const auto model = build_zone_mdp(generate_environment(33));
    const RewardWeights theta({0.2, 0.2, 0.2, 0.2, 0.2});
    const auto a = generate_episode_set(model.mdp, theta, ExpertiseLevel(0.5), {20, 500, 4});
    const auto b = generate_episode_set(model.mdp, theta, ExpertiseLevel(0.5), {20, 500, 4});
    EXPECT_EQ(a.size(), 20u);
    EXPECT_EQ(a.trajectories, b.trajectories);
    const auto c = generate_episode_set(model.mdp, theta, ExpertiseLevel(0.5), {20, 500, 5});
    EXPECT_NE(a.trajectories, c.trajectories);
}

TEST(EpisodeSet, NovicesWanderLonger) {
    const auto model = build_zone_mdp(generate_environment(34));
    const RewardWeights theta({0.6, 0.1, 0.1, 0.1, 0.1});
    for (Seed seed = 0; seed < 20; ++seed) {
        const auto expert = generate_episode_set(model.mdp, theta, ExpertiseLevel(0.01), {20, 500, seed});
        const auto novice = generate_episode_set(model.mdp, theta, ExpertiseLevel(5.0), {20, 500, seed});
        EXPECT_GT(novice.total_steps(), expert.total_steps()) << "seed " << seed;
    }
}

TEST(EpisodeSet, RejectsBadConfig) {
    const auto mdp = fixture::two_state_chain();
    EXPECT_THROW(generate_episode_set(mdp, RewardWeights({1.0}), ExpertiseLevel(1.0), {0, 500, 0}), ConfigError);
    EXPECT_THROW(generate_episode_set(mdp, RewardWeights({1.0}), ExpertiseLevel(1.0), {5, 0, 0}), ConfigError);
}

TEST(EpisodeSet, UnconvergedSolveIsFlagged) {
    const auto model = build_zone_mdp(generate_environment(35));
    SolverConfig cfg;
    cfg.max_sweeps = 2;
    const auto set =
        generate_episode_set(model.mdp, RewardWeights({0.2, 0.2, 0.2, 0.2, 0.2}), ExpertiseLevel(1.0), {3, 50, 1}, cfg);
    ASSERT_EQ(set.warnings.size(), 1u);
    EXPECT_NE(set.warnings[0].find("did not converge"), std::string::npos);
}

TEST(TrajectoryJsonl, RoundTripAndValidation) {
    const auto model = build_zone_mdp(generate_environment(36));
    const auto set = generate_episode_set(model.mdp, RewardWeights({0.3, 0.3, 0.1, 0.2, 0.1}), ExpertiseLevel(0.5),
                                          {20, 500, 8});
    const auto path = (std::filesystem::temp_directory_path() / "eirl_sim_roundtrip.jsonl").string();
    std::vector<TrajectoryRecord> recs;
    for (std::size_t i = 0; i < set.size(); ++i)
        recs.push_back({set.trajectories[i], {i, std::vector<double>{0.3, 0.3, 0.1, 0.2, 0.1}, 0.5}});
    write_trajectories(path, recs);
    std::ifstream in(path);
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    EXPECT_EQ(lines, 20u);
    const auto back = read_trajectories(path, &model.mdp);
    ASSERT_EQ(back.size(), 20u);
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_EQ(back[i].trajectory, set.trajectories[i]);
        EXPECT_EQ(*back[i].meta.seed, i);
        EXPECT_EQ(*back[i].meta.beta_star, 0.5);
    }
}

TEST(TrajectoryJsonl, EmptyFileRejected) {
    const auto path = (std::filesystem::temp_directory_path() / "eirl_sim_empty.jsonl").string();
    std::ofstream(path).close();
    EXPECT_THROW(read_trajectories(path), ValidationError);
}

TEST(TrajectoryJsonl, MismatchNamesLine) {
    const auto model = build_zone_mdp(fixture::empty_grid(3, 3, {2, 2}));
    const auto path = (std::filesystem::temp_directory_path() / "eirl_sim_mismatch.jsonl").string();
    std::ofstream(path) << "{\"steps\": [[0, 2], [1, 2]]}\n{\"steps\": [[0, 2], [5, 2]]}\n";
    try {
        read_trajectories(path, &model.mdp);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(TrajectoryJsonl, MalformedLine) {
    std::istringstream in("{\"steps\": [[0, 1]]}\nnot json\n");
    EXPECT_THROW(parse_trajectories(in, "mem"), ParseError);
    std::istringstream bad("{\"steps\": [[0]]}\n");
    EXPECT_THROW(parse_trajectories(bad, "mem"), ParseError);
}
