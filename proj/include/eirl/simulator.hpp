#pragma once

// Simulated demonstrator: rolls out the MaxEnt policy of a ground-truth (theta*, beta*).

#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eirl/errors.hpp"
#include "eirl/mdp.hpp"
#include "eirl/seeding.hpp"
#include "eirl/soft_solver.hpp"

namespace eirl {

struct SimulatorConfig {
    std::size_t num_episodes = 20;
    std::size_t horizon_cap = 500;
    Seed seed = 0;

    void validate() const {
        if (num_episodes < 1) throw ConfigError("num_episodes must be >= 1");
        if (horizon_cap < 1) throw ConfigError("horizon_cap must be >= 1");
    }
};

/// Index into `probs` drawn with the given uniform variate in [0, 1).
inline std::size_t sample_index(const std::vector<double>& probs, double u) {
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_positive = i;
        acc += probs[i];
        if (u < acc) return i;
    }
    return last_positive;  // rounding left u just above the cumulative total
}

/// Samples a ~ pi(.|s) and advances until a terminal state or `horizon_cap` steps.
/// The terminal state itself is not recorded as a step.
template <class Rng>
Trajectory sample_episode(const TabularMdp& mdp, const SoftSolution& sol, StateId start, std::size_t horizon_cap,
                          Rng& rng) {
    Trajectory traj;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    StateId s = start;
    while (!mdp.is_terminal(s) && traj.size() < horizon_cap) {
        const auto probs = maxent_policy(sol, s);
        const std::size_t i = sample_index(probs, unit(rng));
        const ActionId a = mdp.actions(s)[i];
        traj.steps.push_back({s, a});
        s = mdp.slot_next(mdp.slot_begin(s) + i);
    }
    return traj;
}

/// Solves for (theta*, beta*) once and samples cfg.num_episodes episodes from uniformly drawn
/// non-terminal starts. Episode i uses its own stream derived from (cfg.seed, i).
inline EpisodeSet generate_episode_set(const TabularMdp& mdp, const RewardWeights& theta, const ExpertiseLevel& beta,
                                       const SimulatorConfig& cfg, const SolverConfig& solver = {}) {
    cfg.validate();
    const auto sol = soft_value_iteration(mdp, theta, beta, solver);
    std::vector<StateId> starts;
    for (StateId s = 0; s < mdp.num_states(); ++s)
        if (!mdp.is_terminal(s)) starts.push_back(s);
    if (starts.empty()) throw DomainError("MDP has no non-terminal state to start from");

    EpisodeSet out;
    if (!sol.converged)
        out.warnings.push_back("demonstrator soft value iteration did not converge in " +
                               std::to_string(sol.iterations_used) + " sweeps");
    for (std::size_t i = 0; i < cfg.num_episodes; ++i) {
        std::mt19937_64 rng(derive_seed(cfg.seed, i));
        const auto start = starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)];
        out.trajectories.push_back(sample_episode(mdp, sol, start, cfg.horizon_cap, rng));
    }
    return out;
}

// --- trajectory JSONL ------------------------------------------------------------------------

struct TrajectoryMeta {
    std::optional<Seed> seed;
    std::optional<std::vector<double>> theta_star;
    std::optional<double> beta_star;
};

struct TrajectoryRecord {
    Trajectory trajectory;
    TrajectoryMeta meta;
};

inline std::string trajectory_to_jsonl(const Trajectory& t, const TrajectoryMeta& meta) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& st : t.steps) steps.push_back({st.state, st.action});
    nlohmann::json m = nlohmann::json::object();
    if (meta.seed) m["seed"] = *meta.seed;
    if (meta.theta_star) m["theta_star"] = *meta.theta_star;
    if (meta.beta_star) m["beta_star"] = *meta.beta_star;
    return nlohmann::json{{"steps", steps}, {"meta", m}}.dump();
}

inline void write_trajectories(const std::string& path, const std::vector<TrajectoryRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    for (const auto& r : records) out << trajectory_to_jsonl(r.trajectory, r.meta) << '\n';
}

inline std::vector<TrajectoryRecord> parse_trajectories(std::istream& in, const std::string& origin) {
    std::vector<TrajectoryRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(where + "malformed JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("steps") || !j["steps"].is_array())
            throw ParseError(where + "steps: missing or not an array");
        TrajectoryRecord rec;
        for (std::size_t i = 0; i < j["steps"].size(); ++i) {
            const auto& st = j["steps"][i];
            if (!st.is_array() || st.size() != 2 || !st[0].is_number_unsigned() || !st[1].is_number_unsigned())
                throw ParseError(where + "steps[" + std::to_string(i) + "]: expected [state, action]");
            rec.trajectory.steps.push_back({st[0].get<StateId>(), st[1].get<ActionId>()});
        }
        if (j.contains("meta") && j["meta"].is_object()) {
            const auto& m = j["meta"];
            try {
                if (m.contains("seed")) rec.meta.seed = m["seed"].get<Seed>();
                if (m.contains("theta_star")) rec.meta.theta_star = m["theta_star"].get<std::vector<double>>();
                if (m.contains("beta_star")) rec.meta.beta_star = m["beta_star"].get<double>();
            } catch (const nlohmann::json::exception&) {
                throw ParseError(where + "meta: wrong field type");
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

/// Reads a JSONL trajectory file and validates every line against `mdp`.
inline std::vector<TrajectoryRecord> read_trajectories(const std::string& path, const TabularMdp* mdp = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    auto recs = parse_trajectories(in, path);
    if (recs.empty()) throw ValidationError(path + ": no trajectories");
    if (mdp)
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const auto rep = validate_trajectory(*mdp, recs[i].trajectory);
            if (!rep.passed())
                throw ValidationError(path + ":" + std::to_string(i + 1) + ": trajectory does not match the environment (" +
                                      rep.describe() + ")");
        }
    return recs;
}

inline EpisodeSet to_episode_set(const std::vector<TrajectoryRecord>& recs) {
    EpisodeSet e;
    for (const auto& r : recs) e.trajectories.push_back(r.trajectory);
    return e;
}

}  // namespace eirl
