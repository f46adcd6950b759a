#pragma once

// Conversion of raw timestamped grid recordings into state-action trajectories, and
// near-optimal rollouts with route summaries.

#include <istream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "eirl/environments.hpp"
#include "eirl/errors.hpp"
#include "eirl/mdp.hpp"
#include "eirl/simulator.hpp"
#include "eirl/soft_solver.hpp"

namespace eirl {

/// One line of a raw recording: {"t": seconds, "cell": [x, y], "heading": "h" | "v"}.
struct RawSample {
    double t = 0.0;
    Cell cell;
    std::optional<Heading> heading;
};

inline std::vector<RawSample> parse_raw_samples(std::istream& in, const std::string& origin) {
    std::vector<RawSample> out;
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
        RawSample s;
        if (!j.is_object() || !j.contains("t") || !j["t"].is_number()) throw ParseError(where + "t: missing or not a number");
        s.t = j["t"].get<double>();
        if (!j.contains("cell") || !j["cell"].is_array() || j["cell"].size() != 2 || !j["cell"][0].is_number_integer() ||
            !j["cell"][1].is_number_integer())
            throw ParseError(where + "cell: expected [x, y]");
        s.cell = {j["cell"][0].get<int>(), j["cell"][1].get<int>()};
        if (j.contains("heading")) {
            const auto h = j["heading"].is_string() ? j["heading"].get<std::string>() : "";
            if (h == "h")
                s.heading = Heading::horizontal;
            else if (h == "v")
                s.heading = Heading::vertical;
            else
                throw ParseError(where + "heading: expected \"h\" or \"v\"");
        }
        if (!out.empty() && s.t < out.back().t) throw ParseError(where + "t: timestamps must not decrease");
        out.push_back(s);
    }
    return out;
}

struct IngestOptions {
    std::size_t downsample = 1;
    /// Drop samples identical to their predecessor (operator standing still).
    bool drop_pauses = false;
};

/// Keeps samples 0, n, 2n, ... and reconstructs the action between consecutive kept samples.
/// Heading is tracked through the dynamics when samples omit it. The last kept sample is the
/// final state and carries no action.
inline Trajectory ingest_samples(const GridModel& model, const std::vector<RawSample>& raw, const IngestOptions& opt) {
    if (opt.downsample < 1) throw ConfigError("downsample factor must be >= 1");
    std::vector<RawSample> kept;
    for (std::size_t i = 0; i < raw.size(); i += opt.downsample) {
        const auto& s = raw[i];
        if (opt.drop_pauses && !kept.empty() && kept.back().cell == s.cell &&
            (!model.has_heading || kept.back().heading == s.heading))
            continue;
        kept.push_back(s);
    }
    if (kept.size() < 2) throw ValidationError("recording has fewer than two samples after downsampling");

    const auto& mdp = model.mdp;
    auto state_at = [&](std::size_t i, Heading h) -> StateId {
        const auto s = model.state_of(kept[i].cell, h);
        if (!s)
            throw ValidationError("sample " + std::to_string(i) + ": cell (" + std::to_string(kept[i].cell.x) + ", " +
                                  std::to_string(kept[i].cell.y) + ") is not a state of the environment");
        return *s;
    };

    Trajectory traj;
    StateId s = state_at(0, kept[0].heading.value_or(Heading::horizontal));
    for (std::size_t i = 0; i + 1 < kept.size(); ++i) {
        if (mdp.is_terminal(s))
            throw ValidationError("sample " + std::to_string(i) + " is a goal state but the recording continues");
        std::optional<std::size_t> match;
        for (std::size_t k = mdp.slot_begin(s); k < mdp.slot_end(s); ++k) {
            const auto& next = model.states[mdp.slot_next(k)];
            if (next.cell != kept[i + 1].cell) continue;
            if (model.has_heading && kept[i + 1].heading && next.heading != *kept[i + 1].heading) continue;
            match = k;
            break;
        }
        if (!match)
            throw ValidationError("samples " + std::to_string(i) + " and " + std::to_string(i + 1) +
                                  ": no single action connects (" + std::to_string(kept[i].cell.x) + ", " +
                                  std::to_string(kept[i].cell.y) + ") to (" + std::to_string(kept[i + 1].cell.x) + ", " +
                                  std::to_string(kept[i + 1].cell.y) + ")");
        traj.steps.push_back({s, mdp.slot_action(*match)});
        s = mdp.slot_next(*match);
    }
    return traj;
}

/// Grid cells visited by a trajectory: every step's cell plus the final successor.
inline std::vector<GridState> trajectory_cells(const GridModel& model, const Trajectory& t) {
    std::vector<GridState> out;
    for (const auto& st : t.steps) out.push_back(model.states[st.state]);
    if (!t.steps.empty()) out.push_back(model.states[model.mdp.transition(t.steps.back().state, t.steps.back().action)]);
    return out;
}

struct RouteSummary {
    std::size_t path_length = 0;
    std::size_t wrong_direction = 0;
    std::size_t restricted_entries = 0;
    std::size_t avoid_entries = 0;
    double road_usage = 0.0;
    std::size_t direction_changes = 0;
    bool reached_goal = false;
};

/// Counts over moving steps: entries onto road cells against the road direction, entries into
/// restricted and avoid zones, the fraction of moves that end on a road, and action changes
/// between consecutive steps.
inline RouteSummary summarize_route(const GridModel& model, const AnyEnvironment& env, const Trajectory& t) {
    const auto& zones = std::visit([](const auto& e) -> const std::vector<Zone>& { return e.zones; }, env);
    const int w = std::visit([](const auto& e) { return e.width; }, env);
    const int h = std::visit([](const auto& e) { return e.height; }, env);
    const ZoneRaster raster(w, h, zones);
    RouteSummary r;
    r.path_length = t.size();
    std::size_t moves = 0, on_road = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto& st = t.steps[i];
        const Cell from = model.states[st.state].cell;
        const StateId next = model.mdp.transition(st.state, st.action);
        const Cell to = model.states[next].cell;
        const auto dir = static_cast<Direction>(st.action);
        if (i > 0 && t.steps[i - 1].action != st.action) ++r.direction_changes;
        if (from == to) continue;
        ++moves;
        const auto& a = raster.at(from);
        const auto& b = raster.at(to);
        if (b.road) {
            ++on_road;
            if (*b.road == opposite(dir)) ++r.wrong_direction;
        }
        if (b.restricted && !a.restricted) ++r.restricted_entries;
        if (b.avoid && !a.avoid) ++r.avoid_entries;
    }
    r.road_usage = moves == 0 ? 0.0 : static_cast<double>(on_road) / static_cast<double>(moves);
    if (!t.steps.empty()) r.reached_goal = model.mdp.is_terminal(model.mdp.transition(t.steps.back().state, t.steps.back().action));
    return r;
}

inline nlohmann::json to_json(const RouteSummary& r) {
    return {{"path_length", r.path_length},     {"wrong_direction", r.wrong_direction},
            {"restricted_entries", r.restricted_entries}, {"avoid_entries", r.avoid_entries},
            {"road_usage", r.road_usage},       {"direction_changes", r.direction_changes},
            {"reached_goal", r.reached_goal}};
}

inline constexpr double kRolloutBeta = 0.001;

struct Rollout {
    Trajectory trajectory;
    RouteSummary summary;
    SoftSolution solution;
};

/// Samples the beta = 0.001 policy of theta_hat from `start` until the goal or the horizon cap.
inline Rollout optimal_rollout(const GridModel& model, const AnyEnvironment& env, const RewardWeights& theta_hat,
                               StateId start, Seed seed, std::size_t horizon_cap = 500,
                               const SolverConfig& solver = {}) {
    if (theta_hat.dim() != model.mdp.feature_dim())
        throw ConfigError("theta has " + std::to_string(theta_hat.dim()) + " components, the environment needs " +
                          std::to_string(model.mdp.feature_dim()));
    if (start >= model.mdp.num_states()) throw ConfigError("start state out of range");
    auto sol = soft_value_iteration(model.mdp, theta_hat, ExpertiseLevel(kRolloutBeta), solver);
    std::mt19937_64 rng(seed);
    auto traj = sample_episode(model.mdp, sol, start, horizon_cap, rng);
    auto summary = summarize_route(model, env, traj);
    if (traj.empty()) summary.reached_goal = model.mdp.is_terminal(start);
    return {std::move(traj), summary, std::move(sol)};
}

}  // namespace eirl
