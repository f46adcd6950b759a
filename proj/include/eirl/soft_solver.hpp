#pragma once

// Soft (maximum-entropy) value iteration and the likelihood of demonstrations under the
// induced Boltzmann policy  pi(a|s) = exp((Q(s,a) - V(s)) / beta).

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eirl/errors.hpp"
#include "eirl/mdp.hpp"

namespace eirl {

/// Below this temperature V is replaced by its hard-max limit and the policy by a greedy one.
inline constexpr double kHardLimitBeta = 1e-6;

/// Action layout of an MDP, shared by all solutions computed on it.
struct SlotLayout {
    std::vector<std::size_t> offsets;
    std::vector<ActionId> actions;
    std::vector<char> terminal;
    std::uint64_t fingerprint = 0;

    std::size_t num_states() const noexcept { return offsets.size() - 1; }

    std::optional<std::size_t> find_slot(StateId s, ActionId a) const {
        if (s + 1 >= offsets.size()) return std::nullopt;
        for (std::size_t k = offsets[s]; k < offsets[s + 1]; ++k)
            if (actions[k] == a) return k;
        return std::nullopt;
    }
};

inline std::shared_ptr<const SlotLayout> make_layout(const TabularMdp& mdp) {
    auto l = std::make_shared<SlotLayout>();
    l->offsets.reserve(mdp.num_states() + 1);
    for (StateId s = 0; s < mdp.num_states(); ++s) l->offsets.push_back(mdp.slot_begin(s));
    l->offsets.push_back(mdp.num_slots());
    l->actions.resize(mdp.num_slots());
    for (std::size_t k = 0; k < mdp.num_slots(); ++k) l->actions[k] = mdp.slot_action(k);
    l->terminal.resize(mdp.num_states());
    for (StateId s = 0; s < mdp.num_states(); ++s) l->terminal[s] = mdp.is_terminal(s) ? 1 : 0;
    l->fingerprint = mdp.fingerprint();
    return l;
}

struct SoftSolution {
    std::shared_ptr<const SlotLayout> layout;
    std::vector<double> q;  // per slot
    std::vector<double> v;  // per state
    RewardWeights theta;
    double beta = 1.0;
    std::size_t iterations_used = 0;
    bool converged = false;
    bool hard_limit = false;
    /// Sup-norm change of V at each sweep.
    std::vector<double> residuals;

    std::size_t num_states() const noexcept { return v.size(); }

    std::span<const double> q_row(StateId s) const {
        return {q.data() + layout->offsets[s], layout->offsets[s + 1] - layout->offsets[s]};
    }
    double q_value(StateId s, ActionId a) const;
};

struct SolverConfig {
    double tolerance = 1e-6;
    std::size_t max_sweeps = 10000;
    /// Initial V taken from this solution (must come from the same MDP).
    std::shared_ptr<const SoftSolution> warm_start;
    /// Reused instead of rebuilding the action layout on every solve.
    std::shared_ptr<const SlotLayout> layout;

    void validate() const {
        if (!(tolerance > 0.0)) throw ConfigError("solver tolerance must be positive");
        if (max_sweeps < 1) throw ConfigError("solver max_sweeps must be >= 1");
    }
};

namespace detail {

/// beta * log(sum exp(q / beta)) with the max shift.
inline double soft_max(std::span<const double> q, double beta) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : q) m = std::max(m, x);
    if (beta < kHardLimitBeta || !std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : q) acc += std::exp((x - m) / beta);
    return m + beta * std::log(acc);
}

// Relative width of the tie band used by the greedy policy in the hard limit.
inline constexpr double kTieTolerance = 1e-12;

inline bool is_greedy(std::span<const double> q, double x) {
    double m = -std::numeric_limits<double>::infinity();
    for (double y : q) m = std::max(m, y);
    return x >= m - kTieTolerance * std::max(1.0, std::abs(m));
}

}  // namespace detail

inline double SoftSolution::q_value(StateId s, ActionId a) const {
    auto k = layout->find_slot(s, a);
    if (!k)
        throw ValidationError("action " + std::to_string(a) + " not admissible at state " + std::to_string(s));
    return q[*k];
}

/// Iterates Q(s,a) <- r(s,a,s') + gamma V(s'),  V(s) <- beta log sum_a exp(Q(s,a)/beta)
/// synchronously until the sup-norm change in V drops below cfg.tolerance.
inline SoftSolution soft_value_iteration(const TabularMdp& mdp, const RewardWeights& theta,
                                         const ExpertiseLevel& beta_level, const SolverConfig& cfg = {}) {
    cfg.validate();
    const double beta = beta_level.value();
    const double gamma = mdp.discount();
    const auto rewards = slot_rewards(mdp, theta);
    for (std::size_t k = 0; k < rewards.size(); ++k)
        if (!std::isfinite(rewards[k]))
            throw NumericError("non-finite reward on transition (state " + std::to_string(mdp.slot_state(k)) +
                               ", action " + std::to_string(mdp.slot_action(k)) + ")");

    SoftSolution sol;
    if (cfg.layout && cfg.layout->fingerprint == mdp.fingerprint())
        sol.layout = cfg.layout;
    else if (cfg.warm_start && cfg.warm_start->layout && cfg.warm_start->layout->fingerprint == mdp.fingerprint())
        sol.layout = cfg.warm_start->layout;
    else
        sol.layout = make_layout(mdp);
    sol.theta = theta;
    sol.beta = beta;
    sol.hard_limit = beta < kHardLimitBeta;

    const std::size_t n = mdp.num_states();
    std::vector<double> v(n, 0.0);
    if (cfg.warm_start) {
        if (cfg.warm_start->v.size() != n) throw ConfigError("warm start solution has the wrong state count");
        v = cfg.warm_start->v;
        for (StateId s = 0; s < n; ++s)
            if (mdp.is_terminal(s)) v[s] = 0.0;
    }
    std::vector<double> v_next(n, 0.0);
    sol.q.assign(mdp.num_slots(), 0.0);
    const auto& off = sol.layout->offsets;
    const auto& term = sol.layout->terminal;

    for (std::size_t sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
        double delta = 0.0;
        for (StateId s = 0; s < n; ++s) {
            if (term[s]) {
                v_next[s] = 0.0;
                continue;
            }
            for (std::size_t k = off[s]; k < off[s + 1]; ++k) sol.q[k] = rewards[k] + gamma * v[mdp.slot_next(k)];
            v_next[s] = detail::soft_max({sol.q.data() + off[s], off[s + 1] - off[s]}, beta);
            delta = std::max(delta, std::abs(v_next[s] - v[s]));
        }
        if (!std::isfinite(delta)) throw NumericError("soft value iteration diverged (non-finite value)");
        v.swap(v_next);
        sol.residuals.push_back(delta);
        sol.iterations_used = sweep;
        if (delta < cfg.tolerance) {
            sol.converged = true;
            break;
        }
    }
    sol.v = std::move(v);
    return sol;
}

/// pi(.|s) in the order of mdp.actions(s).
inline std::vector<double> maxent_policy(const SoftSolution& sol, StateId s) {
    if (s >= sol.num_states()) throw DomainError("state " + std::to_string(s) + " out of range");
    const auto row = sol.q_row(s);
    std::vector<double> p(row.size());
    if (sol.layout->terminal[s] || sol.hard_limit) {
        // Terminal rows are all zero, so this yields the uniform distribution there.
        std::size_t ties = 0;
        for (double x : row) ties += detail::is_greedy(row, x) ? 1 : 0;
        for (std::size_t i = 0; i < row.size(); ++i) p[i] = detail::is_greedy(row, row[i]) ? 1.0 / ties : 0.0;
        return p;
    }
    // Recompute the normalizer from this row so rows sum to one even for unconverged tables.
    const double lse = detail::soft_max(row, sol.beta);
    for (std::size_t i = 0; i < row.size(); ++i) p[i] = std::exp((row[i] - lse) / sol.beta);
    return p;
}

/// ln pi(a|s) for the transition stored in slot k.
inline double log_policy_slot(const SoftSolution& sol, StateId s, std::size_t k) {
    const auto row = sol.q_row(s);
    if (sol.layout->terminal[s] || sol.hard_limit) {
        std::size_t ties = 0;
        for (double x : row) ties += detail::is_greedy(row, x) ? 1 : 0;
        return detail::is_greedy(row, sol.q[k]) ? -std::log(static_cast<double>(ties))
                                                : -std::numeric_limits<double>::infinity();
    }
    return (sol.q[k] - sol.v[s]) / sol.beta;
}

inline double log_policy(const SoftSolution& sol, StateId s, ActionId a) {
    if (s >= sol.num_states()) throw ValidationError("state " + std::to_string(s) + " out of range");
    auto k = sol.layout->find_slot(s, a);
    if (!k)
        throw ValidationError("action " + std::to_string(a) + " not admissible at state " + std::to_string(s));
    return log_policy_slot(sol, s, *k);
}

/// sum_t (Q(s_t,a_t) - V(s_t)) / beta. Undiscounted, as a plain product of step probabilities.
inline double trajectory_log_likelihood(const SoftSolution& sol, const Trajectory& traj) {
    double ll = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const Step& st = traj.steps[i];
        if (st.state >= sol.num_states())
            throw ValidationError("trajectory step " + std::to_string(i) + ": state out of range");
        auto k = sol.layout->find_slot(st.state, st.action);
        if (!k)
            throw ValidationError("trajectory step " + std::to_string(i) + ": action " + std::to_string(st.action) +
                                  " not admissible at state " + std::to_string(st.state));
        ll += log_policy_slot(sol, st.state, *k);
    }
    return ll;
}

inline double set_log_likelihood(const SoftSolution& sol, const EpisodeSet& demos) {
    if (demos.empty()) throw DomainError("inference requires at least one trajectory");
    double ll = 0.0;
    for (const auto& t : demos.trajectories) ll += trajectory_log_likelihood(sol, t);
    return ll;
}

/// Visit counts per slot. The set log-likelihood only depends on these, which lets repeated
/// evaluations (MCMC, large hypothesis sets) skip the trajectory walk.
struct SlotCounts {
    std::vector<std::pair<std::size_t, double>> entries;  // (slot, count), slot ascending
    std::vector<StateId> states;                          // state of each entry
    std::uint64_t fingerprint = 0;
};

inline SlotCounts count_slots(const TabularMdp& mdp, const EpisodeSet& demos) {
    if (demos.empty()) throw DomainError("inference requires at least one trajectory");
    std::vector<double> counts(mdp.num_slots(), 0.0);
    for (std::size_t t = 0; t < demos.size(); ++t) {
        const auto& traj = demos.trajectories[t];
        for (std::size_t i = 0; i < traj.size(); ++i) {
            auto k = mdp.find_slot(traj.steps[i].state, traj.steps[i].action);
            if (!k)
                throw ValidationError("trajectory " + std::to_string(t) + " step " + std::to_string(i) +
                                      ": inadmissible action");
            counts[*k] += 1.0;
        }
    }
    SlotCounts out;
    out.fingerprint = mdp.fingerprint();
    for (std::size_t k = 0; k < counts.size(); ++k)
        if (counts[k] > 0.0) {
            out.entries.emplace_back(k, counts[k]);
            out.states.push_back(mdp.slot_state(k));
        }
    return out;
}

inline double counts_log_likelihood(const SoftSolution& sol, const SlotCounts& counts) {
    if (counts.fingerprint != sol.layout->fingerprint)
        throw ConfigError("slot counts were computed on a different MDP");
    double ll = 0.0;
    for (std::size_t i = 0; i < counts.entries.size(); ++i) {
        const auto [k, c] = counts.entries[i];
        ll += c * log_policy_slot(sol, counts.states[i], k);
    }
    return ll;
}

}  // namespace eirl
