#pragma once

// Tabular MDP with deterministic transitions and a linear, feature-based reward.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eirl/errors.hpp"

namespace eirl {

using StateId = std::size_t;
using ActionId = std::size_t;

/// Per-transition feature values. Signs live here, so reward weights stay non-negative.
using FeatureVector = std::vector<double>;

/// Non-negative reward weights theta, each component in [0, theta_max].
class RewardWeights {
public:
    RewardWeights() = default;

    explicit RewardWeights(std::vector<double> values,
                           double theta_max = std::numeric_limits<double>::infinity())
        : values_(std::move(values)) {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            const double v = values_[i];
            if (!std::isfinite(v) || v < 0.0 || v > theta_max)
                throw DomainError("reward weight " + std::to_string(i) + " = " + std::to_string(v) +
                                  " outside [0, " + std::to_string(theta_max) + "]");
        }
    }

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double>& vector() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    double l1_norm() const noexcept {
        double s = 0.0;
        for (double v : values_) s += v;
        return s;
    }

    friend bool operator==(const RewardWeights&, const RewardWeights&) = default;

private:
    std::vector<double> values_;
};

/// MaxEnt temperature beta. Small values mean an expert demonstrator.
class ExpertiseLevel {
public:
    explicit ExpertiseLevel(double beta) : beta_(beta) {
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw DomainError("expertise level beta must be positive and finite, got " +
                              std::to_string(beta));
    }
    double value() const noexcept { return beta_; }
    friend bool operator==(const ExpertiseLevel&, const ExpertiseLevel&) = default;

private:
    double beta_;
};

struct Step {
    StateId state = 0;
    ActionId action = 0;
    friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
    std::vector<Step> steps;
    std::size_t size() const noexcept { return steps.size(); }
    bool empty() const noexcept { return steps.empty(); }
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct EpisodeSet {
    std::vector<Trajectory> trajectories;
    /// Non-fatal problems from generation, e.g. an unconverged demonstrator solve.
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return trajectories.size(); }
    bool empty() const noexcept { return trajectories.empty(); }

    std::size_t total_steps() const noexcept {
        std::size_t n = 0;
        for (const auto& t : trajectories) n += t.size();
        return n;
    }

    /// First `n` trajectories (all of them when n exceeds the size).
    EpisodeSet prefix(std::size_t n) const {
        EpisodeSet out;
        out.trajectories.assign(trajectories.begin(),
                                trajectories.begin() + static_cast<std::ptrdiff_t>(std::min(n, size())));
        out.warnings = warnings;
        return out;
    }
};

/// Immutable MDP. Transitions are stored in CSR form: the admissible actions of state s occupy
/// the contiguous "slots" [slot_begin(s), slot_end(s)), each holding the action id, the successor
/// and the feature vector of that transition.
class TabularMdp {
public:
    class Builder;

    /// Empty MDP with no states; placeholder until a builder result is assigned.
    TabularMdp() = default;

    std::size_t num_states() const noexcept { return offsets_.size() - 1; }
    std::size_t feature_dim() const noexcept { return feature_dim_; }
    std::size_t num_slots() const noexcept { return next_.size(); }
    double discount() const noexcept { return discount_; }

    std::size_t slot_begin(StateId s) const { return offsets_.at(s); }
    std::size_t slot_end(StateId s) const { return offsets_.at(s + 1); }
    std::size_t num_actions(StateId s) const { return slot_end(s) - slot_begin(s); }

    std::span<const ActionId> actions(StateId s) const {
        return {action_.data() + slot_begin(s), num_actions(s)};
    }

    bool is_terminal(StateId s) const { return terminal_.at(s) != 0; }

    std::vector<StateId> terminal_states() const {
        std::vector<StateId> out;
        for (StateId s = 0; s < num_states(); ++s)
            if (terminal_[s]) out.push_back(s);
        return out;
    }

    /// Slot of action `a` at state `s`, or nullopt when `a` is not admissible there.
    std::optional<std::size_t> find_slot(StateId s, ActionId a) const {
        if (s >= num_states()) return std::nullopt;
        for (std::size_t k = offsets_[s]; k < offsets_[s + 1]; ++k)
            if (action_[k] == a) return k;
        return std::nullopt;
    }

    std::size_t slot(StateId s, ActionId a) const {
        auto k = find_slot(s, a);
        if (!k)
            throw ValidationError("action " + std::to_string(a) + " not admissible at state " +
                                  std::to_string(s));
        return *k;
    }

    StateId transition(StateId s, ActionId a) const { return next_[slot(s, a)]; }

    std::span<const double> features(StateId s, ActionId a) const { return slot_features(slot(s, a)); }

    StateId slot_state(std::size_t k) const { return slot_state_.at(k); }
    ActionId slot_action(std::size_t k) const { return action_.at(k); }
    StateId slot_next(std::size_t k) const { return next_.at(k); }
    double slot_bias(std::size_t k) const { return bias_.at(k); }
    std::span<const double> slot_features(std::size_t k) const {
        return {features_.data() + k * feature_dim_, feature_dim_};
    }

    /// Content hash; lets caches detect that they are being reused against a different MDP.
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }

private:
    std::size_t feature_dim_ = 0;
    double discount_ = 0.95;
    std::vector<std::size_t> offsets_{0};
    std::vector<ActionId> action_;
    std::vector<StateId> next_;
    std::vector<StateId> slot_state_;
    std::vector<double> features_;
    std::vector<double> bias_;
    std::vector<char> terminal_;
    std::uint64_t fingerprint_ = 0;
};

class TabularMdp::Builder {
public:
    Builder(std::size_t num_states, std::size_t feature_dim, double discount)
        : num_states_(num_states), feature_dim_(feature_dim), discount_(discount),
          per_state_(num_states), terminal_(num_states, 0) {}

    /// Registers admissible action `a` at `s`. `bias` is a theta-independent reward offset
    /// (used for the optional goal bonus).
    Builder& add_action(StateId s, ActionId a, StateId next, FeatureVector features, double bias = 0.0) {
        if (s >= num_states_ || next >= num_states_)
            throw ConfigError("transition (" + std::to_string(s) + ", " + std::to_string(a) + ") -> " +
                              std::to_string(next) + " references a state out of range");
        if (features.size() != feature_dim_)
            throw ConfigError("feature vector of dimension " + std::to_string(features.size()) +
                              ", expected " + std::to_string(feature_dim_));
        for (const auto& e : per_state_[s])
            if (e.action == a)
                throw ConfigError("duplicate action " + std::to_string(a) + " at state " + std::to_string(s));
        per_state_[s].push_back({a, next, std::move(features), bias});
        return *this;
    }

    Builder& set_terminal(StateId s) {
        terminal_.at(s) = 1;
        return *this;
    }

    TabularMdp build() const {
        if (!(discount_ > 0.0 && discount_ < 1.0))
            throw ConfigError("discount must lie strictly in (0, 1), got " + std::to_string(discount_));
        TabularMdp m;
        m.feature_dim_ = feature_dim_;
        m.discount_ = discount_;
        m.terminal_ = terminal_;
        m.offsets_.assign(1, 0);
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](std::uint64_t v) { h = (h ^ v) * 1099511628211ULL; };
        mix(num_states_);
        mix(feature_dim_);
        mix(std::bit_cast<std::uint64_t>(discount_));
        for (StateId s = 0; s < num_states_; ++s) {
            if (per_state_[s].empty())
                throw ConfigError("state " + std::to_string(s) + " has no admissible action");
            for (const auto& e : per_state_[s]) {
                if (terminal_[s]) {
                    if (e.next != s)
                        throw ConfigError("terminal state " + std::to_string(s) + " is not absorbing");
                    for (double f : e.features)
                        if (f != 0.0)
                            throw ConfigError("non-zero feature on transition out of terminal state " +
                                              std::to_string(s));
                    if (e.bias != 0.0)
                        throw ConfigError("non-zero bias out of terminal state " + std::to_string(s));
                }
                for (double f : e.features)
                    if (!std::isfinite(f))
                        throw ConfigError("non-finite feature at state " + std::to_string(s));
                m.action_.push_back(e.action);
                m.next_.push_back(e.next);
                m.slot_state_.push_back(s);
                m.bias_.push_back(e.bias);
                m.features_.insert(m.features_.end(), e.features.begin(), e.features.end());
                mix(s);
                mix(e.action);
                mix(e.next);
                mix(std::bit_cast<std::uint64_t>(e.bias));
                for (double f : e.features) mix(std::bit_cast<std::uint64_t>(f));
            }
            m.offsets_.push_back(m.action_.size());
            mix(terminal_[s]);
        }
        m.fingerprint_ = h;
        return m;
    }

private:
    struct Entry {
        ActionId action;
        StateId next;
        FeatureVector features;
        double bias;
    };
    std::size_t num_states_;
    std::size_t feature_dim_;
    double discount_;
    std::vector<std::vector<Entry>> per_state_;
    std::vector<char> terminal_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ConfigError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// theta . phi(s, a, s2), plus the transition's constant bias (zero unless a goal bonus is set).
inline double reward_of_transition(const TabularMdp& mdp, const RewardWeights& theta, StateId s, ActionId a,
                                   StateId s2) {
    const std::size_t k = mdp.slot(s, a);
    if (mdp.slot_next(k) != s2)
        throw ValidationError("state " + std::to_string(s2) + " is not the successor of (" + std::to_string(s) +
                              ", " + std::to_string(a) + ")");
    if (theta.dim() != mdp.feature_dim())
        throw ConfigError("theta has dimension " + std::to_string(theta.dim()) + ", MDP features have " +
                          std::to_string(mdp.feature_dim()));
    return dot(theta.values(), mdp.slot_features(k)) + mdp.slot_bias(k);
}

/// Reward of every slot under theta, in slot order.
inline std::vector<double> slot_rewards(const TabularMdp& mdp, const RewardWeights& theta) {
    if (theta.dim() != mdp.feature_dim())
        throw ConfigError("theta has dimension " + std::to_string(theta.dim()) + ", MDP features have " +
                          std::to_string(mdp.feature_dim()));
    std::vector<double> r(mdp.num_slots());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = dot(theta.values(), mdp.slot_features(k)) + mdp.slot_bias(k);
    return r;
}

struct StepCheck {
    bool state_in_range = true;
    bool admissible = true;
    bool successor_consistent = true;
    bool ok() const noexcept { return state_in_range && admissible && successor_consistent; }
};

struct ValidationReport {
    std::vector<StepCheck> steps;
    std::optional<std::size_t> first_failure;
    bool passed() const noexcept { return !first_failure.has_value(); }

    std::string describe() const {
        if (passed()) return "ok";
        const auto i = *first_failure;
        const auto& c = steps[i];
        std::string why = !c.state_in_range ? "state out of range"
                          : !c.admissible   ? "inadmissible action"
                                            : "successor does not match the next step's state";
        return "step " + std::to_string(i) + ": " + why;
    }
};

inline ValidationReport validate_trajectory(const TabularMdp& mdp, const Trajectory& traj) {
    ValidationReport rep;
    rep.steps.resize(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const Step& st = traj.steps[i];
        StepCheck& c = rep.steps[i];
        if (st.state >= mdp.num_states()) {
            c.state_in_range = c.admissible = c.successor_consistent = false;
        } else if (auto k = mdp.find_slot(st.state, st.action); !k) {
            c.admissible = c.successor_consistent = false;
        } else if (i + 1 < traj.size() && mdp.slot_next(*k) != traj.steps[i + 1].state) {
            c.successor_consistent = false;
        }
        if (!c.ok() && !rep.first_failure) rep.first_failure = i;
    }
    return rep;
}

}  // namespace eirl
