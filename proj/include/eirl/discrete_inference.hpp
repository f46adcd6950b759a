#pragma once

// Bayesian filter over a finite set of (theta, beta) hypotheses. Beliefs are kept in log space
// and renormalized with log-sum-exp after every update.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "eirl/errors.hpp"
#include "eirl/mdp.hpp"
#include "eirl/seeding.hpp"
#include "eirl/soft_solver.hpp"

namespace eirl {

/// Theta x Beta, enumerated theta-major: pair i = (thetas[i / |B|], betas[i % |B|]).
struct HypothesisSet {
    std::vector<RewardWeights> thetas;
    std::vector<double> betas;
    std::optional<Seed> seed;
    std::optional<std::size_t> sampled_k;

    std::size_t size() const noexcept { return thetas.size() * betas.size(); }
    std::size_t dim() const noexcept { return thetas.empty() ? 0 : thetas.front().dim(); }
    std::size_t theta_index(std::size_t pair) const noexcept { return pair / betas.size(); }
    std::size_t beta_index(std::size_t pair) const noexcept { return pair % betas.size(); }
    const RewardWeights& theta_of(std::size_t pair) const { return thetas.at(theta_index(pair)); }
    double beta_of(std::size_t pair) const { return betas.at(beta_index(pair)); }

    void validate() const {
        if (thetas.empty() || betas.empty()) throw ConfigError("hypothesis set has an empty axis");
        for (const auto& t : thetas)
            if (t.dim() != thetas.front().dim()) throw ConfigError("hypothesis thetas differ in dimension");
        for (double b : betas) ExpertiseLevel{b};
    }
};

/// The dim-fold Cartesian product of `component_values` without the zero vector, each member
/// scaled to unit l1 norm. Normalization creates value duplicates (e.g. [0.3, 0] and [0.5, 0]);
/// they are kept unless `dedupe` is set.
inline std::vector<RewardWeights> enumerate_preferences(const std::vector<double>& component_values, std::size_t dim,
                                                        bool dedupe = false) {
    if (component_values.empty() || dim == 0) throw ConfigError("preference grid needs values and a dimension");
    if (std::none_of(component_values.begin(), component_values.end(), [](double v) { return v > 0.0; }))
        throw ConfigError("preference grid needs at least one positive component value");
    for (double v : component_values)
        if (v < 0.0) throw ConfigError("preference component values must be non-negative");

    std::vector<RewardWeights> out;
    std::vector<std::size_t> digit(dim, 0);
    const std::size_t base = component_values.size();
    while (true) {
        std::vector<double> v(dim);
        double l1 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            v[i] = component_values[digit[i]];
            l1 += v[i];
        }
        if (l1 > 0.0) {
            for (double& x : v) x /= l1;
            const bool dup = dedupe && std::any_of(out.begin(), out.end(), [&v](const RewardWeights& w) {
                                 for (std::size_t i = 0; i < v.size(); ++i)
                                     if (std::abs(w[i] - v[i]) > 1e-12) return false;
                                 return true;
                             });
            if (!dup) out.emplace_back(std::move(v));
        }
        std::size_t i = dim;
        while (i > 0 && ++digit[i - 1] == base) digit[--i] = 0;
        if (i == 0) break;
    }
    return out;
}

/// k distinct indices of [0, n), uniformly without replacement, in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Seed seed) {
    if (k > n) throw DomainError("cannot sample " + std::to_string(k) + " of " + std::to_string(n) + " items");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    return idx;
}

struct HypothesisSetSpec {
    std::vector<double> component_values{0.0, 0.3, 0.5, 0.7, 1.0};
    std::size_t dim = 5;
    std::vector<double> betas{0.01, 0.09, 0.5, 1.0, 5.0, 10.0};
    std::optional<std::size_t> sample_k;
    Seed seed = 0;
    bool dedupe = false;
};

inline HypothesisSet build_hypothesis_set(const HypothesisSetSpec& spec) {
    HypothesisSet hs;
    auto all = enumerate_preferences(spec.component_values, spec.dim, spec.dedupe);
    if (spec.sample_k) {
        for (auto i : sample_without_replacement(all.size(), *spec.sample_k, spec.seed)) hs.thetas.push_back(all[i]);
        hs.seed = spec.seed;
        hs.sampled_k = spec.sample_k;
    } else {
        hs.thetas = std::move(all);
    }
    hs.betas = spec.betas;
    hs.validate();
    return hs;
}

/// Collapses the theta axis to a single vector.
inline HypothesisSet restrict_to_theta(const HypothesisSet& hs, const RewardWeights& theta) {
    HypothesisSet out = hs;
    out.thetas = {theta};
    out.validate();
    return out;
}

/// Collapses the beta axis to a single value.
inline HypothesisSet restrict_to_beta(const HypothesisSet& hs, double beta) {
    HypothesisSet out = hs;
    out.betas = {beta};
    out.validate();
    return out;
}

struct BeliefOptions {
    SolverConfig solver;
    /// Worker threads used when solving the per-hypothesis MDPs.
    unsigned threads = 1;
};

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

inline std::uint64_t hypothesis_key(const RewardWeights& theta, double beta) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) { h = (h ^ v) * 1099511628211ULL; };
    for (double t : theta.values()) mix(std::bit_cast<std::uint64_t>(t));
    mix(std::bit_cast<std::uint64_t>(beta));
    return h;
}

/// Lazily solved soft-VI tables, one per hypothesis, shared by every belief derived from the
/// same initial belief.
struct SolutionCache {
    std::mutex mutex;
    std::uint64_t mdp_fingerprint = 0;
    std::vector<std::shared_ptr<const SoftSolution>> solutions;
    std::vector<std::uint64_t> keys;
};

}  // namespace detail

class HypothesisBelief {
public:
    HypothesisBelief(std::shared_ptr<const HypothesisSet> hs, BeliefOptions opt)
        : set_(std::move(hs)), opt_(std::move(opt)), cache_(std::make_shared<detail::SolutionCache>()) {
        set_->validate();
        log_b_.assign(set_->size(), -std::log(static_cast<double>(set_->size())));
    }

    const HypothesisSet& hypotheses() const noexcept { return *set_; }
    std::size_t size() const noexcept { return log_b_.size(); }
    std::span<const double> log_belief() const noexcept { return log_b_; }
    double log_belief(std::size_t i) const { return log_b_.at(i); }

    std::vector<double> belief() const {
        std::vector<double> b(log_b_.size());
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::exp(log_b_[i]);
        return b;
    }

    /// log sum_i b_i; zero for a normalized belief.
    double log_mass() const { return detail::log_sum_exp(log_b_); }

    std::size_t map_index() const {
        return static_cast<std::size_t>(std::max_element(log_b_.begin(), log_b_.end()) - log_b_.begin());
    }

    /// Solves every hypothesis on `mdp` that is not cached yet.
    void ensure_solutions(const TabularMdp& mdp) const {
        std::lock_guard lock(cache_->mutex);
        auto& c = *cache_;
        if (c.solutions.empty() || c.mdp_fingerprint != mdp.fingerprint()) {
            c.solutions.assign(size(), nullptr);
            c.keys.assign(size(), 0);
            c.mdp_fingerprint = mdp.fingerprint();
        }
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < size(); ++i)
            if (!c.solutions[i]) todo.push_back(i);
        if (todo.empty()) return;

        SolverConfig cfg = opt_.solver;
        cfg.layout = make_layout(mdp);
        auto solve = [&](std::size_t i) {
            const auto& theta = set_->theta_of(i);
            const double beta = set_->beta_of(i);
            c.solutions[i] = std::make_shared<const SoftSolution>(soft_value_iteration(mdp, theta, ExpertiseLevel(beta), cfg));
            c.keys[i] = detail::hypothesis_key(theta, beta);
        };
        const unsigned workers = std::max(1u, std::min<unsigned>(opt_.threads, static_cast<unsigned>(todo.size())));
        if (workers == 1) {
            for (auto i : todo) solve(i);
            return;
        }
        std::vector<std::jthread> pool;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t j = w; j < todo.size(); j += workers) {
                    try {
                        solve(todo[j]);
                    } catch (...) {
                        std::lock_guard g(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        pool.clear();
        if (failure) std::rethrow_exception(failure);
    }

    const SoftSolution& solution(std::size_t i, const TabularMdp& mdp) const {
        ensure_solutions(mdp);
        return cached_solution(i);
    }

    /// Solution of hypothesis i; ensure_solutions must have run first.
    const SoftSolution& cached_solution(std::size_t i) const {
        const auto& c = *cache_;
        if (i >= c.solutions.size() || !c.solutions[i])
            throw ConfigError("hypothesis " + std::to_string(i) + " has not been solved yet");
        if (c.keys[i] != detail::hypothesis_key(set_->theta_of(i), set_->beta_of(i)))
            throw NumericError("solution cache entry " + std::to_string(i) + " does not match its hypothesis");
        return *c.solutions[i];
    }

    /// Adds per-hypothesis log-likelihood increments and renormalizes. Returns a new belief.
    HypothesisBelief updated(const std::vector<double>& increments) const {
        if (increments.size() != size()) throw ConfigError("one increment per hypothesis required");
        HypothesisBelief out = *this;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < size(); ++i) {
            if (std::isnan(increments[i])) throw NumericError("NaN log-likelihood for hypothesis " + std::to_string(i));
            out.log_b_[i] += increments[i];
            if (log_b_[i] > -std::numeric_limits<double>::infinity()) best = std::max(best, increments[i]);
        }
        const double z = detail::log_sum_exp(out.log_b_);
        if (!std::isfinite(best) || !std::isfinite(z))
            throw DegenerateEvidenceError("every hypothesis assigns zero probability to the evidence");
        for (double& x : out.log_b_) x -= z;
        return out;
    }

    const BeliefOptions& options() const noexcept { return opt_; }

private:
    std::shared_ptr<const HypothesisSet> set_;
    BeliefOptions opt_;
    std::shared_ptr<detail::SolutionCache> cache_;
    std::vector<double> log_b_;
};

/// Uniform prior over the hypothesis set.
inline HypothesisBelief init_belief(const HypothesisSet& hs, BeliefOptions opt = {}) {
    return HypothesisBelief(std::make_shared<const HypothesisSet>(hs), std::move(opt));
}

inline HypothesisBelief update_belief_trajectory(const HypothesisBelief& bel, const TabularMdp& mdp,
                                                 const Trajectory& traj) {
    bel.ensure_solutions(mdp);
    std::vector<double> inc(bel.size());
    for (std::size_t i = 0; i < bel.size(); ++i) inc[i] = trajectory_log_likelihood(bel.cached_solution(i), traj);
    return bel.updated(inc);
}

inline HypothesisBelief update_belief_action(const HypothesisBelief& bel, const TabularMdp& mdp, StateId s, ActionId a) {
    bel.ensure_solutions(mdp);
    std::vector<double> inc(bel.size());
    for (std::size_t i = 0; i < bel.size(); ++i) inc[i] = log_policy(bel.cached_solution(i), s, a);
    return bel.updated(inc);
}

/// One update with the whole episode set (equivalent to one update per trajectory).
inline HypothesisBelief update_belief_episodes(const HypothesisBelief& bel, const TabularMdp& mdp,
                                               const EpisodeSet& demos) {
    bel.ensure_solutions(mdp);
    const auto counts = count_slots(mdp, demos);
    std::vector<double> inc(bel.size());
    for (std::size_t i = 0; i < bel.size(); ++i) inc[i] = counts_log_likelihood(bel.cached_solution(i), counts);
    return bel.updated(inc);
}

inline std::vector<double> theta_marginal(const HypothesisBelief& bel) {
    const auto& hs = bel.hypotheses();
    std::vector<double> m(hs.thetas.size(), 0.0);
    const auto b = bel.belief();
    for (std::size_t i = 0; i < b.size(); ++i) m[hs.theta_index(i)] += b[i];
    return m;
}

inline std::vector<double> beta_marginal(const HypothesisBelief& bel) {
    const auto& hs = bel.hypotheses();
    std::vector<double> m(hs.betas.size(), 0.0);
    const auto b = bel.belief();
    for (std::size_t i = 0; i < b.size(); ++i) m[hs.beta_index(i)] += b[i];
    return m;
}

struct PointEstimate {
    std::vector<double> theta;
    double beta = 0.0;
};

/// Posterior means of theta and beta under the marginals.
inline PointEstimate point_estimates(const HypothesisBelief& bel) {
    const auto& hs = bel.hypotheses();
    PointEstimate e;
    e.theta.assign(hs.dim(), 0.0);
    const auto pt = theta_marginal(bel);
    for (std::size_t j = 0; j < pt.size(); ++j)
        for (std::size_t d = 0; d < e.theta.size(); ++d) e.theta[d] += pt[j] * hs.thetas[j][d];
    const auto pb = beta_marginal(bel);
    for (std::size_t j = 0; j < pb.size(); ++j) e.beta += pb[j] * hs.betas[j];
    return e;
}

// --- persistence ----------------------------------------------------------------------------

inline nlohmann::json to_json(const HypothesisSet& hs) {
    auto thetas = nlohmann::json::array();
    for (const auto& t : hs.thetas) thetas.push_back(t.vector());
    nlohmann::json j{{"thetas", thetas}, {"betas", hs.betas}};
    if (hs.seed) j["seed"] = *hs.seed;
    if (hs.sampled_k) j["sampled_k"] = *hs.sampled_k;
    return j;
}

inline HypothesisSet hypothesis_set_from_json(const nlohmann::json& j) {
    HypothesisSet hs;
    try {
        for (const auto& t : j.at("thetas")) hs.thetas.emplace_back(t.get<std::vector<double>>());
        hs.betas = j.at("betas").get<std::vector<double>>();
        if (j.contains("seed")) hs.seed = j["seed"].get<Seed>();
        if (j.contains("sampled_k")) hs.sampled_k = j["sampled_k"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("hypothesis set: ") + e.what());
    } catch (const DomainError& e) {
        throw ParseError(std::string("hypothesis set thetas: ") + e.what());
    }
    hs.validate();
    return hs;
}

/// Columns theta_0..theta_{d-1}, beta, belief.
inline void write_belief_csv(std::ostream& out, const HypothesisBelief& bel) {
    const auto& hs = bel.hypotheses();
    for (std::size_t d = 0; d < hs.dim(); ++d) out << "theta_" << d << ',';
    out << "beta,belief\n";
    out << std::setprecision(17);
    const auto b = bel.belief();
    for (std::size_t i = 0; i < bel.size(); ++i) {
        for (double t : hs.theta_of(i).values()) out << t << ',';
        out << hs.beta_of(i) << ',' << b[i] << '\n';
    }
}

}  // namespace eirl
