#pragma once

// MAP / posterior-mean estimation of (theta, beta) with a Metropolis grid walk. The chain moves
// between neighbouring points of a lattice with spacing theta_step (theta axes) and beta_step
// (beta axis), re-solving the soft MDP at every proposal, warm-started from the current point.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "eirl/errors.hpp"
#include "eirl/mdp.hpp"
#include "eirl/seeding.hpp"
#include "eirl/soft_solver.hpp"

namespace eirl {

struct McmcConfig {
    double theta_step = 0.05;
    double beta_step = 0.25;
    double theta_max = 1.0;
    double beta_min = 0.01;
    double beta_max = 10.0;
    std::size_t max_iterations = 1000;
    double burn_in_fraction = 0.2;
    /// Upper bound on the l1 norm of theta. Unset means the feature dimension (inactive on the unit box).
    std::optional<double> sparsity_bound;
    Seed seed = 0;
    std::size_t warm_start_sweep_cap = 50;
    /// Move every coordinate by one step at once instead of a single coordinate.
    bool perturb_all_coordinates = false;
    std::size_t max_redraws = 100;

    double sparsity(std::size_t dim) const { return sparsity_bound.value_or(static_cast<double>(dim)); }

    void validate() const {
        if (!(theta_step > 0.0) || !(beta_step > 0.0)) throw ConfigError("mcmc step sizes must be positive");
        if (!(beta_min > 0.0) || !(beta_max > beta_min)) throw ConfigError("mcmc beta range must satisfy 0 < min < max");
        if (!(theta_max > 0.0)) throw ConfigError("mcmc theta_max must be positive");
        if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
            throw ConfigError("burn_in_fraction must lie in [0, 1)");
        if (sparsity_bound && !(*sparsity_bound > 0.0)) throw ConfigError("sparsity bound must be positive");
    }
};

/// P(theta, beta): uniform on [0, theta_max]^d times a uniform or truncated-normal beta density.
struct PriorSpec {
    enum class BetaFamily { uniform, truncated_normal };
    BetaFamily beta_family = BetaFamily::uniform;
    double beta_mean = 5.005;
    double beta_std = 1.5;
    double theta_max = 1.0;
    double beta_min = 0.01;
    double beta_max = 10.0;

    static PriorSpec uniform_over(const McmcConfig& c) {
        return {BetaFamily::uniform, 5.005, 1.5, c.theta_max, c.beta_min, c.beta_max};
    }
    static PriorSpec truncated_normal_over(const McmcConfig& c, double mean, double std) {
        return {BetaFamily::truncated_normal, mean, std, c.theta_max, c.beta_min, c.beta_max};
    }

    double log_theta_density(std::span<const double> theta) const {
        for (double t : theta)
            if (t < 0.0 || t > theta_max) return -std::numeric_limits<double>::infinity();
        return -static_cast<double>(theta.size()) * std::log(theta_max);
    }

    double log_beta_density(double beta) const {
        if (beta < beta_min || beta > beta_max) return -std::numeric_limits<double>::infinity();
        if (beta_family == BetaFamily::uniform) return -std::log(beta_max - beta_min);
        auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
        const double z = (beta - beta_mean) / beta_std;
        const double mass = cdf((beta_max - beta_mean) / beta_std) - cdf((beta_min - beta_mean) / beta_std);
        return -0.5 * z * z - std::log(beta_std * std::sqrt(2.0 * std::numbers::pi) * mass);
    }

    double log_density(std::span<const double> theta, double beta) const {
        const double lt = log_theta_density(theta);
        if (!std::isfinite(lt)) return lt;
        return lt + log_beta_density(beta);
    }
};

/// A lattice point: theta coordinates followed by beta.
struct ChainPoint {
    std::vector<double> theta;
    double beta = 1.0;
    friend bool operator==(const ChainPoint&, const ChainPoint&) = default;
};

/// Neighbour proposals on a box-bounded lattice. Coordinate i is picked with probability
/// weights[i]; it moves by +-step[i] and is clamped to [lo[i], hi[i]]. Coordinates in
/// [l1_begin, l1_end) must keep their sum <= l1_bound; violating proposals are redrawn and,
/// after max_redraws failures, the current point is proposed again.
struct GridWalkKernel {
    std::vector<double> lo, hi, step, weights;
    std::size_t l1_begin = 0, l1_end = 0;
    double l1_bound = std::numeric_limits<double>::infinity();
    bool all_coordinates = false;
    std::size_t max_redraws = 100;

    std::size_t size() const noexcept { return step.size(); }

    bool feasible(const std::vector<double>& x) const {
        double l1 = 0.0;
        for (std::size_t i = l1_begin; i < l1_end; ++i) l1 += x[i];
        return l1 <= l1_bound * (1.0 + 1e-12);
    }

    /// The proposal and the coordinate that moved (size() when all moved or on a self-proposal).
    template <class Rng>
    std::pair<std::vector<double>, std::size_t> propose(const std::vector<double>& x, Rng& rng) const {
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        std::bernoulli_distribution up(0.5);
        for (std::size_t attempt = 0; attempt <= max_redraws; ++attempt) {
            std::vector<double> y = x;
            std::size_t moved = size();
            if (all_coordinates) {
                for (std::size_t i = 0; i < size(); ++i)
                    y[i] = std::clamp(y[i] + (up(rng) ? step[i] : -step[i]), lo[i], hi[i]);
            } else {
                moved = pick(rng);
                y[moved] = std::clamp(y[moved] + (up(rng) ? step[moved] : -step[moved]), lo[moved], hi[moved]);
            }
            if (feasible(y)) return {std::move(y), moved};
        }
        return {x, size()};
    }
};

inline GridWalkKernel make_kernel(const McmcConfig& cfg, std::size_t dim) {
    GridWalkKernel k;
    for (std::size_t i = 0; i < dim; ++i) {
        k.lo.push_back(0.0);
        k.hi.push_back(cfg.theta_max);
        k.step.push_back(cfg.theta_step);
        k.weights.push_back(0.5 / static_cast<double>(dim));
    }
    k.lo.push_back(cfg.beta_min);
    k.hi.push_back(cfg.beta_max);
    k.step.push_back(cfg.beta_step);
    k.weights.push_back(0.5);
    k.l1_begin = 0;
    k.l1_end = dim;
    k.l1_bound = cfg.sparsity(dim);
    k.all_coordinates = cfg.perturb_all_coordinates;
    k.max_redraws = cfg.max_redraws;
    return k;
}

inline std::vector<double> flatten(const ChainPoint& p) {
    auto x = p.theta;
    x.push_back(p.beta);
    return x;
}

inline ChainPoint unflatten(const std::vector<double>& x) {
    return {std::vector<double>(x.begin(), x.end() - 1), x.back()};
}

struct TraceEntry {
    std::size_t iteration = 0;
    std::vector<double> point;
    double log_posterior = 0.0;
    bool accepted = false;
};

/// Outcome of a generic grid walk: one entry per iteration (the current point after the
/// accept/reject decision, so rejections repeat the previous point).
struct WalkResult {
    std::vector<double> initial;
    double initial_log_posterior = 0.0;
    std::vector<TraceEntry> trace;
    std::vector<double> best;
    double best_log_posterior = -std::numeric_limits<double>::infinity();
    std::size_t accepted = 0;

    double acceptance_rate() const {
        return trace.empty() ? 0.0 : static_cast<double>(accepted) / static_cast<double>(trace.size());
    }
};

/// Metropolis rule: accept iff u < min(1, exp(delta)).
inline bool metropolis_accept(double current_log_post, double proposal_log_post, double u) {
    if (std::isnan(proposal_log_post) || proposal_log_post == -std::numeric_limits<double>::infinity()) return false;
    if (current_log_post == -std::numeric_limits<double>::infinity()) return true;
    const double delta = proposal_log_post - current_log_post;
    return u < (delta >= 0.0 ? 1.0 : std::exp(delta));
}

/// Runs `iterations` Metropolis steps. `evaluate(x, current_payload)` returns
/// {log posterior, payload}; the payload of the current point (e.g. its soft-VI solution) is
/// handed to the next evaluation as a warm start. `uniform()` supplies the acceptance variates.
template <class Payload, class Evaluate, class Rng, class Uniform>
WalkResult grid_walk(const GridWalkKernel& kernel, std::vector<double> x0, std::size_t iterations, Evaluate&& evaluate,
                     Rng& rng, Uniform&& uniform) {
    WalkResult out;
    out.initial = x0;
    auto [lp, payload] = evaluate(x0, Payload{});
    out.initial_log_posterior = lp;
    out.best = x0;
    out.best_log_posterior = lp;
    std::vector<double> x = std::move(x0);
    double current_lp = lp;
    Payload current_payload = std::move(payload);
    out.trace.reserve(iterations);
    for (std::size_t it = 1; it <= iterations; ++it) {
        auto [y, moved] = kernel.propose(x, rng);
        const double u = uniform();
        bool accepted;
        if (y == x) {
            accepted = true;  // self-proposal: delta is exactly zero
        } else {
            auto [cand_lp, cand_payload] = evaluate(y, current_payload);
            accepted = metropolis_accept(current_lp, cand_lp, u);
            if (accepted) {
                x = std::move(y);
                current_lp = cand_lp;
                current_payload = std::move(cand_payload);
            }
        }
        if (accepted) ++out.accepted;
        if (current_lp > out.best_log_posterior) {
            out.best = x;
            out.best_log_posterior = current_lp;
        }
        out.trace.push_back({it, x, current_lp, accepted});
    }
    return out;
}

/// Mean of the samples left after dropping the first floor(fraction * n).
inline std::vector<double> post_burn_in_mean(const std::vector<TraceEntry>& trace, double burn_in_fraction) {
    if (trace.empty()) throw DomainError("no samples to average");
    const auto skip = static_cast<std::size_t>(std::floor(burn_in_fraction * static_cast<double>(trace.size())));
    if (skip >= trace.size()) throw DomainError("burn-in consumes every sample");
    // Average offsets from the first kept sample so a chain that never moved returns it exactly.
    const auto& ref = trace[skip].point;
    std::vector<double> mean(ref.size(), 0.0);
    for (std::size_t i = skip + 1; i < trace.size(); ++i)
        for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += trace[i].point[d] - ref[d];
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] = ref[d] + mean[d] / static_cast<double>(trace.size() - skip);
    return mean;
}

// --- posterior over (theta, beta) for an MDP ---------------------------------------------------

struct PosteriorValue {
    double log_posterior = -std::numeric_limits<double>::infinity();
    std::shared_ptr<const SoftSolution> solution;  // null outside the prior support
};

struct SolveStats {
    std::size_t solves = 0;
    std::size_t warm_fallbacks = 0;
    std::size_t sweeps = 0;
};

/// ln P(demos | theta, beta) + ln P(theta, beta). When `warm` is given the solve starts from it,
/// capped at `warm_cap` sweeps; if that misses the tolerance the solve continues from the
/// partial iterate up to solver.max_sweeps.
inline PosteriorValue log_posterior(const TabularMdp& mdp, const SlotCounts& counts, const ChainPoint& p,
                                    const PriorSpec& prior, const SolverConfig& solver,
                                    std::shared_ptr<const SoftSolution> warm = nullptr, std::size_t warm_cap = 0,
                                    SolveStats* stats = nullptr) {
    PosteriorValue out;
    const double lp = prior.log_density(p.theta, p.beta);
    if (!std::isfinite(lp)) return out;
    const RewardWeights theta(p.theta);
    const ExpertiseLevel beta(p.beta);
    SolverConfig cfg = solver;
    std::shared_ptr<const SoftSolution> sol;
    if (warm && warm_cap > 0) {
        cfg.warm_start = warm;
        cfg.max_sweeps = std::min(warm_cap, solver.max_sweeps);
        auto first = std::make_shared<const SoftSolution>(soft_value_iteration(mdp, theta, beta, cfg));
        if (stats) stats->sweeps += first->iterations_used;
        if (!first->converged && solver.max_sweeps > cfg.max_sweeps) {
            if (stats) ++stats->warm_fallbacks;
            cfg.warm_start = first;
            cfg.max_sweeps = solver.max_sweeps - first->iterations_used;
            auto second = soft_value_iteration(mdp, theta, beta, cfg);
            if (stats) stats->sweeps += second.iterations_used;
            second.iterations_used += first->iterations_used;
            sol = std::make_shared<const SoftSolution>(std::move(second));
        } else {
            sol = std::move(first);
        }
    } else {
        sol = std::make_shared<const SoftSolution>(soft_value_iteration(mdp, theta, beta, cfg));
        if (stats) stats->sweeps += sol->iterations_used;
    }
    if (stats) ++stats->solves;
    out.log_posterior = counts_log_likelihood(*sol, counts) + lp;
    out.solution = std::move(sol);
    return out;
}

inline PosteriorValue log_posterior(const TabularMdp& mdp, const EpisodeSet& demos, const ChainPoint& p,
                                    const PriorSpec& prior, const SolverConfig& solver = {}) {
    return log_posterior(mdp, count_slots(mdp, demos), p, prior, solver);
}

struct ChainResult {
    WalkResult walk;
    std::size_t dim = 0;
    double burn_in_fraction = 0.2;
    SolveStats stats;

    ChainPoint initial() const { return unflatten(walk.initial); }
    ChainPoint best() const { return unflatten(walk.best); }
    std::size_t num_samples() const { return walk.trace.size(); }
    double acceptance_rate() const { return walk.acceptance_rate(); }
};

/// Posterior-mean estimate over post-burn-in samples.
inline ChainPoint point_estimate(const ChainResult& r) {
    return unflatten(post_burn_in_mean(r.walk.trace, r.burn_in_fraction));
}

/// Point estimate that falls back to the initial draw for a chain without iterations.
inline ChainPoint chain_estimate(const ChainResult& r) {
    return r.walk.trace.empty() ? r.initial() : point_estimate(r);
}

/// Uniform start inside the theta box (subject to the l1 bound) and beta ~ U(beta_min, beta_max).
template <class Rng>
ChainPoint random_start(const McmcConfig& cfg, std::size_t dim, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double bound = cfg.sparsity(dim);
    ChainPoint p;
    p.theta.assign(dim, 0.0);
    constexpr int kTries = 100000;
    for (int t = 0; t < kTries; ++t) {
        double l1 = 0.0;
        for (double& v : p.theta) l1 += (v = cfg.theta_max * unit(rng));
        if (l1 <= bound) break;
        if (t + 1 == kTries)
            for (double& v : p.theta) v *= bound / l1;
    }
    p.beta = cfg.beta_min + (cfg.beta_max - cfg.beta_min) * unit(rng);
    return p;
}

/// Full chain on an MDP posterior.
inline ChainResult run_chain(const TabularMdp& mdp, const EpisodeSet& demos, const PriorSpec& prior,
                             const McmcConfig& cfg, const SolverConfig& solver = {}) {
    cfg.validate();
    const auto counts = count_slots(mdp, demos);
    const std::size_t dim = mdp.feature_dim();
    std::mt19937_64 rng(cfg.seed);
    std::mt19937_64 accept_rng(derive_seed(cfg.seed, 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    ChainResult r;
    r.dim = dim;
    r.burn_in_fraction = cfg.burn_in_fraction;
    SolverConfig base = solver;
    base.layout = make_layout(mdp);
    const auto kernel = make_kernel(cfg, dim);
    auto start = flatten(random_start(cfg, dim, rng));
    using Payload = std::shared_ptr<const SoftSolution>;
    auto evaluate = [&](const std::vector<double>& x, const Payload& warm) {
        auto v = log_posterior(mdp, counts, unflatten(x), prior, base, warm, cfg.warm_start_sweep_cap, &r.stats);
        return std::pair<double, Payload>{v.log_posterior, std::move(v.solution)};
    };
    r.walk = grid_walk<Payload>(kernel, std::move(start), cfg.max_iterations, evaluate, rng,
                                [&] { return unit(accept_rng); });
    return r;
}

/// Columns iteration, theta_0..theta_{d-1}, beta, log_posterior, accepted. Row 0 is the start.
inline void write_trace_csv(std::ostream& out, const ChainResult& r) {
    for (std::size_t d = 0; d < r.dim; ++d) out << (d ? "," : "iteration,") << "theta_" << d;
    out << ",beta,log_posterior,accepted\n";
    out.precision(17);
    auto row = [&](std::size_t it, const std::vector<double>& x, double lp, bool acc) {
        out << it;
        for (double v : x) out << ',' << v;
        out << ',' << lp << ',' << (acc ? 1 : 0) << '\n';
    };
    row(0, r.walk.initial, r.walk.initial_log_posterior, true);
    for (const auto& e : r.walk.trace) row(e.iteration, e.point, e.log_posterior, e.accepted);
}

}  // namespace eirl
