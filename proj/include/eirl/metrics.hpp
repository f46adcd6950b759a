#pragma once

// Evaluation metrics: expertise distance, preference similarity, policy regret, and Pearson
// correlation with a permutation p-value.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eirl/errors.hpp"
#include "eirl/mdp.hpp"
#include "eirl/seeding.hpp"
#include "eirl/soft_solver.hpp"

namespace eirl {

inline double expertise_distance(double beta_star, double beta_hat) { return std::abs(beta_star - beta_hat); }

enum class SimilarityForm {
    cosine,
    /// 1 - a.b / (|a|^2 |b|^2). Kept only for auditing old result tables; it is not a similarity.
    one_minus_squared_norm,
};

inline double preference_similarity(std::span<const double> theta_star, std::span<const double> theta_hat,
                                    SimilarityForm form = SimilarityForm::cosine) {
    if (theta_star.size() != theta_hat.size())
        throw ConfigError("similarity of vectors with different dimensions");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < theta_star.size(); ++i) {
        ab += theta_star[i] * theta_hat[i];
        aa += theta_star[i] * theta_star[i];
        bb += theta_hat[i] * theta_hat[i];
    }
    if (aa == 0.0 || bb == 0.0) throw DomainError("similarity is undefined for a zero vector");
    if (form == SimilarityForm::one_minus_squared_norm) return 1.0 - ab / (aa * bb);
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

/// Mean absolute gap between two value tables, normalized by max_s |V*(s)|.
inline double regret_from_values(std::span<const double> v_star, std::span<const double> v_hat) {
    if (v_star.size() != v_hat.size() || v_star.empty()) throw ConfigError("value tables of different sizes");
    double norm = 0.0;
    for (double x : v_star) norm = std::max(norm, std::abs(x));
    double sum = 0.0;
    for (std::size_t s = 0; s < v_star.size(); ++s) sum += std::abs(v_star[s] - v_hat[s]);
    if (norm == 0.0) {
        if (sum == 0.0) return 0.0;
        throw NumericError("regret normalizer is zero (true value function vanishes everywhere)");
    }
    return sum / static_cast<double>(v_star.size()) / norm;
}

/// Regret of acting on theta_hat when the demonstrator values theta_star. Both value functions
/// use the true beta_star.
inline double policy_regret(const TabularMdp& mdp, const RewardWeights& theta_star, const ExpertiseLevel& beta_star,
                            const RewardWeights& theta_hat, const SolverConfig& solver = {}) {
    const auto v_star = soft_value_iteration(mdp, theta_star, beta_star, solver);
    const auto v_hat = soft_value_iteration(mdp, theta_hat, beta_star, solver);
    return regret_from_values(v_star.v, v_hat.v);
}

/// Same, reusing an already solved true value function.
inline double policy_regret(const TabularMdp& mdp, const SoftSolution& truth, const RewardWeights& theta_hat,
                            const SolverConfig& solver = {}) {
    SolverConfig cfg = solver;
    cfg.layout = truth.layout;
    const auto v_hat = soft_value_iteration(mdp, theta_hat, ExpertiseLevel(truth.beta), cfg);
    return regret_from_values(truth.v, v_hat.v);
}

struct Correlation {
    double rho = 0.0;
    double p_value = 1.0;
};

inline double pearson_rho(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw DomainError("pearson: sequences of different lengths");
    if (xs.size() < 3) throw DomainError("pearson: at least 3 observations required");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson: correlation undefined for a constant sequence");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Sample correlation and a two-sided permutation p-value, (#{|rho_perm| >= |rho|} + 1) / (permutations + 1).
inline Correlation pearson(std::span<const double> xs, std::span<const double> ys, std::size_t permutations = 10000,
                           Seed seed = 0) {
    Correlation c;
    c.rho = pearson_rho(xs, ys);
    if (permutations == 0) return c;

    // Centre once; permuting ys only reorders the cross products.
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    std::vector<double> dx(xs.size()), dy(ys.size());
    double sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        dx[i] = xs[i] - mx;
        dy[i] = ys[i] - my;
        sxx += dx[i] * dx[i];
        syy += dy[i] * dy[i];
    }
    const double denom = std::sqrt(sxx * syy);
    // Guard against rounding making an identical permutation look slightly weaker.
    const double threshold = std::abs(c.rho) * (1.0 - 1e-12);
    std::mt19937_64 rng(seed);
    std::size_t extreme = 0;
    for (std::size_t p = 0; p < permutations; ++p) {
        std::shuffle(dy.begin(), dy.end(), rng);
        double sxy = 0.0;
        for (std::size_t i = 0; i < dx.size(); ++i) sxy += dx[i] * dy[i];
        if (std::abs(sxy / denom) >= threshold) ++extreme;
    }
    c.p_value = static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1);
    return c;
}

}  // namespace eirl
