#pragma once

// Independent reference computations used by the tests. None of these call into the solver
// or inference code they check.

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <vector>

#include "eirl/environments.hpp"
#include "eirl/mdp.hpp"

namespace oracle {

/// Plain Bellman value iteration with a hard max; rewards recomputed per transition.
inline std::vector<double> hard_value_iteration(const eirl::TabularMdp& mdp, const eirl::RewardWeights& theta,
                                                double tol = 1e-12, int max_sweeps = 200000) {
    std::vector<double> v(mdp.num_states(), 0.0), next(v.size());
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double delta = 0.0;
        for (eirl::StateId s = 0; s < mdp.num_states(); ++s) {
            if (mdp.is_terminal(s)) {
                next[s] = 0.0;
                continue;
            }
            double best = -INFINITY;
            for (auto a : mdp.actions(s)) {
                const auto s2 = mdp.transition(s, a);
                const auto& f = mdp.features(s, a);
                double r = mdp.slot_bias(*mdp.find_slot(s, a));
                for (std::size_t i = 0; i < f.size(); ++i) r += theta[i] * f[i];
                best = std::max(best, r + mdp.discount() * v[s2]);
            }
            next[s] = best;
            delta = std::max(delta, std::abs(next[s] - v[s]));
        }
        v.swap(next);
        if (delta < tol) break;
    }
    return v;
}

/// Cells from which the goal can be reached, by BFS over the raw grid (obstacles block, moves
/// off the grid are impossible).
inline std::set<std::pair<int, int>> cells_reaching_goal(const eirl::ZoneGridEnvironment& env) {
    auto blocked = [&](int x, int y) {
        for (const auto& z : env.zones)
            if (z.kind == eirl::ZoneKind::obstacle && x >= z.rect.x && x < z.rect.x + z.rect.w && y >= z.rect.y &&
                y < z.rect.y + z.rect.h)
                return true;
        return false;
    };
    std::set<std::pair<int, int>> seen{{env.goal.x, env.goal.y}};
    std::deque<std::pair<int, int>> q{{env.goal.x, env.goal.y}};
    const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
    while (!q.empty()) {
        auto [x, y] = q.front();
        q.pop_front();
        for (int k = 0; k < 4; ++k) {
            const int nx = x + dx[k], ny = y + dy[k];
            if (nx < 0 || ny < 0 || nx >= env.width || ny >= env.height || blocked(nx, ny)) continue;
            if (seen.insert({nx, ny}).second) q.push_back({nx, ny});
        }
    }
    return seen;
}

inline std::size_t free_cells(const eirl::ZoneGridEnvironment& env) {
    std::size_t n = 0;
    for (int y = 0; y < env.height; ++y)
        for (int x = 0; x < env.width; ++x) {
            bool obstacle = false;
            for (const auto& z : env.zones)
                obstacle |= z.kind == eirl::ZoneKind::obstacle && x >= z.rect.x && x < z.rect.x + z.rect.w &&
                            y >= z.rect.y && y < z.rect.y + z.rect.h;
            n += !obstacle;
        }
    return n;
}

/// Stationary distribution of a row-stochastic matrix by power iteration.
inline std::vector<double> stationary(const std::vector<std::vector<double>>& p, int iterations = 200000) {
    const std::size_t n = p.size();
    std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
    for (int it = 0; it < iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * p[i][j];
        double diff = 0.0;
        for (std::size_t j = 0; j < n; ++j) diff += std::abs(next[j] - pi[j]);
        pi.swap(next);
        if (diff < 1e-15) break;
    }
    return pi;
}

}  // namespace oracle
