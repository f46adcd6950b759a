#pragma once

#include "eirl/environments.hpp"
#include "eirl/mdp.hpp"

namespace fixture {

/// One non-terminal state with `actions` zero-feature self-loops.
inline eirl::TabularMdp self_loops(std::size_t actions, double gamma) {
    eirl::TabularMdp::Builder b(1, 1, gamma);
    for (eirl::ActionId a = 0; a < actions; ++a) b.add_action(0, a, 0, {0.0});
    return b.build();
}

/// s0 --a--> s1 (terminal) with feature 1, s0 --b--> s1 with feature 0.
inline eirl::TabularMdp two_state_chain(double gamma = 0.9) {
    eirl::TabularMdp::Builder b(2, 1, gamma);
    b.add_action(0, 0, 1, {1.0}).add_action(0, 1, 1, {0.0});
    b.add_action(1, 0, 1, {0.0}).set_terminal(1);
    return b.build();
}

inline eirl::ZoneGridEnvironment empty_grid(int w, int h, eirl::Cell goal) {
    eirl::ZoneGridEnvironment env;
    env.width = w;
    env.height = h;
    env.goal = goal;
    return env;
}

}  // namespace fixture
