#pragma once

#include <cstdint>
#include <initializer_list>

namespace eirl {

using Seed = std::uint64_t;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for stream `index` under `parent`. Siblings never collide for distinct indices,
/// so adding streams never perturbs existing ones.
inline constexpr Seed derive_seed(Seed parent, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(parent) ^ (index * 0xd1342543de82ef95ULL + 1));
}

inline constexpr Seed derive_seed(Seed parent, std::initializer_list<std::uint64_t> path) noexcept {
    Seed s = parent;
    for (auto i : path) s = derive_seed(s, i);
    return s;
}

}  // namespace eirl
