#pragma once

// Zone gridworlds (random traversal-rule environments) and the heading-aware warehouse map,
// their feature maps, MDP construction and JSON persistence.

#include <array>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "eirl/errors.hpp"
#include "eirl/mdp.hpp"
#include "eirl/seeding.hpp"

namespace eirl {

/// Action ids shared by both environment kinds. North decreases y (origin top-left).
enum class Direction : ActionId { north = 0, south = 1, east = 2, west = 3 };
inline constexpr std::array<Direction, 4> kDirections{Direction::north, Direction::south, Direction::east,
                                                      Direction::west};

enum class Heading : int { horizontal = 0, vertical = 1 };

enum class ZoneKind { avoid, road, slow, high_traffic, obstacle, restricted };

struct Cell {
    int x = 0;
    int y = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

struct Rect {
    int x = 0, y = 0, w = 1, h = 1;
    bool contains(Cell c) const noexcept { return c.x >= x && c.x < x + w && c.y >= y && c.y < y + h; }
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct Zone {
    ZoneKind kind = ZoneKind::avoid;
    Rect rect;
    std::optional<Direction> direction;  // roads only
    friend bool operator==(const Zone&, const Zone&) = default;
};

inline constexpr int kMaxZonesPerKind = 4;

struct ZoneGridEnvironment {
    int width = 0;
    int height = 0;
    std::vector<Zone> zones;
    Cell goal;
    Seed seed = 0;
    friend bool operator==(const ZoneGridEnvironment&, const ZoneGridEnvironment&) = default;
};

struct WarehouseEnvironment {
    int width = 0;
    int height = 0;
    std::vector<Zone> zones;  // road (directed) and restricted rectangles
    std::vector<Cell> goals;
    Seed seed = 0;
    friend bool operator==(const WarehouseEnvironment&, const WarehouseEnvironment&) = default;
};

using AnyEnvironment = std::variant<ZoneGridEnvironment, WarehouseEnvironment>;

inline Cell step_cell(Cell c, Direction d) noexcept {
    switch (d) {
        case Direction::north: return {c.x, c.y - 1};
        case Direction::south: return {c.x, c.y + 1};
        case Direction::east: return {c.x + 1, c.y};
        case Direction::west: return {c.x - 1, c.y};
    }
    return c;
}

inline Heading axis_of(Direction d) noexcept {
    return (d == Direction::east || d == Direction::west) ? Heading::horizontal : Heading::vertical;
}

inline Direction opposite(Direction d) noexcept {
    switch (d) {
        case Direction::north: return Direction::south;
        case Direction::south: return Direction::north;
        case Direction::east: return Direction::west;
        case Direction::west: return Direction::east;
    }
    return d;
}

inline std::string_view to_string(ZoneKind k) {
    switch (k) {
        case ZoneKind::avoid: return "avoid";
        case ZoneKind::road: return "road";
        case ZoneKind::slow: return "slow";
        case ZoneKind::high_traffic: return "high_traffic";
        case ZoneKind::obstacle: return "obstacle";
        case ZoneKind::restricted: return "restricted";
    }
    return "?";
}

inline std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::north: return "north";
        case Direction::south: return "south";
        case Direction::east: return "east";
        case Direction::west: return "west";
    }
    return "?";
}

inline std::optional<ZoneKind> zone_kind_from(std::string_view s) {
    for (auto k : {ZoneKind::avoid, ZoneKind::road, ZoneKind::slow, ZoneKind::high_traffic, ZoneKind::obstacle,
                   ZoneKind::restricted})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

inline std::optional<Direction> direction_from(std::string_view s) {
    for (auto d : kDirections)
        if (to_string(d) == s) return d;
    return std::nullopt;
}

/// Per-cell zone membership, rasterized once from the rectangle list.
class ZoneRaster {
public:
    ZoneRaster(int width, int height, const std::vector<Zone>& zones)
        : width_(width), height_(height), cells_(static_cast<std::size_t>(width) * height) {
        for (const auto& z : zones)
            for (int y = z.rect.y; y < z.rect.y + z.rect.h; ++y)
                for (int x = z.rect.x; x < z.rect.x + z.rect.w; ++x) {
                    if (!in_bounds({x, y})) continue;
                    auto& c = cells_[index({x, y})];
                    switch (z.kind) {
                        case ZoneKind::avoid: c.avoid = true; break;
                        case ZoneKind::slow: c.slow = true; break;
                        case ZoneKind::high_traffic: c.high_traffic = true; break;
                        case ZoneKind::obstacle: c.obstacle = true; break;
                        case ZoneKind::restricted: c.restricted = true; break;
                        case ZoneKind::road:
                            // first listed road wins where roads overlap
                            if (!c.road) c.road = z.direction;
                            break;
                    }
                }
    }

    struct CellInfo {
        bool avoid = false, slow = false, high_traffic = false, obstacle = false, restricted = false;
        std::optional<Direction> road;
    };

    bool in_bounds(Cell c) const noexcept { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
    std::size_t index(Cell c) const noexcept { return static_cast<std::size_t>(c.y) * width_ + c.x; }
    const CellInfo& at(Cell c) const { return cells_.at(index(c)); }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

private:
    int width_, height_;
    std::vector<CellInfo> cells_;
};

/// Transition features for zone grids, in the order
/// [path cost, road direction, avoid crossing, slow-zone occupancy, high-traffic crossing].
class ZoneFeatureMap {
public:
    static constexpr std::size_t kDim = 5;

    explicit ZoneFeatureMap(const ZoneGridEnvironment& env) : raster_(env.width, env.height, env.zones) {}

    FeatureVector operator()(Cell from, Direction action, Cell to) const {
        FeatureVector f(kDim, 0.0);
        f[0] = -1.0;
        const auto& a = raster_.at(from);
        const auto& b = raster_.at(to);
        if (from != to && b.road) {
            if (*b.road == action)
                f[1] = 1.0;
            else if (*b.road == opposite(action))
                f[1] = -1.0;
        }
        if (a.avoid != b.avoid) f[2] = -1.0;
        if (b.slow) f[3] = -1.0;
        if (a.high_traffic != b.high_traffic) f[4] = -1.0;
        return f;
    }

    const ZoneRaster& raster() const noexcept { return raster_; }

private:
    ZoneRaster raster_;
};

inline ZoneFeatureMap zone_feature_map(const ZoneGridEnvironment& env) { return ZoneFeatureMap(env); }

/// Grid position of an MDP state; heading is only meaningful for warehouse maps.
struct GridState {
    Cell cell;
    Heading heading = Heading::horizontal;
    friend bool operator==(const GridState&, const GridState&) = default;
};

/// MDP together with the state <-> grid bookkeeping needed by simulators, ingestion and rollouts.
struct GridModel {
    TabularMdp mdp;
    int width = 0;
    int height = 0;
    bool has_heading = false;
    std::vector<GridState> states;
    std::vector<std::int64_t> lookup;  // (cell index * 2 + heading) -> state or -1

    std::optional<StateId> state_of(Cell c, Heading h = Heading::horizontal) const {
        if (c.x < 0 || c.y < 0 || c.x >= width || c.y >= height) return std::nullopt;
        const auto i = (static_cast<std::size_t>(c.y) * width + c.x) * 2 + (has_heading ? static_cast<int>(h) : 0);
        const auto s = lookup[i];
        if (s < 0) return std::nullopt;
        return static_cast<StateId>(s);
    }

    std::vector<StateId> non_terminal_states() const {
        std::vector<StateId> out;
        for (StateId s = 0; s < mdp.num_states(); ++s)
            if (!mdp.is_terminal(s)) out.push_back(s);
        return out;
    }
};

struct ZoneMdpOptions {
    double discount = 0.95;
    /// Constant reward for arriving at the goal, outside theta. Zero means path cost simply stops.
    double goal_bonus = 0.0;
};

/// States are the non-obstacle cells in row-major order; four actions everywhere; moves into
/// obstacles or off the grid leave the agent in place; the goal is absorbing.
inline GridModel build_zone_mdp(const ZoneGridEnvironment& env, const ZoneMdpOptions& opt = {}) {
    const ZoneFeatureMap phi(env);
    const auto& raster = phi.raster();
    GridModel m{{}, env.width, env.height, false, {}, {}};
    m.lookup.assign(static_cast<std::size_t>(env.width) * env.height * 2, -1);
    for (int y = 0; y < env.height; ++y)
        for (int x = 0; x < env.width; ++x)
            if (!raster.at({x, y}).obstacle) {
                m.lookup[(static_cast<std::size_t>(y) * env.width + x) * 2] = static_cast<std::int64_t>(m.states.size());
                m.states.push_back({{x, y}, Heading::horizontal});
            }
    const auto goal = m.state_of(env.goal);
    if (!goal) throw ConfigError("goal cell is an obstacle or out of bounds");

    TabularMdp::Builder b(m.states.size(), ZoneFeatureMap::kDim, opt.discount);
    for (StateId s = 0; s < m.states.size(); ++s) {
        const Cell c = m.states[s].cell;
        for (auto d : kDirections) {
            if (s == *goal) {
                b.add_action(s, static_cast<ActionId>(d), s, FeatureVector(ZoneFeatureMap::kDim, 0.0));
                continue;
            }
            Cell to = step_cell(c, d);
            if (!raster.in_bounds(to) || raster.at(to).obstacle) to = c;
            const StateId next = *m.state_of(to);
            const double bias = (next == *goal) ? opt.goal_bonus : 0.0;
            b.add_action(s, static_cast<ActionId>(d), next, phi(c, d, to), bias);
        }
    }
    b.set_terminal(*goal);
    m.mdp = b.build();
    return m;
}

/// Fraction of non-obstacle cells from which the goal can be reached with 4-neighbour moves.
inline double goal_reachable_fraction(const ZoneGridEnvironment& env) {
    const ZoneRaster raster(env.width, env.height, env.zones);
    if (!raster.in_bounds(env.goal) || raster.at(env.goal).obstacle) return 0.0;
    std::vector<char> seen(static_cast<std::size_t>(env.width) * env.height, 0);
    std::deque<Cell> queue{env.goal};
    seen[raster.index(env.goal)] = 1;
    std::size_t reached = 1;
    while (!queue.empty()) {
        const Cell c = queue.front();
        queue.pop_front();
        for (auto d : kDirections) {
            const Cell n = step_cell(c, d);
            if (!raster.in_bounds(n) || raster.at(n).obstacle || seen[raster.index(n)]) continue;
            seen[raster.index(n)] = 1;
            ++reached;
            queue.push_back(n);
        }
    }
    std::size_t free_cells = 0;
    for (int y = 0; y < env.height; ++y)
        for (int x = 0; x < env.width; ++x) free_cells += raster.at({x, y}).obstacle ? 0 : 1;
    return static_cast<double>(reached) / static_cast<double>(free_cells);
}

struct SizeRange {
    int min_width = 10, max_width = 10;
    int min_height = 10, max_height = 10;

    static SizeRange square(int lo, int hi) { return {lo, hi, lo, hi}; }
};

/// Validates a zone grid; throws ValidationError naming the offending field.
inline void validate(const ZoneGridEnvironment& env) {
    if (env.width < 1 || env.height < 1) throw ValidationError("width/height: must be positive");
    std::array<int, 6> per_kind{};
    for (std::size_t i = 0; i < env.zones.size(); ++i) {
        const auto& z = env.zones[i];
        const std::string path = "zones[" + std::to_string(i) + "]";
        if (z.kind == ZoneKind::restricted) throw ValidationError(path + ".kind: 'restricted' is a warehouse zone");
        if (z.rect.w < 1 || z.rect.h < 1 || z.rect.x < 0 || z.rect.y < 0 || z.rect.x + z.rect.w > env.width ||
            z.rect.y + z.rect.h > env.height)
            throw ValidationError(path + ".rect: rectangle out of bounds");
        if ((z.kind == ZoneKind::road) != z.direction.has_value())
            throw ValidationError(path + ".direction: roads need a direction, other zones must not have one");
        if (++per_kind[static_cast<std::size_t>(z.kind)] > kMaxZonesPerKind)
            throw ValidationError(path + ".kind: more than 4 zones of kind " + std::string(to_string(z.kind)));
    }
    const ZoneRaster raster(env.width, env.height, env.zones);
    if (!raster.in_bounds(env.goal)) throw ValidationError("goal: out of bounds");
    if (raster.at(env.goal).obstacle) throw ValidationError("goal: inside an obstacle");
}

inline void validate(const WarehouseEnvironment& env) {
    if (env.width < 1 || env.height < 1) throw ValidationError("width/height: must be positive");
    for (std::size_t i = 0; i < env.zones.size(); ++i) {
        const auto& z = env.zones[i];
        const std::string path = "zones[" + std::to_string(i) + "]";
        if (z.kind != ZoneKind::road && z.kind != ZoneKind::restricted)
            throw ValidationError(path + ".kind: warehouse maps only hold road and restricted zones");
        if (z.rect.w < 1 || z.rect.h < 1 || z.rect.x < 0 || z.rect.y < 0 || z.rect.x + z.rect.w > env.width ||
            z.rect.y + z.rect.h > env.height)
            throw ValidationError(path + ".rect: rectangle out of bounds");
        if ((z.kind == ZoneKind::road) != z.direction.has_value())
            throw ValidationError(path + ".direction: roads need a direction, other zones must not have one");
    }
    if (env.goals.empty()) throw ValidationError("goal: at least one goal cell required");
    for (std::size_t i = 0; i < env.goals.size(); ++i) {
        const auto g = env.goals[i];
        if (g.x < 0 || g.y < 0 || g.x >= env.width || g.y >= env.height)
            throw ValidationError("goal[" + std::to_string(i) + "]: out of bounds");
    }
}

/// Random zone grid: sampled size, up to four rectangles of each zone kind, goal on a free cell.
/// Candidates where some free cell cannot reach the goal are discarded and resampled.
inline ZoneGridEnvironment generate_environment(Seed seed, const SizeRange& size = {}) {
    if (size.min_width < 5 || size.min_height < 5 || size.max_width < size.min_width ||
        size.max_height < size.min_height)
        throw ConfigError("environment size bounds must be at least 5x5 and ordered");
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    constexpr int kAttempts = 200;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        ZoneGridEnvironment env;
        env.seed = seed;
        env.width = uniform(size.min_width, size.max_width);
        env.height = uniform(size.min_height, size.max_height);
        const int W = env.width, H = env.height;
        for (auto kind : {ZoneKind::avoid, ZoneKind::road, ZoneKind::slow, ZoneKind::high_traffic, ZoneKind::obstacle}) {
            const int count = uniform(0, kMaxZonesPerKind);
            for (int i = 0; i < count; ++i) {
                Zone z;
                z.kind = kind;
                if (kind == ZoneKind::road) {
                    const auto d = kDirections[static_cast<std::size_t>(uniform(0, 3))];
                    z.direction = d;
                    if (axis_of(d) == Heading::horizontal) {
                        z.rect.w = uniform(std::min(3, W), W);
                        z.rect.h = 1;
                    } else {
                        z.rect.w = 1;
                        z.rect.h = uniform(std::min(3, H), H);
                    }
                } else {
                    const int cap_w = std::max(1, kind == ZoneKind::obstacle ? W / 4 : W / 3);
                    const int cap_h = std::max(1, kind == ZoneKind::obstacle ? H / 4 : H / 3);
                    z.rect.w = uniform(1, cap_w);
                    z.rect.h = uniform(1, cap_h);
                }
                z.rect.x = uniform(0, W - z.rect.w);
                z.rect.y = uniform(0, H - z.rect.h);
                env.zones.push_back(z);
            }
        }
        const ZoneRaster raster(W, H, env.zones);
        std::vector<Cell> free;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (!raster.at({x, y}).obstacle) free.push_back({x, y});
        if (free.size() < 2) continue;
        env.goal = free[static_cast<std::size_t>(uniform(0, static_cast<int>(free.size()) - 1))];
        if (goal_reachable_fraction(env) < 1.0) continue;
        return env;
    }
    throw GenerationError("could not generate a connected environment after " + std::to_string(kAttempts) +
                          " attempts (seed " + std::to_string(seed) + ")");
}

struct WarehouseOptions {
    double discount = 0.95;
    /// true: leaving the road network costs the same as driving against a road.
    /// false: off-road moves are neutral on the road feature.
    bool penalize_off_road = true;
};

/// Feature dimension of warehouse maps: [path cost (turns cost double), restricted, road use].
inline constexpr std::size_t kWarehouseFeatureDim = 3;

inline FeatureVector warehouse_features(const ZoneRaster& raster, Heading heading, Direction action, Cell to,
                                        bool penalize_off_road) {
    FeatureVector f(kWarehouseFeatureDim, 0.0);
    f[0] = axis_of(action) == heading ? -1.0 : -2.0;
    const auto& info = raster.at(to);
    if (info.restricted) f[1] = -1.0;
    if (info.road)
        f[2] = (*info.road == action) ? 1.0 : -1.0;
    else
        f[2] = penalize_off_road ? -1.0 : 0.0;
    return f;
}

/// State = (cell, heading), indexed (y * width + x) * 2 + heading. A move along the other axis
/// flips the heading, even when the move itself is blocked by the map edge.
inline GridModel build_warehouse_mdp(const WarehouseEnvironment& env, const WarehouseOptions& opt = {}) {
    validate(env);
    const ZoneRaster raster(env.width, env.height, env.zones);
    GridModel m{{}, env.width, env.height, true, {}, {}};
    const std::size_t n = static_cast<std::size_t>(env.width) * env.height * 2;
    m.lookup.resize(n);
    m.states.resize(n);
    for (int y = 0; y < env.height; ++y)
        for (int x = 0; x < env.width; ++x)
            for (int h = 0; h < 2; ++h) {
                const auto s = (static_cast<std::size_t>(y) * env.width + x) * 2 + h;
                m.lookup[s] = static_cast<std::int64_t>(s);
                m.states[s] = {{x, y}, static_cast<Heading>(h)};
            }
    auto is_goal = [&env](Cell c) {
        for (const auto& g : env.goals)
            if (g == c) return true;
        return false;
    };
    TabularMdp::Builder b(n, kWarehouseFeatureDim, opt.discount);
    for (StateId s = 0; s < n; ++s) {
        const auto [cell, heading] = m.states[s];
        if (is_goal(cell)) {
            for (auto d : kDirections)
                b.add_action(s, static_cast<ActionId>(d), s, FeatureVector(kWarehouseFeatureDim, 0.0));
            b.set_terminal(s);
            continue;
        }
        for (auto d : kDirections) {
            Cell to = step_cell(cell, d);
            if (!raster.in_bounds(to)) to = cell;
            const StateId next = *m.state_of(to, axis_of(d));
            b.add_action(s, static_cast<ActionId>(d), next,
                         warehouse_features(raster, heading, d, to, opt.penalize_off_road));
        }
    }
    m.mdp = b.build();
    return m;
}

/// Synthetic warehouse floor: a lattice of one-way aisles with restricted blocks between them.
inline WarehouseEnvironment generate_warehouse(Seed seed, int width, int height) {
    if (width < 5 || height < 5) throw ConfigError("warehouse must be at least 5x5");
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    WarehouseEnvironment env;
    env.seed = seed;
    env.width = width;
    env.height = height;
    for (int y = 0; y < height; y += 4)
        env.zones.push_back({ZoneKind::road, {0, y, width, 1}, uniform(0, 1) ? Direction::east : Direction::west});
    for (int x = 0; x < width; x += 5)
        env.zones.push_back({ZoneKind::road, {x, 0, 1, height}, uniform(0, 1) ? Direction::south : Direction::north});
    const int blocks = uniform(1, 4);
    for (int i = 0; i < blocks; ++i) {
        const int w = uniform(1, std::max(1, width / 5));
        const int h = uniform(1, std::max(1, height / 5));
        env.zones.push_back({ZoneKind::restricted, {uniform(0, width - w), uniform(0, height - h), w, h}, std::nullopt});
    }
    env.goals.push_back({uniform(0, width - 1), uniform(0, height - 1)});
    return env;
}

// --- JSON ------------------------------------------------------------------------------------

namespace detail {

inline nlohmann::json zones_to_json(const std::vector<Zone>& zones) {
    auto arr = nlohmann::json::array();
    for (const auto& z : zones) {
        nlohmann::json j{{"kind", to_string(z.kind)}, {"rect", {z.rect.x, z.rect.y, z.rect.w, z.rect.h}}};
        if (z.direction) j["direction"] = to_string(*z.direction);
        arr.push_back(std::move(j));
    }
    return arr;
}

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(path + key + ": missing field");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(path + key + ": wrong type");
    }
}

inline Cell cell_from(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
        throw ParseError(path + ": expected [x, y]");
    return {j[0].get<int>(), j[1].get<int>()};
}

inline std::vector<Zone> zones_from(const nlohmann::json& doc) {
    std::vector<Zone> zones;
    if (!doc.contains("zones")) return zones;
    const auto& arr = doc.at("zones");
    if (!arr.is_array()) throw ParseError("zones: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "zones[" + std::to_string(i) + "].";
        const auto& z = arr[i];
        Zone out;
        const auto kind = zone_kind_from(field<std::string>(z, "kind", path));
        if (!kind) throw ParseError(path + "kind: unknown zone kind");
        out.kind = *kind;
        const auto rect = field<std::vector<int>>(z, "rect", path);
        if (rect.size() != 4) throw ParseError(path + "rect: expected [x, y, w, h]");
        out.rect = {rect[0], rect[1], rect[2], rect[3]};
        if (z.contains("direction")) {
            const auto d = direction_from(field<std::string>(z, "direction", path));
            if (!d) throw ParseError(path + "direction: unknown direction");
            out.direction = d;
        }
        zones.push_back(out);
    }
    return zones;
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) line += text[i] == '\n';
        throw ParseError(origin + ":" + std::to_string(line) + ": malformed JSON: " + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

inline nlohmann::json to_json(const ZoneGridEnvironment& env) {
    return {{"kind", "zone_grid"},
            {"width", env.width},
            {"height", env.height},
            {"goal", {env.goal.x, env.goal.y}},
            {"zones", detail::zones_to_json(env.zones)},
            {"seed", env.seed}};
}

inline nlohmann::json to_json(const WarehouseEnvironment& env) {
    auto goals = nlohmann::json::array();
    for (const auto& g : env.goals) goals.push_back({g.x, g.y});
    return {{"kind", "warehouse"},
            {"width", env.width},
            {"height", env.height},
            {"goal", goals},
            {"zones", detail::zones_to_json(env.zones)},
            {"seed", env.seed}};
}

inline nlohmann::json to_json(const AnyEnvironment& env) {
    return std::visit([](const auto& e) { return to_json(e); }, env);
}

inline AnyEnvironment environment_from_json(const nlohmann::json& doc) {
    const auto kind = detail::field<std::string>(doc, "kind", "");
    const int width = detail::field<int>(doc, "width", "");
    const int height = detail::field<int>(doc, "height", "");
    const Seed seed = doc.contains("seed") ? detail::field<Seed>(doc, "seed", "") : 0;
    if (!doc.contains("goal")) throw ParseError("goal: missing field");
    const auto& goal = doc.at("goal");
    if (kind == "zone_grid") {
        ZoneGridEnvironment env{width, height, detail::zones_from(doc), detail::cell_from(goal, "goal"), seed};
        validate(env);
        return env;
    }
    if (kind == "warehouse") {
        WarehouseEnvironment env{width, height, detail::zones_from(doc), {}, seed};
        if (!goal.is_array() || goal.empty()) throw ParseError("goal: expected a list of [x, y] cells");
        if (goal[0].is_array())
            for (std::size_t i = 0; i < goal.size(); ++i)
                env.goals.push_back(detail::cell_from(goal[i], "goal[" + std::to_string(i) + "]"));
        else
            env.goals.push_back(detail::cell_from(goal, "goal"));
        validate(env);
        return env;
    }
    throw ParseError("kind: expected 'zone_grid' or 'warehouse'");
}

inline void save_environment(const AnyEnvironment& env, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << to_json(env).dump(2) << '\n';
}

inline AnyEnvironment load_environment(const std::string& path) {
    const auto text = detail::read_file(path);
    const auto doc = detail::parse_json_text(text, path);
    try {
        return environment_from_json(doc);
    } catch (const ValidationError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

/// Builds the MDP of either environment kind.
inline GridModel build_model(const AnyEnvironment& env, double discount = 0.95, double goal_bonus = 0.0,
                             bool penalize_off_road = true) {
    if (const auto* z = std::get_if<ZoneGridEnvironment>(&env)) return build_zone_mdp(*z, {discount, goal_bonus});
    return build_warehouse_mdp(std::get<WarehouseEnvironment>(env), {discount, penalize_off_road});
}

}  // namespace eirl
