#pragma once

// Experiment runner: generates instances, simulates demonstrators, runs the discrete filter and
// the MCMC estimator under the comparison conditions, and writes one results row per
// (instance, condition, schedule point, back-end).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "eirl/discrete_inference.hpp"
#include "eirl/environments.hpp"
#include "eirl/errors.hpp"
#include "eirl/map_optimizer.hpp"
#include "eirl/metrics.hpp"
#include "eirl/seeding.hpp"
#include "eirl/simulator.hpp"
#include "eirl/soft_solver.hpp"

namespace eirl {

enum class Condition { full_set, fixed_theta, fixed_beta, out_of_set };
enum class Backend { discrete, mcmc };

inline constexpr std::array<Condition, 4> kConditions{Condition::full_set, Condition::fixed_theta,
                                                      Condition::fixed_beta, Condition::out_of_set};

inline std::string_view to_string(Condition c) {
    switch (c) {
        case Condition::full_set: return "full_set";
        case Condition::fixed_theta: return "fixed_theta";
        case Condition::fixed_beta: return "fixed_beta";
        case Condition::out_of_set: return "out_of_set";
    }
    return "?";
}

inline std::string_view to_string(Backend b) { return b == Backend::discrete ? "discrete" : "mcmc"; }

inline std::optional<Condition> condition_from(std::string_view s) {
    for (auto c : kConditions)
        if (to_string(c) == s) return c;
    return std::nullopt;
}

struct ExpertiseGroup {
    std::string name;
    std::vector<double> betas;
};

struct ExperimentConfig {
    Seed seed = 0;
    std::size_t env_count = 5;
    SizeRange env_size;
    std::vector<std::string> env_files;
    std::size_t runs = 5;
    HypothesisSetSpec hypotheses;
    std::vector<std::size_t> ks{5, 10, 15, 20};
    std::vector<Condition> conditions{Condition::full_set, Condition::fixed_theta, Condition::fixed_beta};
    std::vector<ExpertiseGroup> groups{{"high", {0.01, 0.09}}, {"medium", {0.5, 1.0}}, {"low", {5.0, 10.0}}};
    std::vector<std::string> levels{"high", "medium", "low"};
    std::vector<std::size_t> schedule{5, 10, 15, 20};
    std::vector<Backend> backends{Backend::discrete};
    double out_beta_min = 0.01;
    double out_beta_max = 10.0;
    McmcConfig mcmc;
    PriorSpec prior;
    SolverConfig solver;
    std::size_t horizon_cap = 500;
    double discount = 0.95;
    double goal_bonus = 0.0;
    unsigned jobs = 1;
    unsigned belief_threads = 1;

    std::size_t num_environments() const { return env_files.empty() ? env_count : env_files.size(); }
    std::size_t num_instances() const { return num_environments() * runs * ks.size() * levels.size(); }

    const ExpertiseGroup& group(const std::string& name) const {
        for (const auto& g : groups)
            if (g.name == name) return g;
        throw ConfigError("levels: unknown expertise group '" + name + "'");
    }

    void validate() const {
        if (conditions.empty()) throw ConfigError("conditions: at least one condition required");
        if (backends.empty()) throw ConfigError("backends: at least one back-end required");
        if (schedule.empty()) throw ConfigError("schedule: at least one schedule point required");
        for (std::size_t i = 0; i < schedule.size(); ++i) {
            if (schedule[i] < 1) throw ConfigError("schedule: episode counts must be >= 1");
            if (i > 0 && schedule[i] <= schedule[i - 1]) throw ConfigError("schedule: must be strictly increasing");
        }
        if (num_environments() < 1) throw ConfigError("environments: at least one environment required");
        if (runs < 1) throw ConfigError("runs must be >= 1");
        if (ks.empty()) throw ConfigError("hypotheses.k: at least one set size required");
        for (auto k : ks)
            if (k < 1) throw ConfigError("hypotheses.k: set sizes must be >= 1");
        if (levels.empty()) throw ConfigError("levels: at least one expertise level required");
        for (const auto& l : levels) group(l);
        if (groups.size() < 2 && std::find(conditions.begin(), conditions.end(), Condition::fixed_beta) != conditions.end())
            throw ConfigError("groups: fixed_beta needs at least two expertise groups");
        for (const auto& g : groups) {
            if (g.betas.empty()) throw ConfigError("groups." + g.name + ": empty");
            for (double b : g.betas) ExpertiseLevel{b};
        }
        if (!(out_beta_min > 0.0) || !(out_beta_max >= out_beta_min))
            throw ConfigError("out_of_set_beta: expected 0 < min <= max");
        for (const auto& f : env_files)
            if (!std::filesystem::exists(f)) throw ConfigError("environments.files: no such file " + f);
        if (horizon_cap < 1) throw ConfigError("simulator.horizon_cap must be >= 1");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
        mcmc.validate();
        solver.validate();
    }
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& path) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(path + key + ": wrong type");
    }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                           const std::string& path) {
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ConfigError(path + k + ": unknown key");
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".") {
    using detail::get_or;
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    detail::reject_unknown(j,
                           {"seed", "environments", "runs", "hypotheses", "conditions", "groups", "levels", "schedule",
                            "backends", "out_of_set_beta", "mcmc", "prior", "solver", "simulator", "discount",
                            "goal_bonus", "jobs", "belief_threads"},
                           "");
    ExperimentConfig c;
    c.seed = get_or<Seed>(j, "seed", 0, "");
    if (j.contains("environments")) {
        const auto& e = j["environments"];
        detail::reject_unknown(e, {"count", "width", "height", "min_width", "max_width", "min_height", "max_height", "files"},
                               "environments.");
        c.env_count = get_or<std::size_t>(e, "count", c.env_count, "environments.");
        const int w = get_or<int>(e, "width", 10, "environments.");
        const int h = get_or<int>(e, "height", w, "environments.");
        c.env_size = {get_or<int>(e, "min_width", w, "environments."), get_or<int>(e, "max_width", w, "environments."),
                      get_or<int>(e, "min_height", h, "environments."), get_or<int>(e, "max_height", h, "environments.")};
        for (auto f : get_or<std::vector<std::string>>(e, "files", {}, "environments.")) {
            std::filesystem::path p(f);
            if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
            c.env_files.push_back(p.string());
        }
    }
    c.runs = get_or<std::size_t>(j, "runs", c.runs, "");
    if (j.contains("hypotheses")) {
        const auto& h = j["hypotheses"];
        detail::reject_unknown(h, {"component_values", "dim", "k", "betas", "dedupe"}, "hypotheses.");
        c.hypotheses.component_values =
            get_or(h, "component_values", c.hypotheses.component_values, "hypotheses.");
        c.hypotheses.dim = get_or(h, "dim", c.hypotheses.dim, "hypotheses.");
        c.hypotheses.betas = get_or(h, "betas", c.hypotheses.betas, "hypotheses.");
        c.hypotheses.dedupe = get_or(h, "dedupe", c.hypotheses.dedupe, "hypotheses.");
        c.ks = get_or(h, "k", c.ks, "hypotheses.");
    }
    if (j.contains("conditions")) {
        c.conditions.clear();
        for (const auto& s : get_or<std::vector<std::string>>(j, "conditions", {}, "")) {
            auto cond = condition_from(s);
            if (!cond) throw ConfigError("conditions: unknown condition '" + s + "'");
            c.conditions.push_back(*cond);
        }
    }
    if (j.contains("groups")) {
        c.groups.clear();
        if (!j["groups"].is_object()) throw ConfigError("groups: expected an object of name -> beta list");
        for (const auto& [name, v] : j["groups"].items()) {
            try {
                c.groups.push_back({name, v.get<std::vector<double>>()});
            } catch (const nlohmann::json::exception&) {
                throw ConfigError("groups." + name + ": expected a list of numbers");
            }
        }
    }
    c.levels = get_or(j, "levels", c.levels, "");
    c.schedule = get_or(j, "schedule", c.schedule, "");
    if (j.contains("backends")) {
        c.backends.clear();
        for (const auto& s : get_or<std::vector<std::string>>(j, "backends", {}, "")) {
            if (s == "discrete")
                c.backends.push_back(Backend::discrete);
            else if (s == "mcmc")
                c.backends.push_back(Backend::mcmc);
            else
                throw ConfigError("backends: unknown back-end '" + s + "'");
        }
    }
    if (j.contains("out_of_set_beta")) {
        const auto r = get_or<std::vector<double>>(j, "out_of_set_beta", {}, "");
        if (r.size() != 2) throw ConfigError("out_of_set_beta: expected [min, max]");
        c.out_beta_min = r[0];
        c.out_beta_max = r[1];
    }
    if (j.contains("mcmc")) {
        const auto& m = j["mcmc"];
        detail::reject_unknown(m,
                               {"theta_step", "beta_step", "theta_max", "beta_min", "beta_max", "iterations",
                                "burn_in_fraction", "sparsity_bound", "warm_start_sweep_cap", "all_coordinates"},
                               "mcmc.");
        auto& mc = c.mcmc;
        mc.theta_step = get_or(m, "theta_step", mc.theta_step, "mcmc.");
        mc.beta_step = get_or(m, "beta_step", mc.beta_step, "mcmc.");
        mc.theta_max = get_or(m, "theta_max", mc.theta_max, "mcmc.");
        mc.beta_min = get_or(m, "beta_min", mc.beta_min, "mcmc.");
        mc.beta_max = get_or(m, "beta_max", mc.beta_max, "mcmc.");
        mc.max_iterations = get_or(m, "iterations", mc.max_iterations, "mcmc.");
        mc.burn_in_fraction = get_or(m, "burn_in_fraction", mc.burn_in_fraction, "mcmc.");
        if (m.contains("sparsity_bound")) mc.sparsity_bound = get_or<double>(m, "sparsity_bound", 0.0, "mcmc.");
        mc.warm_start_sweep_cap = get_or(m, "warm_start_sweep_cap", mc.warm_start_sweep_cap, "mcmc.");
        mc.perturb_all_coordinates = get_or(m, "all_coordinates", mc.perturb_all_coordinates, "mcmc.");
    }
    c.prior = PriorSpec::uniform_over(c.mcmc);
    if (j.contains("prior")) {
        const auto& p = j["prior"];
        detail::reject_unknown(p, {"beta", "mean", "std"}, "prior.");
        const auto family = get_or<std::string>(p, "beta", "uniform", "prior.");
        if (family == "truncated_normal")
            c.prior = PriorSpec::truncated_normal_over(c.mcmc, get_or(p, "mean", 5.005, "prior."),
                                                       get_or(p, "std", 1.5, "prior."));
        else if (family != "uniform")
            throw ConfigError("prior.beta: expected 'uniform' or 'truncated_normal'");
        if (!(c.prior.beta_std > 0.0)) throw ConfigError("prior.std must be positive");
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        detail::reject_unknown(s, {"tolerance", "max_sweeps"}, "solver.");
        c.solver.tolerance = get_or(s, "tolerance", c.solver.tolerance, "solver.");
        c.solver.max_sweeps = get_or(s, "max_sweeps", c.solver.max_sweeps, "solver.");
    }
    if (j.contains("simulator")) {
        detail::reject_unknown(j["simulator"], {"horizon_cap"}, "simulator.");
        c.horizon_cap = get_or(j["simulator"], "horizon_cap", c.horizon_cap, "simulator.");
    }
    c.discount = get_or(j, "discount", c.discount, "");
    c.goal_bonus = get_or(j, "goal_bonus", c.goal_bonus, "");
    c.jobs = get_or(j, "jobs", c.jobs, "");
    c.belief_threads = get_or(j, "belief_threads", c.belief_threads, "");
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    const auto doc = detail::parse_json_text(detail::read_file(path), path);
    try {
        return experiment_config_from_json(doc, std::filesystem::path(path).parent_path().string());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

struct ResultRow {
    std::size_t environment_id = 0;
    std::size_t run_id = 0;
    Condition condition = Condition::full_set;
    std::string expertise_group;
    std::size_t k = 0;
    std::size_t episodes = 0;
    std::vector<double> theta_hat;
    double beta_hat = std::numeric_limits<double>::quiet_NaN();
    double expertise_distance = std::numeric_limits<double>::quiet_NaN();
    double preference_similarity = std::numeric_limits<double>::quiet_NaN();
    double policy_regret = std::numeric_limits<double>::quiet_NaN();
    double wall_seconds = 0.0;
    Backend backend = Backend::discrete;

    // analysis factors
    double beta_star = 0.0;
    std::vector<double> theta_star;
    std::size_t num_states = 0;
    double mean_episode_length = 0.0;
    std::size_t psi_size = 0;
    double sim_truth_to_set = std::numeric_limits<double>::quiet_NaN();
    double sim_within_set = std::numeric_limits<double>::quiet_NaN();
    double min_beta_distance = std::numeric_limits<double>::quiet_NaN();
    double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

inline constexpr std::string_view kTimingColumn = "wall_seconds";

inline void write_results_header(std::ostream& out, std::size_t dim) {
    out << "environment_id,run_id,condition,expertise_group,k,episodes";
    for (std::size_t d = 0; d < dim; ++d) out << ",theta_hat_" << d;
    out << ",beta_hat,expertise_distance,preference_similarity,policy_regret,wall_seconds,backend,beta_star";
    for (std::size_t d = 0; d < dim; ++d) out << ",theta_star_" << d;
    out << ",num_states,mean_episode_length,psi_size,sim_truth_to_set,sim_within_set,min_beta_distance,"
           "acceptance_rate,error\n";
}

inline void write_result_row(std::ostream& out, const ResultRow& r, std::size_t dim) {
    auto num = [&out](double v) {
        if (std::isnan(v))
            out << "nan";
        else
            out << v;
    };
    out << std::setprecision(17);
    out << r.environment_id << ',' << r.run_id << ',' << to_string(r.condition) << ',' << r.expertise_group << ','
        << r.k << ',' << r.episodes;
    for (std::size_t d = 0; d < dim; ++d) {
        out << ',';
        num(d < r.theta_hat.size() ? r.theta_hat[d] : std::numeric_limits<double>::quiet_NaN());
    }
    for (double v : {r.beta_hat, r.expertise_distance, r.preference_similarity, r.policy_regret, r.wall_seconds}) {
        out << ',';
        num(v);
    }
    out << ',' << to_string(r.backend) << ',';
    num(r.beta_star);
    for (std::size_t d = 0; d < dim; ++d) {
        out << ',';
        num(d < r.theta_star.size() ? r.theta_star[d] : std::numeric_limits<double>::quiet_NaN());
    }
    out << ',' << r.num_states << ',';
    num(r.mean_episode_length);
    out << ',' << r.psi_size;
    for (double v : {r.sim_truth_to_set, r.sim_within_set, r.min_beta_distance, r.acceptance_rate}) {
        out << ',';
        num(v);
    }
    std::string err = r.error;
    std::replace_if(err.begin(), err.end(), [](char ch) { return ch == ',' || ch == '\n' || ch == '\r'; }, ';');
    out << ',' << err << '\n';
}

// --- instance construction -----------------------------------------------------------------

struct InstanceKey {
    std::size_t env = 0, run = 0, k_index = 0, level_index = 0;
};

/// Ground truth and hypothesis sets for one instance. Every random draw happens regardless of
/// which conditions are enabled so that toggling a condition never changes the others.
struct InstancePlan {
    InstanceKey key;
    Seed seed = 0;
    std::size_t k = 0;
    std::string level;
    HypothesisSet psi;
    RewardWeights theta_star;
    double beta_star = 0.0;
    RewardWeights fixed_theta;
    double fixed_beta = 0.0;
    RewardWeights theta_out;
    double beta_out = 0.0;
};

/// Members of `pool` whose value differs from every member of `exclude`.
inline std::vector<RewardWeights> set_difference_by_value(const std::vector<RewardWeights>& pool,
                                                          const std::vector<RewardWeights>& exclude) {
    std::vector<RewardWeights> out;
    for (const auto& t : pool)
        if (std::none_of(exclude.begin(), exclude.end(), [&](const RewardWeights& e) { return e == t; }))
            out.push_back(t);
    return out;
}

inline InstancePlan plan_instance(const ExperimentConfig& cfg, const InstanceKey& key,
                                  const std::vector<RewardWeights>& universe) {
    InstancePlan p;
    p.key = key;
    p.k = cfg.ks.at(key.k_index);
    p.level = cfg.levels.at(key.level_index);
    // Theta_k is shared by the levels of one (environment, run, k).
    auto spec = cfg.hypotheses;
    spec.sample_k = p.k;
    spec.seed = derive_seed(cfg.seed, {key.env, key.run, key.k_index});
    p.psi = build_hypothesis_set(spec);
    p.seed = derive_seed(cfg.seed, {key.env, key.run, key.k_index, 1000 + key.level_index});

    std::mt19937_64 rng(p.seed);
    auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    const auto& group = cfg.group(p.level);
    p.theta_star = p.psi.thetas[pick(p.psi.thetas.size())];
    p.beta_star = group.betas[pick(group.betas.size())];

    auto others = set_difference_by_value(p.psi.thetas, {p.theta_star});
    if (others.empty()) others = set_difference_by_value(universe, {p.theta_star});
    if (others.empty()) throw ConfigError("fixed_theta: no preference vector differs from the true one");
    p.fixed_theta = others[pick(others.size())];

    // Opposite group: mirrored position in the group list (high <-> low). The middle group of an
    // odd-sized list has no mirror and takes a random other group.
    std::size_t gi = 0;
    while (cfg.groups[gi].name != p.level) ++gi;
    const std::size_t ng = cfg.groups.size();
    const ExpertiseGroup* opposite = nullptr;
    if (ng - 1 - gi != gi) {
        opposite = &cfg.groups[ng - 1 - gi];
    } else if (ng > 1) {
        std::vector<const ExpertiseGroup*> other_groups;
        for (const auto& g : cfg.groups)
            if (g.name != p.level) other_groups.push_back(&g);
        opposite = other_groups[pick(other_groups.size())];
    }
    p.fixed_beta = opposite ? opposite->betas[pick(opposite->betas.size())] : p.beta_star;

    auto outside = set_difference_by_value(universe, p.psi.thetas);
    if (outside.empty()) outside = universe;  // Theta_k covers Theta; nothing is out of set
    p.theta_out = outside[pick(outside.size())];
    p.beta_out = std::uniform_real_distribution<double>(cfg.out_beta_min, cfg.out_beta_max)(rng);
    return p;
}

inline double mean_cosine_to_set(const RewardWeights& t, const std::vector<RewardWeights>& set) {
    double s = 0.0;
    for (const auto& u : set) s += preference_similarity(t.values(), u.values());
    return s / static_cast<double>(set.size());
}

inline double mean_pairwise_cosine(const std::vector<RewardWeights>& set) {
    if (set.size() < 2) return 1.0;
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t j = i + 1; j < set.size(); ++j, ++n) s += preference_similarity(set[i].values(), set[j].values());
    return s / static_cast<double>(n);
}

inline double min_distance(double x, const std::vector<double>& values) {
    double best = std::numeric_limits<double>::infinity();
    for (double v : values) best = std::min(best, std::abs(x - v));
    return best;
}

struct Metrics {
    double expertise_distance, similarity, regret;
};

inline Metrics score(const TabularMdp& mdp, const SoftSolution& truth, const RewardWeights& theta_star,
                     const std::vector<double>& theta_hat, double beta_hat, const SolverConfig& solver) {
    Metrics m{expertise_distance(truth.beta, beta_hat), std::numeric_limits<double>::quiet_NaN(),
              std::numeric_limits<double>::quiet_NaN()};
    try {
        m.similarity = preference_similarity(theta_star.values(), theta_hat);
    } catch (const DomainError&) {
    }
    m.regret = policy_regret(mdp, truth, RewardWeights(theta_hat), solver);
    return m;
}

using Clock = std::chrono::steady_clock;

/// Rows of one instance in deterministic order: condition, then back-end, then schedule point.
inline std::vector<ResultRow> run_instance(const ExperimentConfig& cfg, const InstanceKey& key, const GridModel& model,
                                           const std::vector<RewardWeights>& universe) {
    const auto& mdp = model.mdp;
    std::vector<ResultRow> rows;
    InstancePlan plan;
    try {
        plan = plan_instance(cfg, key, universe);
        if (plan.psi.dim() != mdp.feature_dim())
            throw ConfigError("hypotheses.dim (" + std::to_string(plan.psi.dim()) +
                              ") does not match the environment feature dimension (" +
                              std::to_string(mdp.feature_dim()) + ")");
    } catch (const Error& e) {
        ResultRow r;
        r.environment_id = key.env;
        r.run_id = key.run;
        r.k = key.k_index < cfg.ks.size() ? cfg.ks[key.k_index] : 0;
        r.expertise_group = key.level_index < cfg.levels.size() ? cfg.levels[key.level_index] : "";
        r.error = e.what();
        for (auto c : cfg.conditions)
            for (auto b : cfg.backends)
                for (auto n : cfg.schedule) {
                    r.condition = c;
                    r.backend = b;
                    r.episodes = n;
                    rows.push_back(r);
                }
        return rows;
    }

    const std::size_t max_episodes = cfg.schedule.back();
    SolverConfig solver = cfg.solver;
    solver.layout = make_layout(mdp);

    for (std::size_t ci = 0; ci < cfg.conditions.size(); ++ci) {
        const Condition cond = cfg.conditions[ci];
        const bool out = cond == Condition::out_of_set;
        const RewardWeights& theta_star = out ? plan.theta_out : plan.theta_star;
        const double beta_star = out ? plan.beta_out : plan.beta_star;
        HypothesisSet hs = plan.psi;
        if (cond == Condition::fixed_theta) hs = restrict_to_theta(hs, plan.fixed_theta);
        if (cond == Condition::fixed_beta) hs = restrict_to_beta(hs, plan.fixed_beta);

        ResultRow base;
        base.environment_id = key.env;
        base.run_id = key.run;
        base.condition = cond;
        base.expertise_group = plan.level;
        base.k = plan.k;
        base.beta_star = beta_star;
        base.theta_star = theta_star.vector();
        base.num_states = mdp.num_states();
        base.psi_size = hs.size();
        base.sim_truth_to_set = mean_cosine_to_set(theta_star, hs.thetas);
        base.sim_within_set = mean_pairwise_cosine(hs.thetas);
        base.min_beta_distance = min_distance(beta_star, hs.betas);

        std::optional<SoftSolution> truth;
        EpisodeSet demos;
        std::string setup_error;
        try {
            truth = soft_value_iteration(mdp, theta_star, ExpertiseLevel(beta_star), solver);
            SimulatorConfig sim{max_episodes, cfg.horizon_cap, derive_seed(plan.seed, out ? 2 : 1)};
            demos = generate_episode_set(mdp, theta_star, ExpertiseLevel(beta_star), sim, solver);
        } catch (const Error& e) {
            setup_error = e.what();
        }

        for (auto backend : cfg.backends) {
            if (backend == Backend::mcmc && (cond == Condition::fixed_theta || cond == Condition::fixed_beta)) continue;
            std::optional<HypothesisBelief> belief;
            std::size_t seen = 0;
            double elapsed = 0.0;
            std::string sticky_error = setup_error;
            for (std::size_t si = 0; si < cfg.schedule.size(); ++si) {
                const std::size_t n = cfg.schedule[si];
                ResultRow r = base;
                r.backend = backend;
                r.episodes = n;
                if (!sticky_error.empty()) {
                    r.error = sticky_error;
                    rows.push_back(std::move(r));
                    continue;
                }
                const auto seen_demos = demos.prefix(n);
                r.mean_episode_length =
                    static_cast<double>(seen_demos.total_steps()) / static_cast<double>(seen_demos.size());
                try {
                    std::vector<double> theta_hat;
                    double beta_hat;
                    const auto t0 = Clock::now();
                    if (backend == Backend::discrete) {
                        if (!belief) belief = init_belief(hs, {solver, cfg.belief_threads});
                        EpisodeSet fresh;
                        fresh.trajectories.assign(demos.trajectories.begin() + static_cast<std::ptrdiff_t>(seen),
                                                  demos.trajectories.begin() + static_cast<std::ptrdiff_t>(n));
                        belief = update_belief_episodes(*belief, mdp, fresh);
                        seen = n;
                        const auto est = point_estimates(*belief);
                        theta_hat = est.theta;
                        beta_hat = est.beta;
                    } else {
                        McmcConfig mc = cfg.mcmc;
                        mc.seed = derive_seed(plan.seed, {3, ci, n});
                        const auto chain = run_chain(mdp, seen_demos, cfg.prior, mc, solver);
                        const auto est = chain_estimate(chain);
                        theta_hat = est.theta;
                        beta_hat = est.beta;
                        r.acceptance_rate = chain.acceptance_rate();
                    }
                    elapsed += std::chrono::duration<double>(Clock::now() - t0).count();
                    r.wall_seconds = elapsed;
                    r.theta_hat = theta_hat;
                    r.beta_hat = beta_hat;
                    const auto m = score(mdp, *truth, theta_star, theta_hat, beta_hat, solver);
                    r.expertise_distance = m.expertise_distance;
                    r.preference_similarity = m.similarity;
                    r.policy_regret = m.regret;
                } catch (const Error& e) {
                    r.error = e.what();
                    if (backend == Backend::discrete) sticky_error = r.error;  // the belief is lost
                }
                rows.push_back(std::move(r));
            }
        }
    }
    return rows;
}

struct ExperimentResult {
    std::size_t dim = 0;
    std::vector<ResultRow> rows;
    std::vector<std::string> warnings;
};

/// Loads or generates the environments of the config in id order.
inline std::vector<AnyEnvironment> experiment_environments(const ExperimentConfig& cfg) {
    std::vector<AnyEnvironment> envs;
    if (!cfg.env_files.empty()) {
        for (const auto& f : cfg.env_files) envs.push_back(load_environment(f));
    } else {
        for (std::size_t e = 0; e < cfg.env_count; ++e)
            envs.emplace_back(generate_environment(derive_seed(cfg.seed, e), cfg.env_size));
    }
    return envs;
}

/// Runs every instance (in parallel when cfg.jobs > 1) and returns the rows in instance order.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto envs = experiment_environments(cfg);
    std::vector<GridModel> models;
    for (const auto& e : envs) models.push_back(build_model(e, cfg.discount, cfg.goal_bonus));
    const auto universe =
        enumerate_preferences(cfg.hypotheses.component_values, cfg.hypotheses.dim, cfg.hypotheses.dedupe);

    std::vector<InstanceKey> keys;
    for (std::size_t e = 0; e < envs.size(); ++e)
        for (std::size_t r = 0; r < cfg.runs; ++r)
            for (std::size_t k = 0; k < cfg.ks.size(); ++k)
                for (std::size_t l = 0; l < cfg.levels.size(); ++l) keys.push_back({e, r, k, l});

    std::vector<std::vector<ResultRow>> slots(keys.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < keys.size(); i = next++)
            slots[i] = run_instance(cfg, keys[i], models[keys[i].env], universe);
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(keys.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    ExperimentResult res;
    res.dim = cfg.hypotheses.dim;
    for (auto& s : slots)
        for (auto& r : s) res.rows.push_back(std::move(r));
    return res;
}

inline void write_results_csv(std::ostream& out, const ExperimentResult& res) {
    write_results_header(out, res.dim);
    for (const auto& r : res.rows) write_result_row(out, r, res.dim);
}

// --- analysis ------------------------------------------------------------------------------

/// Minimal reader for the comma-separated tables this library writes (no quoting).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable read_csv(std::istream& in, const std::string& origin) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError(origin + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " columns, found " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw ParseError(origin + ": empty table");
    return t;
}

inline const std::vector<std::string> kDefaultFactors{"episodes", "psi_size", "num_states", "mean_episode_length",
                                                      "beta_star"};
inline const std::vector<std::string> kMetricColumns{"preference_similarity", "expertise_distance", "policy_regret"};

struct CorrelationRow {
    std::string factor, metric;
    double rho = std::numeric_limits<double>::quiet_NaN();
    double p_value = std::numeric_limits<double>::quiet_NaN();
    std::size_t n = 0;
    bool undefined = false;
};

/// Rows with an error or a non-finite value in either column are skipped pairwise.
inline std::vector<CorrelationRow> analyze(const CsvTable& t, const std::vector<std::string>& factors,
                                           std::size_t permutations = 10000, Seed seed = 0) {
    const auto err_col = t.column("error");
    std::vector<CorrelationRow> out;
    for (const auto& f : factors) {
        const auto fc = t.column(f);
        if (!fc) throw ValidationError("analyze: no column named '" + f + "'");
        for (const auto& m : kMetricColumns) {
            const auto mc = t.column(m);
            if (!mc) throw ValidationError("analyze: no column named '" + m + "'");
            std::vector<double> xs, ys;
            for (const auto& row : t.rows) {
                if (err_col && !row[*err_col].empty()) continue;
                double x, y;
                try {
                    x = std::stod(row[*fc]);
                    y = std::stod(row[*mc]);
                } catch (const std::exception&) {
                    continue;
                }
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                xs.push_back(x);
                ys.push_back(y);
            }
            CorrelationRow c{f, m};
            c.n = xs.size();
            try {
                const auto r = pearson(xs, ys, permutations, seed);
                c.rho = r.rho;
                c.p_value = r.p_value;
            } catch (const DomainError&) {
                c.undefined = true;
            }
            out.push_back(c);
        }
    }
    return out;
}

inline void write_correlations_csv(std::ostream& out, const std::vector<CorrelationRow>& rows) {
    out << "factor,metric,rho,p_value,n,undefined\n" << std::setprecision(17);
    for (const auto& r : rows) {
        out << r.factor << ',' << r.metric << ',';
        if (r.undefined)
            out << "nan,nan";
        else
            out << r.rho << ',' << r.p_value;
        out << ',' << r.n << ',' << (r.undefined ? 1 : 0) << '\n';
    }
}

}  // namespace eirl
