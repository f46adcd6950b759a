#pragma once

// Implementations behind the eirl command-line subcommands. Each function takes plain options
// and reports failures through the eirl exception hierarchy; tools/eirl_cli.cpp maps those to
// exit codes.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eirl/discrete_inference.hpp"
#include "eirl/environments.hpp"
#include "eirl/errors.hpp"
#include "eirl/experiment.hpp"
#include "eirl/ingest.hpp"
#include "eirl/map_optimizer.hpp"
#include "eirl/simulator.hpp"

namespace eirl {

/// Misuse of the command line that the argument parser cannot detect by itself.
class UsageError : public Error {
public:
    using Error::Error;
};

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitValidation = 3, kExitNumeric = 4 };

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return kExitUsage;
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    return kExitValidation;
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw ValidationError("cannot create directory " + dir.string());
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + p.string());
    return out;
}

inline RewardWeights theta_for(const GridModel& model, const std::vector<double>& theta) {
    if (theta.size() != model.mdp.feature_dim())
        throw ConfigError("theta has " + std::to_string(theta.size()) + " components, the environment needs " +
                          std::to_string(model.mdp.feature_dim()));
    return RewardWeights(theta);
}

}  // namespace detail

struct GenEnvOptions {
    Seed seed = 0;
    std::size_t count = 5;
    SizeRange size;
    bool warehouse = false;
    std::string out_dir = ".";
};

inline std::vector<std::string> cmd_gen_env(const GenEnvOptions& opt) {
    detail::ensure_dir(opt.out_dir);
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < opt.count; ++i) {
        const Seed s = derive_seed(opt.seed, i);
        AnyEnvironment env;
        if (opt.warehouse)
            env = generate_warehouse(s, opt.size.min_width, opt.size.min_height);
        else
            env = generate_environment(s, opt.size);
        std::ostringstream name;
        name << "env_" << std::setw(3) << std::setfill('0') << i << ".json";
        const auto path = (std::filesystem::path(opt.out_dir) / name.str()).string();
        save_environment(env, path);
        paths.push_back(path);
    }
    return paths;
}

struct SimulateOptions {
    std::string env_file;
    std::vector<double> theta;
    double beta = 1.0;
    std::size_t episodes = 20;
    std::size_t horizon_cap = 500;
    Seed seed = 0;
    double discount = 0.95;
    std::string out_file;
};

inline std::vector<TrajectoryRecord> cmd_simulate(const SimulateOptions& opt) {
    const auto env = load_environment(opt.env_file);
    const auto model = build_model(env, opt.discount);
    const auto theta = detail::theta_for(model, opt.theta);
    const ExpertiseLevel beta(opt.beta);
    const auto set = generate_episode_set(model.mdp, theta, beta, {opt.episodes, opt.horizon_cap, opt.seed});
    std::vector<TrajectoryRecord> recs;
    for (std::size_t i = 0; i < set.size(); ++i)
        recs.push_back({set.trajectories[i], {derive_seed(opt.seed, i), opt.theta, opt.beta}});
    write_trajectories(opt.out_file, recs);
    return recs;
}

struct InferOptions {
    enum class Granularity { trajectory, action };
    Backend backend = Backend::discrete;
    Granularity granularity = Granularity::trajectory;
    std::string env_file;
    std::string trajectories_file;
    /// JSON hypothesis set ({"thetas": [...], "betas": [...]}); otherwise built from `spec`.
    std::optional<std::string> hypotheses_file;
    HypothesisSetSpec spec;
    McmcConfig mcmc;
    std::optional<PriorSpec> prior;
    double discount = 0.95;
    unsigned threads = 1;
    std::string out_dir = ".";
};

struct InferResult {
    std::vector<double> theta_hat;
    double beta_hat = 0.0;
    std::string export_path;
    std::optional<std::size_t> map_index;
    std::optional<double> acceptance_rate;
};

inline nlohmann::json to_json(const InferResult& r) {
    nlohmann::json j{{"theta_hat", r.theta_hat}, {"beta_hat", r.beta_hat}, {"export", r.export_path}};
    if (r.map_index) j["map_index"] = *r.map_index;
    if (r.acceptance_rate) j["acceptance_rate"] = *r.acceptance_rate;
    return j;
}

inline InferResult cmd_infer(const InferOptions& opt) {
    if (opt.backend == Backend::mcmc && opt.granularity == InferOptions::Granularity::action)
        throw UsageError("per-action granularity is only available for the discrete back-end");
    const auto env = load_environment(opt.env_file);
    const auto model = build_model(env, opt.discount);
    const auto recs = read_trajectories(opt.trajectories_file, &model.mdp);
    const auto demos = to_episode_set(recs);
    detail::ensure_dir(opt.out_dir);

    InferResult res;
    if (opt.backend == Backend::discrete) {
        HypothesisSet hs = opt.hypotheses_file
                               ? hypothesis_set_from_json(detail::parse_json_text(detail::read_file(*opt.hypotheses_file),
                                                                                  *opt.hypotheses_file))
                               : build_hypothesis_set(opt.spec);
        if (hs.dim() != model.mdp.feature_dim())
            throw ConfigError("hypothesis dimension " + std::to_string(hs.dim()) + " does not match the environment (" +
                              std::to_string(model.mdp.feature_dim()) + ")");
        auto bel = init_belief(hs, {{}, opt.threads});
        if (opt.granularity == InferOptions::Granularity::action) {
            for (const auto& t : demos.trajectories)
                for (const auto& st : t.steps) bel = update_belief_action(bel, model.mdp, st.state, st.action);
        } else {
            for (const auto& t : demos.trajectories) bel = update_belief_trajectory(bel, model.mdp, t);
        }
        const auto est = point_estimates(bel);
        res.theta_hat = est.theta;
        res.beta_hat = est.beta;
        res.map_index = bel.map_index();
        res.export_path = (std::filesystem::path(opt.out_dir) / "belief.csv").string();
        auto out = detail::open_out(res.export_path);
        write_belief_csv(out, bel);
    } else {
        const auto prior = opt.prior.value_or(PriorSpec::uniform_over(opt.mcmc));
        const auto chain = run_chain(model.mdp, demos, prior, opt.mcmc);
        const auto est = chain_estimate(chain);
        res.theta_hat = est.theta;
        res.beta_hat = est.beta;
        res.acceptance_rate = chain.acceptance_rate();
        res.export_path = (std::filesystem::path(opt.out_dir) / "trace.csv").string();
        auto out = detail::open_out(res.export_path);
        write_trace_csv(out, chain);
    }
    auto est_out = detail::open_out(std::filesystem::path(opt.out_dir) / "estimates.json");
    est_out << to_json(res).dump(2) << '\n';
    return res;
}

struct ExperimentOptions {
    std::string config_file;
    std::string out_dir = ".";
    std::optional<Seed> seed;
    std::optional<unsigned> jobs;
};

/// Runs the configured experiment and writes results.csv plus a copy of the config.
inline std::string cmd_experiment(const ExperimentOptions& opt) {
    auto cfg = load_experiment_config(opt.config_file);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.jobs) cfg.jobs = *opt.jobs;
    cfg.validate();
    detail::ensure_dir(opt.out_dir);
    const auto res = run_experiment(cfg);
    const auto path = (std::filesystem::path(opt.out_dir) / "results.csv").string();
    {
        auto out = detail::open_out(path);
        write_results_csv(out, res);
    }
    const auto copy = std::filesystem::path(opt.out_dir) / "config.json";
    if (!std::filesystem::exists(copy) || !std::filesystem::equivalent(copy, opt.config_file)) {
        auto doc = detail::parse_json_text(detail::read_file(opt.config_file), opt.config_file);
        doc["seed"] = cfg.seed;
        doc["jobs"] = cfg.jobs;
        auto out = detail::open_out(copy);
        out << doc.dump(2) << '\n';
    }
    return path;
}

struct AnalyzeOptions {
    std::string results_file;
    std::vector<std::string> factors = kDefaultFactors;
    std::optional<std::string> condition;
    std::optional<std::string> backend;
    std::size_t permutations = 10000;
    Seed seed = 0;
    std::string out_file;
};

inline std::vector<CorrelationRow> cmd_analyze(const AnalyzeOptions& opt) {
    std::ifstream in(opt.results_file, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + opt.results_file);
    auto table = read_csv(in, opt.results_file);
    auto keep = [&](const char* column, const std::optional<std::string>& value) {
        if (!value) return;
        const auto c = table.column(column);
        if (!c) throw ValidationError("analyze: no column named '" + std::string(column) + "'");
        std::erase_if(table.rows, [&](const auto& row) { return row[*c] != *value; });
    };
    keep("condition", opt.condition);
    keep("backend", opt.backend);
    const auto rows = analyze(table, opt.factors, opt.permutations, opt.seed);
    auto out = detail::open_out(opt.out_file);
    write_correlations_csv(out, rows);
    return rows;
}

struct IngestCmdOptions {
    std::string raw_file;
    std::string env_file;
    IngestOptions ingest;
    double discount = 0.95;
    std::string out_file;
};

inline Trajectory cmd_ingest(const IngestCmdOptions& opt) {
    const auto env = load_environment(opt.env_file);
    const auto model = build_model(env, opt.discount);
    std::ifstream in(opt.raw_file, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + opt.raw_file);
    const auto raw = parse_raw_samples(in, opt.raw_file);
    Trajectory t;
    try {
        t = ingest_samples(model, raw, opt.ingest);
    } catch (const ValidationError& e) {
        throw ValidationError(opt.raw_file + ": " + e.what());
    }
    const auto rep = validate_trajectory(model.mdp, t);
    if (!rep.passed()) throw ValidationError(opt.raw_file + ": " + rep.describe());
    write_trajectories(opt.out_file, {{t, {}}});
    return t;
}

struct RolloutOptions {
    std::string env_file;
    std::vector<double> theta;
    Cell start;
    Heading heading = Heading::horizontal;
    Seed seed = 0;
    std::size_t horizon_cap = 500;
    double discount = 0.95;
    std::string out_file;
};

inline Rollout cmd_optimal_rollout(const RolloutOptions& opt) {
    const auto env = load_environment(opt.env_file);
    const auto model = build_model(env, opt.discount);
    const auto theta = detail::theta_for(model, opt.theta);
    const auto start = model.state_of(opt.start, opt.heading);
    if (!start)
        throw ConfigError("start cell (" + std::to_string(opt.start.x) + ", " + std::to_string(opt.start.y) +
                          ") is not a state of the environment");
    auto r = optimal_rollout(model, env, theta, *start, opt.seed, opt.horizon_cap);
    write_trajectories(opt.out_file, {{r.trajectory, {opt.seed, opt.theta, kRolloutBeta}}});
    return r;
}

}  // namespace eirl
