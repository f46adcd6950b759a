// eirl: environment generation, demonstrator simulation, joint (theta, beta) inference and
// experiment orchestration.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eirl/commands.hpp"

namespace {

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw eirl::UsageError("expected a comma-separated list of numbers, got '" + s + "'");
        }
    }
    return out;
}

eirl::Cell parse_cell(const std::string& s) {
    const auto v = parse_list(s);
    if (v.size() != 2) throw eirl::UsageError("expected a cell as x,y, got '" + s + "'");
    return {static_cast<int>(v[0]), static_cast<int>(v[1])};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint inference of demonstrator preferences and expertise"};
    app.require_subcommand(1);

    std::optional<eirl::Seed> seed;
    std::string out;
    std::string config;
    std::optional<unsigned> jobs;
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--out", out, "Output file or directory");
    app.add_option("--config", config, "Experiment config (JSON)");
    app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.fallthrough();

    // gen-env
    auto* gen = app.add_subcommand("gen-env", "Generate random environments");
    eirl::GenEnvOptions gen_opt;
    int width = 10, height = 10;
    std::optional<int> max_width, max_height;
    std::string kind = "zone_grid";
    gen->add_option("--count", gen_opt.count, "Number of environments");
    gen->add_option("--width", width, "Width (minimum when --max-width is set)");
    gen->add_option("--height", height, "Height (minimum when --max-height is set)");
    gen->add_option("--max-width", max_width);
    gen->add_option("--max-height", max_height);
    gen->add_option("--kind", kind)->check(CLI::IsMember({"zone_grid", "warehouse"}));

    // simulate
    auto* sim = app.add_subcommand("simulate", "Sample demonstrations from a MaxEnt demonstrator");
    eirl::SimulateOptions sim_opt;
    std::string sim_theta;
    sim->add_option("--env", sim_opt.env_file)->required();
    sim->add_option("--theta", sim_theta, "Comma-separated preference vector")->required();
    sim->add_option("--beta", sim_opt.beta)->required();
    sim->add_option("--episodes", sim_opt.episodes);
    sim->add_option("--horizon", sim_opt.horizon_cap);
    sim->add_option("--discount", sim_opt.discount);

    // infer
    auto* inf = app.add_subcommand("infer", "Estimate (theta, beta) from demonstrations");
    eirl::InferOptions inf_opt;
    std::string backend = "discrete", granularity = "trajectory", values, betas, prior = "uniform";
    std::optional<std::size_t> k;
    std::size_t iterations = 1000;
    std::optional<double> sparsity;
    inf->add_option("--backend", backend)->check(CLI::IsMember({"discrete", "mcmc"}));
    inf->add_option("--granularity", granularity)->check(CLI::IsMember({"trajectory", "action"}));
    inf->add_option("--env", inf_opt.env_file)->required();
    inf->add_option("--trajectories", inf_opt.trajectories_file)->required();
    inf->add_option("--hypotheses", inf_opt.hypotheses_file, "Hypothesis set JSON");
    inf->add_option("--k", k, "Sample k preference vectors for the hypothesis set");
    inf->add_option("--values", values, "Component values of the preference grid");
    inf->add_option("--betas", betas, "Candidate expertise levels");
    inf->add_option("--iterations", iterations, "MCMC iterations");
    inf->add_option("--sparsity-bound", sparsity, "MCMC l1 bound on theta");
    inf->add_option("--prior", prior)->check(CLI::IsMember({"uniform", "truncated_normal"}));
    inf->add_option("--discount", inf_opt.discount);

    // experiment
    auto* exp = app.add_subcommand("experiment", "Run a configured experiment");

    // analyze
    auto* ana = app.add_subcommand("analyze", "Pearson correlations between factors and metrics");
    eirl::AnalyzeOptions ana_opt;
    std::string factors;
    ana->add_option("--results", ana_opt.results_file)->required();
    ana->add_option("--factors", factors, "Comma-separated factor columns");
    ana->add_option("--condition", ana_opt.condition);
    ana->add_option("--backend", ana_opt.backend);
    ana->add_option("--permutations", ana_opt.permutations);

    // ingest
    auto* ing = app.add_subcommand("ingest", "Convert a raw grid recording into a trajectory");
    eirl::IngestCmdOptions ing_opt;
    ing->add_option("--raw", ing_opt.raw_file)->required();
    ing->add_option("--env", ing_opt.env_file)->required();
    ing->add_option("--downsample", ing_opt.ingest.downsample)->check(CLI::PositiveNumber);
    ing->add_flag("--drop-pauses", ing_opt.ingest.drop_pauses);
    ing->add_option("--discount", ing_opt.discount);

    // optimal-rollout
    auto* rol = app.add_subcommand("optimal-rollout", "Near-deterministic rollout of an estimated preference vector");
    eirl::RolloutOptions rol_opt;
    std::string rol_theta, start = "0,0", heading = "h";
    rol->add_option("--env", rol_opt.env_file)->required();
    rol->add_option("--theta", rol_theta)->required();
    rol->add_option("--start", start, "Start cell x,y");
    rol->add_option("--heading", heading)->check(CLI::IsMember({"h", "v"}));
    rol->add_option("--horizon", rol_opt.horizon_cap);
    rol->add_option("--discount", rol_opt.discount);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : eirl::kExitUsage;
    }

    auto need_out = [&](const char* what) {
        if (out.empty()) throw eirl::UsageError(std::string("--out is required (") + what + ")");
        return out;
    };

    try {
        if (gen->parsed()) {
            gen_opt.seed = seed.value_or(0);
            gen_opt.size = {width, max_width.value_or(width), height, max_height.value_or(height)};
            gen_opt.warehouse = kind == "warehouse";
            gen_opt.out_dir = out.empty() ? "." : out;
            for (const auto& p : eirl::cmd_gen_env(gen_opt)) std::cout << p << '\n';
        } else if (sim->parsed()) {
            sim_opt.theta = parse_list(sim_theta);
            sim_opt.seed = seed.value_or(0);
            sim_opt.out_file = need_out("trajectory JSONL file");
            const auto recs = eirl::cmd_simulate(sim_opt);
            std::cout << recs.size() << " trajectories written to " << sim_opt.out_file << '\n';
        } else if (inf->parsed()) {
            inf_opt.backend = backend == "mcmc" ? eirl::Backend::mcmc : eirl::Backend::discrete;
            inf_opt.granularity = granularity == "action" ? eirl::InferOptions::Granularity::action
                                                          : eirl::InferOptions::Granularity::trajectory;
            if (!values.empty()) inf_opt.spec.component_values = parse_list(values);
            if (!betas.empty()) inf_opt.spec.betas = parse_list(betas);
            inf_opt.spec.sample_k = k;
            inf_opt.spec.seed = seed.value_or(0);
            inf_opt.mcmc.seed = seed.value_or(0);
            inf_opt.mcmc.max_iterations = iterations;
            inf_opt.mcmc.sparsity_bound = sparsity;
            if (prior == "truncated_normal") inf_opt.prior = eirl::PriorSpec::truncated_normal_over(inf_opt.mcmc, 5.005, 1.5);
            inf_opt.threads = jobs.value_or(1);
            inf_opt.out_dir = out.empty() ? "." : out;
            std::cout << eirl::to_json(eirl::cmd_infer(inf_opt)).dump(2) << '\n';
        } else if (exp->parsed()) {
            if (config.empty()) throw eirl::UsageError("--config is required");
            const auto path = eirl::cmd_experiment({config, out.empty() ? "." : out, seed, jobs});
            std::cout << path << '\n';
        } else if (ana->parsed()) {
            if (!factors.empty()) {
                ana_opt.factors.clear();
                std::istringstream ss(factors);
                for (std::string f; std::getline(ss, f, ',');) ana_opt.factors.push_back(f);
            }
            ana_opt.seed = seed.value_or(0);
            ana_opt.out_file = need_out("correlation CSV file");
            eirl::cmd_analyze(ana_opt);
            std::cout << "correlations written to " << ana_opt.out_file << '\n';
        } else if (ing->parsed()) {
            ing_opt.out_file = need_out("trajectory JSONL file");
            const auto t = eirl::cmd_ingest(ing_opt);
            std::cout << t.size() << " steps written to " << ing_opt.out_file << '\n';
        } else if (rol->parsed()) {
            rol_opt.theta = parse_list(rol_theta);
            rol_opt.start = parse_cell(start);
            rol_opt.heading = heading == "v" ? eirl::Heading::vertical : eirl::Heading::horizontal;
            rol_opt.seed = seed.value_or(0);
            rol_opt.out_file = need_out("trajectory JSONL file");
            const auto r = eirl::cmd_optimal_rollout(rol_opt);
            std::cout << eirl::to_json(r.summary).dump(2) << '\n';
            if (!r.summary.reached_goal) std::cerr << "warning: horizon cap reached before the goal\n";
        }
    } catch (const eirl::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return eirl::exit_code_for(e);
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return eirl::kExitNumeric;
    }
    return eirl::kExitOk;
}
