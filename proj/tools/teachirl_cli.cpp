// Command-line front end: run, lambda-star, verify, export, gen-env.

#include "teachirl/io.hpp"
#include "teachirl/verify.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace teachirl;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const auto v = std::stoull(item, &used);
        if (used != item.size()) throw std::invalid_argument("bad seed '" + item + "'");
        seeds.push_back(v);
    }
    if (seeds.empty()) throw std::invalid_argument("--seeds needs at least one value");
    return seeds;
}

ExperimentConfig load_config(const std::string& path, const std::string& seeds, const std::string& out) {
    ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : io::read_config_file(path);
    if (path.empty()) cfg.environment.car = car::CarMdpConfig{};
    if (!seeds.empty()) cfg.seeds = parse_seeds(seeds);
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
    return cfg;
}

int cmd_run(const std::string& config, const std::string& seeds, const std::string& out) {
    const ExperimentConfig cfg = load_config(config, seeds, out);
    const auto records = run_experiment(cfg);
    int failed = 0;
    for (const auto& rec : records) {
        if (rec.failure) {
            ++failed;
            std::printf("seed %llu FAILED: %s\n", static_cast<unsigned long long>(rec.seed), rec.failure->c_str());
            continue;
        }
        std::printf("seed %llu: %zu steps in %.2f s", static_cast<unsigned long long>(rec.seed), rec.rows.size(),
                    rec.wall_seconds);
        if (rec.final_row) {
            if (rec.final_row->lambda_dist) std::printf(", final lambda_dist %.4g", *rec.final_row->lambda_dist);
            std::printf(", final nu_gap %.4g", rec.final_row->nu_gap_all);
        }
        std::printf("\n");
        for (const auto& note : rec.notes) std::printf("  note: %s\n", note.c_str());
    }
    if (!cfg.output_dir.empty()) std::printf("outputs written to %s\n", cfg.output_dir.c_str());
    return failed ? 1 : 0;
}

int cmd_lambda_star(const std::string& config, const std::string& seeds, const std::string& out) {
    const ExperimentConfig cfg = load_config(config, seeds, "");
    io::json all = io::json::array();
    for (std::uint64_t seed : cfg.seeds) {
        Rng master(seed);
        Rng env_rng = master.fork();
        master.fork(); // warm-up stream, unused here
        Rng star_rng = master.fork();
        const Problem problem = build_problem(cfg.environment, env_rng);
        LambdaStarConfig lc = cfg.teacher.lambda_star.cfg;
        lc.feature_dim = problem.features->dim();
        lc.gamma = problem.mdp.discount();
        const RewardModel tmpl = RewardModel::zeros(RewardVariant::linear, problem.features);
        LambdaStarResult res;
        bool converged = true;
        try {
            res = compute_lambda_star(problem.mdp, problem.teacher_policy, tmpl, lc, star_rng,
                                      ParameterBall(cfg.learner.z));
        } catch (const LambdaStarConvergenceError& e) {
            res = e.partial();
            converged = false;
        }
        const double gap = evaluate_learnability(problem.mdp, tmpl, res.lambda, *problem.mdp.env_reward(),
                                                 problem.teacher_policy);
        io::json j{{"seed", seed},
                   {"lambda_star", std::vector<double>(res.lambda.data(), res.lambda.data() + res.lambda.size())},
                   {"demo_count", res.budget.demo_count},
                   {"horizon", res.budget.horizon},
                   {"feature_residual", res.fit.feature_residual},
                   {"gradient_norm", res.fit.gradient_norm},
                   {"iterations", res.fit.iterations},
                   {"converged", converged},
                   {"learnability_gap", gap}};
        all.push_back(std::move(j));
    }
    const std::string text = all.dump(2) + "\n";
    if (out.empty()) std::cout << text;
    else io::write_text_file(out, text);
    return 0;
}

int cmd_verify(const std::string& level, std::uint64_t seed, double corruption) {
    verify::Options opts;
    opts.level = verify::level_from_string(level);
    opts.seed = seed;
    opts.gradient_corruption = corruption;
    const auto report = verify::run(opts);
    for (const auto& c : report.checks)
        std::printf("%-4s %-28s %7.2fs  %s\n", c.passed ? "ok" : "FAIL", c.name.c_str(), c.seconds, c.detail.c_str());
    if (!report.ok()) {
        std::printf("verify failed:");
        for (const auto& c : report.checks)
            if (!c.passed) std::printf(" %s", c.name.c_str());
        std::printf("\n");
        return 1;
    }
    std::printf("verify passed (%zu checks)\n", report.checks.size());
    return 0;
}

int cmd_export(const std::string& in, const std::string& format, const std::string& out) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in)) {
        const auto name = e.path().filename().string();
        if (name.rfind("seed_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
    }
    if (files.empty()) throw std::runtime_error("no seed_*.csv files in " + in);
    std::sort(files.begin(), files.end());
    std::vector<io::MetricsTable> tables;
    for (const auto& f : files) {
        auto t = io::read_metrics_csv_file(f.string());
        if (!t.rows.empty()) tables.push_back(std::move(t));
    }
    if (tables.empty()) throw std::runtime_error("all seed CSVs in " + in + " are empty");
    const std::string dir = out.empty() ? in : out;
    fs::create_directories(dir);
    if (format == "csv") {
        std::ostringstream os;
        io::write_aggregate_csv(os, tables);
        io::write_text_file(dir + "/aggregate.csv", os.str());
    } else {
        io::export_svg(dir, tables);
    }
    std::printf("exported %zu tables to %s\n", tables.size(), dir.c_str());
    return 0;
}

int cmd_gen_env(const std::string& config, std::uint64_t seed, const std::string& out) {
    car::CarMdpConfig car_cfg;
    if (!config.empty()) {
        const auto cfg = io::read_config_file(config);
        if (!cfg.environment.car) throw std::invalid_argument("config has no car environment");
        car_cfg = *cfg.environment.car;
    }
    car_cfg.seed = seed;
    const auto env = car::generate_environment(car_cfg);
    io::write_mdp_file(out, io::car_environment_to_json(env));
    std::printf("wrote %zu states, %zu lanes to %s\n", env.mdp.n_states(), env.lanes.size(), out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interactive IRL teaching simulations"};
    app.require_subcommand(0, 1);
    bool print_schema = false;
    app.add_flag("--print-schema", print_schema, "Print the JSON schema of experiment configs and exit");

    std::string config, seeds, out, level = "quick", in, format = "csv";
    std::uint64_t seed = 0;
    double corruption = 0.0;

    auto* run = app.add_subcommand("run", "Run a teaching experiment");
    run->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    run->add_option("--seeds", seeds, "Comma-separated seeds, overrides the config");
    run->add_option("--out", out, "Output directory, overrides the config");

    auto* star = app.add_subcommand("lambda-star", "Compute the target parameter for each seed's environment");
    star->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    star->add_option("--seeds", seeds, "Comma-separated seeds, overrides the config");
    star->add_option("--out", out, "Write the JSON result here instead of stdout");

    auto* ver = app.add_subcommand("verify", "Run the property suites");
    ver->add_option("--verify-level", level, "quick | full")->check(CLI::IsMember({"quick", "full"}));
    ver->add_option("--seed", seed, "Suite seed (0 = built-in default)");
    ver->add_option("--corrupt-gradient", corruption, "Offset added to analytic gradients (negative control)");

    auto* exp = app.add_subcommand("export", "Aggregate or plot the seed CSVs of a run directory");
    exp->add_option("--in", in, "Run directory holding seed_*.csv")->required()->check(CLI::ExistingDirectory);
    exp->add_option("--format", format, "csv | svg")->check(CLI::IsMember({"csv", "svg"}));
    exp->add_option("--out", out, "Output directory (default: the input directory)");

    auto* gen = app.add_subcommand("gen-env", "Write a generated car MDP to a JSON file");
    gen->add_option("--config", config, "Experiment config whose car environment is used")->check(CLI::ExistingFile);
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--out", out, "Output file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (print_schema) {
            std::cout << io::config_schema().dump(2) << "\n";
            return 0;
        }
        if (*run) return cmd_run(config, seeds, out);
        if (*star) return cmd_lambda_star(config, seeds, out);
        if (*ver) return cmd_verify(level, seed ? seed : verify::Options{}.seed, corruption);
        if (*exp) return cmd_export(in, format, out);
        if (*gen) return cmd_gen_env(config, seed, out);
        std::cout << app.help();
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
