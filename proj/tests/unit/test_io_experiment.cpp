#include "doctest.h"

#include "teachirl/io.hpp"
#include "teachirl/verify.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace teachirl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("teachirl_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_config(const std::string& kind) {
    ExperimentConfig cfg;
    car::CarMdpConfig car;
    car.tasks = {0, 2, 4, 7};
    cfg.environment.car = car;
    cfg.learner.warmup_tasks = {0, 2};
    cfg.learner.schedule = LearningSchedule::constant(1.0);
    cfg.teacher.kind = kind;
    cfg.teacher.lambda_star.cfg.opt_tol = 5e-3;
    cfg.T = 12;
    cfg.seeds = {1, 2};
    return cfg;
}

} // namespace

TEST_SUITE("cli-harness") {

TEST_CASE("config JSON round trip and validation") {
    auto cfg = small_config("bbox");
    cfg.environment.car->task_overrides = {car::TaskSpec{8, {{car::police, 0.3, car::Column::right, false}}}};
    cfg.learner.variant = RewardVariant::quadratic;
    cfg.teacher.lambda_star.source = LambdaStarSettings::Source::none;
    const auto j = io::config_to_json(cfg);
    CHECK(io::config_to_json(io::config_from_json(j)) == j);

    auto bad = j;
    bad["seeds"] = io::json::array();
    CHECK_THROWS_AS(io::config_from_json(bad), std::invalid_argument);
    bad = j;
    bad["T"] = 0;
    CHECK_THROWS_AS(io::config_from_json(bad), std::invalid_argument);
    bad = j;
    bad["teacher"]["kind"] = "omni";
    CHECK_THROWS_AS(io::config_from_json(bad), std::invalid_argument);
    bad = j;
    bad["teacher"]["kind"] = "oracle";
    CHECK_THROWS_AS(io::config_from_json(bad), std::invalid_argument);

    const auto& schema = io::config_schema();
    CHECK(schema.contains("properties"));
    for (const char* key : {"environment", "learner", "teacher", "T", "seeds", "output_dir"})
        CHECK(schema["properties"].contains(key));
}

TEST_CASE("shipped configs parse") {
    int count = 0;
    for (const auto& e : fs::directory_iterator(fs::path(TEACHIRL_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".json") continue;
        INFO(e.path().string());
        CHECK_NOTHROW(io::read_config_file(e.path().string()));
        ++count;
    }
    CHECK(count >= 6);
}

TEST_CASE("MDP documents round trip") {
    Rng rng(1);
    const auto mdp = verify::random_mdp(4, 2, 0.7, rng, 2);
    const auto features = verify::random_features(4, 2, 3, rng);
    const auto doc = io::mdp_from_json(io::json::parse(io::mdp_to_json(mdp, features.get(), {0, 0, 1, -1}).dump()));
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t s2 = 0; s2 < 4; ++s2)
                CHECK(doc.mdp.probability(s, a, s2) == mdp.probability(s, a, s2));
            CHECK(doc.features->at(s, a) == features->at(s, a));
        }
    CHECK(doc.mdp.initial_dist() == mdp.initial_dist());
    CHECK(*doc.mdp.env_reward() == *mdp.env_reward());
    CHECK(doc.mdp.discount() == 0.7);
    CHECK(doc.task_of_state == std::vector<int>{0, 0, 1, -1});

    const auto sparse = io::json::parse(R"({
        "n_states": 2, "n_actions": 1, "gamma": 0.5, "p0": [1, 0],
        "transitions": [[{"next": [1], "prob": [1.0]}], [{"next": [1], "prob": [1.0]}]],
        "state_features": [[1, 0], [0, 1]]
    })");
    const auto sd = io::mdp_from_json(sparse);
    CHECK(sd.mdp.probability(0, 0, 1) == 1.0);
    CHECK(sd.features->at(1, 0)(1) == 1.0);
    CHECK_FALSE(sd.mdp.env_reward().has_value());

    auto broken = sparse;
    broken["p0"] = {0.5, 0.4};
    CHECK_THROWS(io::mdp_from_json(broken));
}

TEST_CASE("car environments run from an MDP file") {
    const auto dir = scratch_dir("mdpfile");
    car::CarMdpConfig car;
    car.tasks = {0, 4};
    car.seed = 3;
    const auto env = car::generate_environment(car);
    const auto path = (dir / "env.json").string();
    io::write_mdp_file(path, io::car_environment_to_json(env));
    const auto doc = io::read_mdp_file(path);
    CHECK(doc.mdp.n_states() == env.mdp.n_states());
    CHECK(doc.task_of_state == env.task_of_state);

    ExperimentConfig cfg;
    cfg.environment.mdp_path = path;
    cfg.teacher.kind = "agnostic";
    cfg.teacher.lambda_star.source = LambdaStarSettings::Source::none;
    cfg.T = 3;
    const auto rec = run_seed(cfg, 1);
    CHECK_FALSE(rec.failure.has_value());
    CHECK(rec.rows.size() == 3);
    CHECK(rec.task_ids == std::vector<int>{0, 4});
}

TEST_CASE("metrics CSV round trip") {
    std::vector<MetricsRow> rows;
    Rng rng(2);
    for (std::size_t t = 1; t <= 5; ++t) {
        MetricsRow r;
        r.t = t;
        if (t % 2) r.lambda_dist = rng.uniform() * 1e3;
        r.nu_gap_all = rng.normal();
        r.nu_gap_task = {rng.uniform() / 3.0, 1e-300 * rng.uniform()};
        r.tv_dist = rng.uniform();
        r.sel_state = t * 20;
        r.sel_task = static_cast<int>(t % 3) - 1;
        r.objective = -rng.uniform();
        r.probed = t == 1;
        rows.push_back(r);
    }
    std::stringstream ss;
    io::write_metrics_csv(ss, {0, 8}, rows);
    const std::string text = ss.str();
    CHECK(text.rfind("t,lambda_dist,nu_gap_all,nu_gap_task_0,nu_gap_task_8,tv_dist,sel_state,sel_task,objective,probed\n",
                     0) == 0);
    const auto back = io::read_metrics_csv(ss);
    CHECK(back.task_ids == std::vector<int>{0, 8});
    CHECK(back.rows == rows);
}

TEST_CASE("one seed, one step") {
    auto cfg = small_config("omni");
    cfg.seeds = {1};
    cfg.T = 1;
    const auto recs = run_experiment(cfg);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].rows.size() == 1);
    CHECK(recs[0].rows[0].t == 1);
    CHECK(recs[0].final_row.has_value());
}

TEST_CASE("outputs are deterministic and aggregates match the seed files") {
    const auto d1 = scratch_dir("run1"), d2 = scratch_dir("run2");
    auto cfg = small_config("bbox");
    cfg.output_dir = d1.string();
    const auto recs = run_experiment(cfg);
    cfg.output_dir = d2.string();
    run_experiment(cfg);
    for (const char* f : {"seed_1.csv", "seed_2.csv", "aggregate.csv"}) {
        INFO(f);
        CHECK(fs::exists(d1 / f));
        CHECK(slurp(d1 / f) == slurp(d2 / f));
    }
    CHECK(fs::exists(d1 / "runs.json"));

    // rows indexed 1..T contiguously
    for (const auto& r : recs) {
        REQUIRE(r.rows.size() == cfg.T);
        for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(r.rows[i].t == i + 1);
        CHECK(r.config_hash == config_hash(cfg));
    }

    // aggregate recomputed from the per-seed files
    std::vector<io::MetricsTable> tables{io::read_metrics_csv_file((d1 / "seed_1.csv").string()),
                                         io::read_metrics_csv_file((d1 / "seed_2.csv").string())};
    std::istringstream agg(slurp(d1 / "aggregate.csv"));
    std::string header, line;
    std::getline(agg, header);
    CHECK(header.rfind("t,n,lambda_dist_mean,lambda_dist_sd,nu_gap_all_mean,nu_gap_all_sd,", 0) == 0);
    std::size_t t = 0;
    while (std::getline(agg, line)) {
        ++t;
        std::vector<std::string> c;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) c.push_back(cell);
        CHECK(std::stoul(c[0]) == t);
        CHECK(c[1] == "2");
        const double a = tables[0].rows[t - 1].nu_gap_all, b = tables[1].rows[t - 1].nu_gap_all;
        const double mean = (a + b) / 2.0, sd = std::abs(a - b) / std::sqrt(2.0);
        CHECK(std::stod(c[4]) == doctest::Approx(mean).epsilon(1e-15));
        CHECK(std::stod(c[5]) == doctest::Approx(sd).epsilon(1e-12));
    }
    CHECK(t == cfg.T);
}

TEST_CASE("bbox curriculum is constant within probe blocks") {
    auto cfg = small_config("bbox");
    cfg.T = 20;
    for (const auto& rec : run_experiment(cfg)) {
        REQUIRE_FALSE(rec.failure.has_value());
        for (std::size_t i = 0; i < rec.rows.size(); ++i) {
            CHECK(rec.rows[i].probed == (i % 5 == 0));
            if (i % 5) CHECK(rec.rows[i].sel_task == rec.rows[i - 1].sel_task);
        }
    }
}

TEST_CASE("agnostic run without a target leaves lambda_dist empty") {
    const auto dir = scratch_dir("agn");
    auto cfg = small_config("agnostic");
    cfg.teacher.lambda_star.source = LambdaStarSettings::Source::none;
    cfg.seeds = {4};
    cfg.T = 3;
    cfg.output_dir = dir.string();
    run_experiment(cfg);
    const auto table = io::read_metrics_csv_file((dir / "seed_4.csv").string());
    REQUIRE(table.rows.size() == 3);
    for (const auto& r : table.rows) CHECK_FALSE(r.lambda_dist.has_value());
    std::ifstream in(dir / "seed_4.csv");
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(first.rfind("1,,", 0) == 0);
}

TEST_CASE("failures stay with their seed") {
    auto cfg = small_config("omni");
    cfg.T = 4;
    const auto ok = run_seed(cfg, 1);
    CHECK_FALSE(ok.failure.has_value());
    const auto bad = run_seed(cfg, 2, [](const StepContext& c, const Problem&) {
        if (c.t == 3) throw std::runtime_error("observer failure");
    });
    REQUIRE(bad.failure.has_value());
    CHECK(bad.failure->find("observer failure") != std::string::npos);

    ExperimentConfig missing;
    missing.environment.mdp_path = "/nonexistent/env.json";
    missing.teacher.kind = "agnostic";
    missing.teacher.lambda_star.source = LambdaStarSettings::Source::none;
    missing.seeds = {1, 2};
    const auto recs = run_experiment(missing);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].failure.has_value());
    CHECK(recs[1].failure.has_value());
}

TEST_CASE("svg export") {
    const auto dir = scratch_dir("svg");
    auto cfg = small_config("bbox");
    cfg.T = 6;
    std::vector<io::MetricsTable> tables;
    for (const auto& r : run_experiment(cfg)) tables.push_back({r.task_ids, r.rows});
    io::export_svg(dir.string(), tables);
    for (const char* f : {"lambda_dist.svg", "nu_gap.svg", "curriculum.svg"}) {
        const auto text = slurp(dir / f);
        CHECK(text.find("<svg") != std::string::npos);
        CHECK(text.find("</svg>") != std::string::npos);
    }
    CHECK_THROWS(io::export_svg("/proc/teachirl_no_such_dir", tables));
}

TEST_CASE("warm-up fits the warm-up tasks only") {
    auto cfg = small_config("agnostic");
    Rng rng(5);
    const auto problem = build_problem(cfg.environment, rng);
    LambdaStarConfig lc = cfg.teacher.lambda_star.cfg;
    Rng w(6);
    const Vector l1 = warmup_parameters(problem, cfg.learner, lc, w);
    CHECK(l1.size() == 8);
    CHECK(l1.norm() > 0.0);
    // grass (task 4) and HOV (task 7) never appear in tasks 0 and 2, so their weights stay at zero
    CHECK(l1(car::grass) == 0.0);
    CHECK(l1(car::hov) == 0.0);
    auto none = cfg.learner;
    none.warmup_tasks.clear();
    Rng w2(6);
    CHECK(warmup_parameters(problem, none, lc, w2).norm() == 0.0);
}

} // TEST_SUITE
