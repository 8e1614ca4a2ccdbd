#include "teachirl/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace teachirl::io {

namespace {

json matrix_rows(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

Vector to_vector(const json& j, const char* what) {
    if (!j.is_array()) throw std::invalid_argument(std::string(what) + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

json from_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

const char* column_name(car::Column c) {
    switch (c) {
    case car::Column::left: return "left";
    case car::Column::right: return "right";
    default: return "any";
    }
}

car::Column column_from(const std::string& s) {
    if (s == "left") return car::Column::left;
    if (s == "right") return car::Column::right;
    if (s == "any") return car::Column::any;
    throw std::invalid_argument("unknown column '" + s + "'");
}

std::size_t content_from(const std::string& s) {
    for (std::size_t f = 0; f < car::content_count; ++f)
        if (s == car::feature_name(f)) return f;
    throw std::invalid_argument("unknown cell content '" + s + "'");
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

json mdp_to_json(const TabularMdp& mdp, const FeatureMap* features, const std::vector<int>& task_of_state) {
    const std::size_t ns = mdp.n_states(), na = mdp.n_actions();
    json j;
    j["n_states"] = ns;
    j["n_actions"] = na;
    j["gamma"] = mdp.discount();
    j["p0"] = from_vector(mdp.initial_dist());
    json trans = json::array();
    for (std::size_t s = 0; s < ns; ++s) {
        json per_a = json::array();
        for (std::size_t a = 0; a < na; ++a) {
            std::vector<double> row(ns, 0.0);
            for (const auto& t : mdp.successors(s, a)) row[t.next] += t.prob;
            per_a.push_back(std::move(row));
        }
        trans.push_back(std::move(per_a));
    }
    j["transitions"] = std::move(trans);
    if (mdp.env_reward()) j["env_reward"] = matrix_rows(*mdp.env_reward());
    if (features) {
        json f = json::array();
        for (std::size_t s = 0; s < ns; ++s) {
            json per_a = json::array();
            for (std::size_t a = 0; a < na; ++a) per_a.push_back(from_vector(features->at(s, a)));
            f.push_back(std::move(per_a));
        }
        j["features"] = std::move(f);
    }
    if (!task_of_state.empty()) j["lanes"]["task_of_state"] = task_of_state;
    return j;
}

MdpDocument mdp_from_json(const json& j) {
    const auto ns = j.at("n_states").get<std::size_t>();
    const auto na = j.at("n_actions").get<std::size_t>();
    const auto& trans = j.at("transitions");
    if (!trans.is_array() || trans.size() != ns) throw std::invalid_argument("transitions: expected n_states entries");
    std::vector<std::vector<Transition>> kernel(ns * na);
    for (std::size_t s = 0; s < ns; ++s) {
        if (!trans[s].is_array() || trans[s].size() != na)
            throw std::invalid_argument("transitions[" + std::to_string(s) + "]: expected n_actions entries");
        for (std::size_t a = 0; a < na; ++a) {
            const auto& e = trans[s][a];
            auto& row = kernel[s * na + a];
            if (e.is_object()) {
                const auto next = e.at("next").get<std::vector<std::size_t>>();
                const auto prob = e.at("prob").get<std::vector<double>>();
                if (next.size() != prob.size()) throw std::invalid_argument("sparse transition: next/prob length");
                for (std::size_t i = 0; i < next.size(); ++i) row.push_back({next[i], prob[i]});
            } else {
                if (e.size() != ns) throw std::invalid_argument("dense transition row has the wrong length");
                for (std::size_t n = 0; n < ns; ++n)
                    if (e[n].get<double>() != 0.0) row.push_back({n, e[n].get<double>()});
            }
        }
    }
    std::optional<Table> reward;
    if (j.contains("env_reward")) {
        const auto& r = j["env_reward"];
        if (r.size() != ns) throw std::invalid_argument("env_reward: expected n_states rows");
        Table t(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
        for (std::size_t s = 0; s < ns; ++s) {
            if (r[s].size() != na) throw std::invalid_argument("env_reward: expected n_actions columns");
            for (std::size_t a = 0; a < na; ++a)
                t(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = r[s][a].get<double>();
        }
        reward = std::move(t);
    }
    TabularMdp mdp(ns, na, std::move(kernel), j.at("gamma").get<double>(), to_vector(j.at("p0"), "p0"),
                   std::move(reward));

    std::shared_ptr<const FeatureMap> features;
    if (j.contains("features")) {
        const auto& f = j["features"];
        if (f.size() != ns || ns == 0 || f[0].size() != na || na == 0)
            throw std::invalid_argument("features: expected [n_states][n_actions][d]");
        FeatureMap fm(ns, na, f[0][0].size());
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) fm.set(s, a, to_vector(f[s][a], "features"));
        features = std::make_shared<const FeatureMap>(std::move(fm));
    } else if (j.contains("state_features")) {
        const auto& f = j["state_features"];
        if (f.size() != ns || ns == 0) throw std::invalid_argument("state_features: expected n_states rows");
        Eigen::MatrixXd phi(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(f[0].size()));
        for (std::size_t s = 0; s < ns; ++s) {
            if (f[s].size() != f[0].size()) throw std::invalid_argument("state_features: ragged rows");
            phi.row(static_cast<Eigen::Index>(s)) = to_vector(f[s], "state_features").transpose();
        }
        features = std::make_shared<const FeatureMap>(FeatureMap::from_state_features(phi, na));
    }
    std::vector<int> tasks;
    if (j.contains("lanes")) {
        tasks = j["lanes"].at("task_of_state").get<std::vector<int>>();
        if (tasks.size() != ns) throw std::invalid_argument("lanes.task_of_state: expected n_states entries");
    }
    return MdpDocument{std::move(mdp), std::move(features), std::move(tasks)};
}

MdpDocument read_mdp_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return mdp_from_json(json::parse(in));
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_mdp_file(const std::string& path, const json& doc) { write_text_file(path, doc.dump() + "\n"); }

json car_environment_to_json(const car::CarEnvironment& env) {
    json j = mdp_to_json(env.mdp, nullptr, env.task_of_state);
    j["state_features"] = matrix_rows(env.state_features);
    json lanes = json::array();
    for (const auto& l : env.lanes) {
        json cells = json::array();
        for (const auto& c : l.cells) {
            json names = json::array();
            for (std::size_t f = 0; f < car::content_count; ++f)
                if (c[f]) names.push_back(car::feature_name(f));
            cells.push_back(std::move(names));
        }
        lanes.push_back({{"task", l.task}, {"lane", l.lane}, {"rows", l.rows}, {"cols", l.cols}, {"cells", cells}});
    }
    j["lanes"]["grids"] = std::move(lanes);
    j["lanes"]["terminal"] = env.terminal;
    j["lanes"]["reward"] = car::to_string(env.reward);
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    const auto& env = j.at("environment");
    if (env.contains("car")) {
        const auto& c = env["car"];
        car::CarMdpConfig cc;
        cc.tasks = c.value("tasks", cc.tasks);
        cc.lanes_per_task = c.value("n", cc.lanes_per_task);
        cc.gamma = c.value("gamma", cc.gamma);
        cc.seed = c.value("seed", cc.seed);
        cc.reward = car::teacher_reward_from_string(c.value("reward", std::string("linear")));
        cc.rows = c.value("rows", cc.rows);
        cc.cols = c.value("cols", cc.cols);
        if (c.contains("task_overrides")) {
            for (const auto& o : c["task_overrides"]) {
                car::TaskSpec spec;
                spec.id = o.at("id").get<int>();
                for (const auto& r : o.at("rules"))
                    spec.rules.push_back({content_from(r.at("feature").get<std::string>()),
                                          r.at("probability").get<double>(),
                                          column_from(r.value("column", std::string("any"))),
                                          r.value("per_row", false)});
                cc.task_overrides.push_back(std::move(spec));
            }
        }
        cfg.environment.car = std::move(cc);
    }
    if (env.contains("mdp_path")) cfg.environment.mdp_path = env["mdp_path"].get<std::string>();
    cfg.environment.per_seed = env.value("per_seed", true);

    if (j.contains("learner")) {
        const auto& l = j["learner"];
        cfg.learner.variant = reward_variant_from_string(l.value("variant", std::string("linear")));
        if (l.contains("schedule")) {
            const auto& s = l["schedule"];
            const auto kind = s.value("kind", std::string("constant"));
            const double v = s.value("value", 0.2);
            if (kind == "constant") cfg.learner.schedule = LearningSchedule::constant(v);
            else if (kind == "inverse_sqrt") cfg.learner.schedule = LearningSchedule::inverse_sqrt(v);
            else throw std::invalid_argument("unknown schedule kind '" + kind + "'");
        }
        cfg.learner.z = l.value("z", cfg.learner.z);
        cfg.learner.warmup_tasks = l.value("warmup_tasks", cfg.learner.warmup_tasks);
        cfg.learner.warmup_demos = l.value("warmup_demos", cfg.learner.warmup_demos);
        cfg.learner.quadratic_init_scale = l.value("quadratic_init_scale", cfg.learner.quadratic_init_scale);
    }
    if (j.contains("teacher")) {
        const auto& t = j["teacher"];
        cfg.teacher.kind = t.value("kind", cfg.teacher.kind);
        cfg.teacher.B = t.value("B", cfg.teacher.B);
        cfg.teacher.k = t.value("k", cfg.teacher.k);
        cfg.teacher.K = t.value("K", cfg.teacher.K);
        cfg.teacher.horizon = t.value("horizon", cfg.teacher.horizon);
        if (t.contains("lambda_star")) {
            const auto& ls = t["lambda_star"];
            auto& out = cfg.teacher.lambda_star;
            const auto src = ls.value("source", std::string("compute"));
            if (src == "compute") out.source = LambdaStarSettings::Source::compute;
            else if (src == "given") out.source = LambdaStarSettings::Source::given;
            else if (src == "none") out.source = LambdaStarSettings::Source::none;
            else throw std::invalid_argument("unknown lambda_star source '" + src + "'");
            if (ls.contains("value")) out.given = to_vector(ls["value"], "lambda_star.value");
            out.cfg.eps_tilde = ls.value("eps_tilde", out.cfg.eps_tilde);
            out.cfg.delta = ls.value("delta", out.cfg.delta);
            out.cfg.opt_tol = ls.value("opt_tol", out.cfg.opt_tol);
            out.cfg.opt_max_iters = ls.value("opt_max_iters", out.cfg.opt_max_iters);
            out.cfg.opt_step_size = ls.value("opt_step_size", out.cfg.opt_step_size);
            if (out.source == LambdaStarSettings::Source::given && out.given.size() == 0)
                throw std::invalid_argument("lambda_star: source 'given' needs 'value'");
        }
    }
    cfg.T = j.value("T", cfg.T);
    cfg.seeds = j.value("seeds", cfg.seeds);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    if (cfg.environment.car) {
        const auto& c = *cfg.environment.car;
        json cj{{"tasks", c.tasks},   {"n", c.lanes_per_task}, {"gamma", c.gamma}, {"seed", c.seed},
                {"reward", car::to_string(c.reward)}, {"rows", c.rows}, {"cols", c.cols}};
        json overrides = json::array();
        for (const auto& o : c.task_overrides) {
            json rules = json::array();
            for (const auto& r : o.rules)
                rules.push_back({{"feature", car::feature_name(r.feature)},
                                 {"probability", r.probability},
                                 {"column", column_name(r.column)},
                                 {"per_row", r.per_row}});
            overrides.push_back({{"id", o.id}, {"rules", rules}});
        }
        cj["task_overrides"] = overrides;
        j["environment"]["car"] = cj;
    }
    if (cfg.environment.mdp_path) j["environment"]["mdp_path"] = *cfg.environment.mdp_path;
    j["environment"]["per_seed"] = cfg.environment.per_seed;

    const auto& l = cfg.learner;
    j["learner"] = {{"variant", to_string(l.variant)},
                    {"schedule",
                     {{"kind", l.schedule.kind == LearningSchedule::Kind::constant ? "constant" : "inverse_sqrt"},
                      {"value", l.schedule.value}}},
                    {"z", l.z},
                    {"warmup_tasks", l.warmup_tasks},
                    {"warmup_demos", l.warmup_demos},
                    {"quadratic_init_scale", l.quadratic_init_scale}};

    const auto& t = cfg.teacher;
    const auto& ls = t.lambda_star;
    const char* src = ls.source == LambdaStarSettings::Source::compute ? "compute"
                      : ls.source == LambdaStarSettings::Source::given ? "given"
                                                                       : "none";
    json lj{{"source", src},
            {"eps_tilde", ls.cfg.eps_tilde},
            {"delta", ls.cfg.delta},
            {"opt_tol", ls.cfg.opt_tol},
            {"opt_max_iters", ls.cfg.opt_max_iters},
            {"opt_step_size", ls.cfg.opt_step_size}};
    if (ls.source == LambdaStarSettings::Source::given) lj["value"] = from_vector(ls.given);
    j["teacher"] = {{"kind", t.kind}, {"B", t.B}, {"k", t.k}, {"K", t.K}, {"horizon", t.horizon}, {"lambda_star", lj}};
    j["T"] = cfg.T;
    j["seeds"] = cfg.seeds;
    j["output_dir"] = cfg.output_dir;
    return j;
}

ExperimentConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return config_from_json(json::parse(in));
}

const json& config_schema() {
    static const json schema = json::parse(R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "teaching experiment",
  "type": "object",
  "required": ["environment"],
  "properties": {
    "environment": {
      "type": "object",
      "description": "exactly one of car / mdp_path",
      "properties": {
        "car": {
          "type": "object",
          "properties": {
            "tasks": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 8}, "default": [0,1,2,3,4,5,6,7]},
            "n": {"type": "integer", "minimum": 1, "default": 1, "description": "lanes per task"},
            "gamma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1, "default": 0.9},
            "seed": {"type": "integer", "default": 0, "description": "used when per_seed is false"},
            "reward": {"enum": ["linear", "nonlinear"], "default": "linear"},
            "rows": {"type": "integer", "minimum": 1, "default": 10},
            "cols": {"type": "integer", "minimum": 1, "default": 2},
            "task_overrides": {
              "type": "array",
              "items": {
                "type": "object",
                "required": ["id", "rules"],
                "properties": {
                  "id": {"type": "integer"},
                  "rules": {"type": "array", "items": {
                    "type": "object",
                    "required": ["feature", "probability"],
                    "properties": {
                      "feature": {"enum": ["stone", "grass", "car", "ped", "HOV", "police"]},
                      "probability": {"type": "number", "minimum": 0, "maximum": 1},
                      "column": {"enum": ["left", "right", "any"], "default": "any"},
                      "per_row": {"type": "boolean", "default": false, "description": "one draw per row for all matching cells"}
                    }}}
                }
              }
            }
          }
        },
        "mdp_path": {"type": "string", "description": "MDP document with env_reward and features"},
        "per_seed": {"type": "boolean", "default": true, "description": "draw new car lanes for every seed"}
      }
    },
    "learner": {
      "type": "object",
      "properties": {
        "variant": {"enum": ["linear", "quadratic", "nonlinear"], "default": "linear"},
        "schedule": {"type": "object", "properties": {
          "kind": {"enum": ["constant", "inverse_sqrt"], "default": "constant"},
          "value": {"type": "number", "exclusiveMinimum": 0, "default": 0.2}}},
        "z": {"type": "number", "exclusiveMinimum": 0, "default": 100},
        "warmup_tasks": {"type": "array", "items": {"type": "integer"}, "default": []},
        "warmup_demos": {"type": "integer", "minimum": 0, "default": 0, "description": "0 = demonstration budget"},
        "quadratic_init_scale": {"type": "number", "minimum": 0, "default": 0.01}
      }
    },
    "teacher": {
      "type": "object",
      "properties": {
        "kind": {"enum": ["omni", "bbox", "agnostic"], "default": "omni"},
        "B": {"type": "integer", "minimum": 1, "default": 5},
        "k": {"type": "integer", "minimum": 1, "default": 5},
        "K": {"type": "integer", "minimum": 1, "default": 10},
        "horizon": {"type": "integer", "minimum": 0, "default": 0, "description": "0 = budget horizon"},
        "lambda_star": {"type": "object", "properties": {
          "source": {"enum": ["compute", "given", "none"], "default": "compute"},
          "value": {"type": "array", "items": {"type": "number"}},
          "eps_tilde": {"type": "number", "exclusiveMinimum": 0, "default": 0.5},
          "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.1},
          "opt_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-6},
          "opt_max_iters": {"type": "integer", "minimum": 1, "default": 5000},
          "opt_step_size": {"type": "number", "exclusiveMinimum": 0, "default": 1.0}}}
      }
    },
    "T": {"type": "integer", "minimum": 1, "default": 200},
    "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}, "default": [1]},
    "output_dir": {"type": "string", "default": ""}
  }
})");
    return schema;
}

std::vector<std::string> metrics_header(const std::vector<int>& task_ids) {
    std::vector<std::string> h{"t", "lambda_dist", "nu_gap_all"};
    for (int id : task_ids) h.push_back("nu_gap_task_" + std::to_string(id));
    for (const char* c : {"tv_dist", "sel_state", "sel_task", "objective", "probed"}) h.emplace_back(c);
    return h;
}

void write_metrics_csv(std::ostream& os, const std::vector<int>& task_ids, const std::vector<MetricsRow>& rows) {
    const auto header = metrics_header(task_ids);
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& r : rows) {
        if (r.nu_gap_task.size() != task_ids.size())
            throw std::invalid_argument("write_metrics_csv: per-task column count mismatch");
        os << r.t << ',' << (r.lambda_dist ? format_double(*r.lambda_dist) : "") << ',' << format_double(r.nu_gap_all);
        for (double g : r.nu_gap_task) os << ',' << format_double(g);
        os << ',' << format_double(r.tv_dist) << ',' << r.sel_state << ',' << r.sel_task << ','
           << format_double(r.objective) << ',' << (r.probed ? 1 : 0) << '\n';
    }
    if (!os) throw std::runtime_error("write_metrics_csv: write failed");
}

static std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

MetricsTable read_metrics_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("read_metrics_csv: empty input");
    const auto header = split_csv_line(line);
    MetricsTable table;
    const std::string prefix = "nu_gap_task_";
    for (const auto& h : header)
        if (h.rfind(prefix, 0) == 0) table.task_ids.push_back(std::stoi(h.substr(prefix.size())));
    if (header != metrics_header(table.task_ids)) throw std::invalid_argument("read_metrics_csv: unexpected header");
    const std::size_t nt = table.task_ids.size();
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto c = split_csv_line(line);
        if (c.size() != header.size()) throw std::invalid_argument("read_metrics_csv: wrong column count");
        MetricsRow r;
        r.t = std::stoul(c[0]);
        if (!c[1].empty()) r.lambda_dist = std::strtod(c[1].c_str(), nullptr);
        r.nu_gap_all = std::strtod(c[2].c_str(), nullptr);
        for (std::size_t i = 0; i < nt; ++i) r.nu_gap_task.push_back(std::strtod(c[3 + i].c_str(), nullptr));
        r.tv_dist = std::strtod(c[3 + nt].c_str(), nullptr);
        r.sel_state = std::stoul(c[4 + nt]);
        r.sel_task = std::stoi(c[5 + nt]);
        r.objective = std::strtod(c[6 + nt].c_str(), nullptr);
        r.probed = c[7 + nt] == "1";
        table.rows.push_back(std::move(r));
    }
    return table;
}

MetricsTable read_metrics_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_metrics_csv(in);
}

namespace {

/// Numeric columns summarized across seeds: name and accessor (nullopt = missing).
struct Column {
    std::string name;
    std::function<std::optional<double>(const MetricsRow&)> get;
};

std::vector<Column> numeric_columns(const std::vector<int>& task_ids) {
    std::vector<Column> cols;
    cols.push_back({"lambda_dist", [](const MetricsRow& r) { return r.lambda_dist; }});
    cols.push_back({"nu_gap_all", [](const MetricsRow& r) { return std::optional<double>(r.nu_gap_all); }});
    for (std::size_t i = 0; i < task_ids.size(); ++i)
        cols.push_back({"nu_gap_task_" + std::to_string(task_ids[i]),
                        [i](const MetricsRow& r) { return std::optional<double>(r.nu_gap_task.at(i)); }});
    cols.push_back({"tv_dist", [](const MetricsRow& r) { return std::optional<double>(r.tv_dist); }});
    cols.push_back({"objective", [](const MetricsRow& r) { return std::optional<double>(r.objective); }});
    return cols;
}

struct MeanSd {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd out;
    out.n = xs.size();
    if (xs.empty()) return out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return out;
}

/// Per column: t -> values across tables.
std::vector<std::map<std::size_t, std::vector<double>>> gather(const std::vector<MetricsTable>& tables,
                                                               const std::vector<Column>& cols) {
    std::vector<std::map<std::size_t, std::vector<double>>> out(cols.size());
    for (const auto& tb : tables)
        for (const auto& r : tb.rows)
            for (std::size_t c = 0; c < cols.size(); ++c)
                if (auto v = cols[c].get(r)) out[c][r.t].push_back(*v);
    return out;
}

} // namespace

void write_aggregate_csv(std::ostream& os, const std::vector<MetricsTable>& tables) {
    if (tables.empty()) throw std::invalid_argument("write_aggregate_csv: no tables");
    const auto& ids = tables.front().task_ids;
    for (const auto& tb : tables)
        if (tb.task_ids != ids) throw std::invalid_argument("write_aggregate_csv: task columns differ between tables");
    const auto cols = numeric_columns(ids);
    const auto data = gather(tables, cols);

    std::vector<std::size_t> ts;
    for (const auto& tb : tables)
        for (const auto& r : tb.rows) ts.push_back(r.t);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

    os << "t,n";
    for (const auto& c : cols) os << ',' << c.name << "_mean," << c.name << "_sd";
    os << '\n';
    for (std::size_t t : ts) {
        std::size_t n = 0;
        for (const auto& tb : tables)
            n += static_cast<std::size_t>(std::count_if(tb.rows.begin(), tb.rows.end(),
                                                        [t](const MetricsRow& r) { return r.t == t; }));
        os << t << ',' << n;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            auto it = data[c].find(t);
            if (it == data[c].end()) {
                os << ",,";
                continue;
            }
            const auto ms = mean_sd(it->second);
            os << ',' << format_double(ms.mean) << ',' << format_double(ms.sd);
        }
        os << '\n';
    }
    if (!os) throw std::runtime_error("write_aggregate_csv: write failed");
}

void write_run_outputs(const std::string& dir, const std::vector<RunRecord>& records) {
    std::filesystem::create_directories(dir);
    std::vector<MetricsTable> ok;
    json summary = json::array();
    for (const auto& rec : records) {
        std::ostringstream csv;
        write_metrics_csv(csv, rec.task_ids, rec.rows);
        write_text_file(dir + "/seed_" + std::to_string(rec.seed) + ".csv", csv.str());
        if (!rec.failure) ok.push_back(MetricsTable{rec.task_ids, rec.rows});
        json s{{"seed", rec.seed},
               {"config_hash", rec.config_hash},
               {"rows", rec.rows.size()},
               {"wall_seconds", rec.wall_seconds},
               {"notes", rec.notes}};
        if (rec.failure) s["failure"] = *rec.failure;
        if (rec.initial_lambda.size()) s["initial_lambda"] = from_vector(rec.initial_lambda);
        if (rec.final_lambda.size()) s["final_lambda"] = from_vector(rec.final_lambda);
        if (rec.lambda_star) s["lambda_star"] = from_vector(*rec.lambda_star);
        if (rec.final_row) {
            s["final"]["nu_gap_all"] = rec.final_row->nu_gap_all;
            s["final"]["nu_gap_task"] = rec.final_row->nu_gap_task;
            s["final"]["tv_dist"] = rec.final_row->tv_dist;
            if (rec.final_row->lambda_dist) s["final"]["lambda_dist"] = *rec.final_row->lambda_dist;
        }
        summary.push_back(std::move(s));
    }
    if (!ok.empty()) {
        std::ostringstream agg;
        write_aggregate_csv(agg, ok);
        write_text_file(dir + "/aggregate.csv", agg.str());
    }
    write_text_file(dir + "/runs.json", summary.dump(2) + "\n");
}

namespace {

struct Series {
    std::string name;
    std::vector<double> x, mean, sd;
};

const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

std::string line_chart(const std::string& title, const std::vector<Series>& series) {
    const double W = 720, H = 420, ml = 70, mr = 160, mt = 40, mb = 50;
    double x0 = 1e300, x1 = -1e300, y0 = 0.0, y1 = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.mean[i] - s.sd[i]);
            y1 = std::max(y1, s.mean[i] + s.sd[i]);
        }
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        o << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\">" << format_double(std::round(xv))
          << "</text>\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", yv);
        o << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
    }
    o << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">t</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        if (s.x.empty()) continue;
        o << "<polygon fill=\"" << palette(k) << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << ',' << py(s.mean[i] + s.sd[i]) << ' ';
        for (std::size_t i = s.x.size(); i-- > 0;) o << px(s.x[i]) << ',' << py(s.mean[i] - s.sd[i]) << ' ';
        o << "\"/>\n<polyline fill=\"none\" stroke=\"" << palette(k) << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << ',' << py(s.mean[i]) << ' ';
        o << "\"/>\n";
        o << "<text x=\"" << W - mr + 10 << "\" y=\"" << mt + 16 * (k + 1) << "\" fill=\"" << palette(k) << "\">"
          << s.name << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

Series summarize(const std::string& name, const std::map<std::size_t, std::vector<double>>& data) {
    Series s{name, {}, {}, {}};
    for (const auto& [t, xs] : data) {
        const auto ms = mean_sd(xs);
        s.x.push_back(static_cast<double>(t));
        s.mean.push_back(ms.mean);
        s.sd.push_back(ms.sd);
    }
    return s;
}

} // namespace

void export_svg(const std::string& dir, const std::vector<MetricsTable>& tables) {
    if (tables.empty()) throw std::invalid_argument("export_svg: no tables");
    std::filesystem::create_directories(dir);
    const auto cols = numeric_columns(tables.front().task_ids);
    const auto data = gather(tables, cols);

    write_text_file(dir + "/lambda_dist.svg", line_chart("||lambda_t - lambda*||", {summarize("lambda_dist", data[0])}));

    std::vector<Series> gaps{summarize("all", data[1])};
    for (std::size_t i = 0; i < tables.front().task_ids.size(); ++i)
        gaps.push_back(summarize("T" + std::to_string(tables.front().task_ids[i]), data[2 + i]));
    write_text_file(dir + "/nu_gap.svg", line_chart("reward gap |nu^E - nu^L|", gaps));

    const auto& rows = tables.front().rows;
    const double W = 720, H = 300, ml = 60, mr = 20, mt = 30, mb = 40;
    int tmax = 0;
    for (int id : tables.front().task_ids) tmax = std::max(tmax, id);
    for (const auto& r : rows) tmax = std::max(tmax, r.sel_task);
    const double xmax = rows.empty() ? 1.0 : static_cast<double>(rows.back().t);
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">curriculum (task of s_t0)</text>\n";
    auto px = [&](double t) { return ml + (t - 1.0) / std::max(1.0, xmax - 1.0) * (W - ml - mr); };
    auto py = [&](double task) { return H - mb - task / std::max(1, tmax) * (H - mt - mb); };
    for (int k = 0; k <= tmax; ++k)
        o << "<text x=\"" << ml - 8 << "\" y=\"" << py(k) + 4 << "\" text-anchor=\"end\">T" << k << "</text>\n";
    for (const auto& r : rows)
        if (r.sel_task >= 0)
            o << "<circle cx=\"" << px(static_cast<double>(r.t)) << "\" cy=\"" << py(r.sel_task) << "\" r=\"2.5\" fill=\""
              << (r.probed ? "#d62728" : "#1f77b4") << "\"/>\n";
    o << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">t</text>\n</svg>\n";
    write_text_file(dir + "/curriculum.svg", o.str());
}

} // namespace teachirl::io
