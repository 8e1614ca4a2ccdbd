#pragma once

#include "teachirl/experiment.hpp"

#include "json.hpp"

#include <iosfwd>

namespace teachirl::io {

using nlohmann::json;

/**
MDP document:

    {
      "n_states": N, "n_actions": A, "gamma": g,
      "p0": [N reals],
      "transitions": [s][a] -> [N reals]          (dense next-state distribution)
                     or {"next": [...], "prob": [...]} (sparse form, accepted on read),
      "env_reward": [s][a] -> real                 (optional),
      "state_features": [s] -> [d reals]           (optional, copied to every action),
      "features": [s][a] -> [d reals]              (optional, takes precedence),
      "lanes": {"task_of_state": [N ints]}         (optional, -1 = no task)
    }
*/
struct MdpDocument {
    TabularMdp mdp;
    std::shared_ptr<const FeatureMap> features;
    std::vector<int> task_of_state;
};

json mdp_to_json(const TabularMdp& mdp, const FeatureMap* features = nullptr,
                 const std::vector<int>& task_of_state = {});
MdpDocument mdp_from_json(const json& j);

MdpDocument read_mdp_file(const std::string& path);
void write_mdp_file(const std::string& path, const json& doc);

/// Car environment with features and lane metadata.
json car_environment_to_json(const car::CarEnvironment& env);

ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig read_config_file(const std::string& path);

/// JSON Schema of the experiment configuration (printed by --print-schema).
const json& config_schema();

/// Header: t, lambda_dist, nu_gap_all, nu_gap_task_<id>..., tv_dist, sel_state, sel_task, objective, probed.
std::vector<std::string> metrics_header(const std::vector<int>& task_ids);
void write_metrics_csv(std::ostream& os, const std::vector<int>& task_ids, const std::vector<MetricsRow>& rows);

struct MetricsTable {
    std::vector<int> task_ids;
    std::vector<MetricsRow> rows;
};
MetricsTable read_metrics_csv(std::istream& is);
MetricsTable read_metrics_csv_file(const std::string& path);

/// Column-wise mean and sample sd across records at each t; failed records are skipped.
void write_aggregate_csv(std::ostream& os, const std::vector<MetricsTable>& tables);

/// Writes `<dir>/seed_<seed>.csv` for each record and `<dir>/aggregate.csv`.
void write_run_outputs(const std::string& dir, const std::vector<RunRecord>& records);

/**
SVG files under `dir`: lambda_dist.svg, nu_gap.svg (overall and per task,
mean +/- sd across tables) and curriculum.svg (sel_task against t for the
first table). Throws std::runtime_error on write failure.
*/
void export_svg(const std::string& dir, const std::vector<MetricsTable>& tables);

void write_text_file(const std::string& path, const std::string& text);

} // namespace teachirl::io
