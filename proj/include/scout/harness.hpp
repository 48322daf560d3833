// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_HARNESS_HPP
#define SCOUT_HARNESS_HPP

#include "scout/metrics.hpp"
#include "scout/planner.hpp"
#include "scout/scene.hpp"
#include "scout/simulator.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scout {

/** Everything an experiment needs besides the scene, with defaults matching
 *  the stock 320x240 sensor. Loaded from a JSON file (see README). */
struct HarnessConfig {
    CameraModel camera = CameraModel::centred(320, 240, 262.5, 262.5, 0.1, 10.0);
    OccupancyConfig map; ///< bounds are taken from the scene at run time
    PlannerConfig planner;
    NoiseParams noise;
    bool noise_enabled = true;

    double history_cell = 0.5;
    bool history_enabled = true;
    bool history_dilate = false;
    bool history_dump = false;

    int object_weight_saturation = 100;
    double iou_threshold = 0.5;
    int min_mask_pixels = 50; ///< at 320x240; scaled by pixel-count ratio
    int erode_iterations = 0;
    bool fuse_fg_zero = true;

    double dt = 0.1;              ///< control tick [s]
    double start_clearance = 0.3; ///< radius of the initial free-space carve [m]
    long max_rounds = 0;          ///< planning-round budget; <= 0 means unlimited

    void validate() const; ///< throws std::invalid_argument
};

/** Parse a harness config file; an empty path yields the defaults. Unknown
 *  keys are rejected. Throws std::runtime_error / std::invalid_argument. */
HarnessConfig load_harness_config(const std::string& path);

struct RunOptions {
    std::string scene_path;
    std::string config_path; ///< empty = defaults
    std::string out_dir;     ///< empty = no artifacts written
    std::uint64_t seed = 0;
    bool classic = false; ///< entropy-only ablation: alpha=(1,0,0), P_fr=1
    double budget_sim_seconds = 600.0;
    int frame_skip = 0; ///< integrate every (frame_skip+1)-th frame
    long max_rounds = -1; ///< overrides the config when >= 0 (0 = unlimited)
};

enum class RunStatus {
    terminated = 0,       ///< exploration completed before the budget
    budget_exhausted = 2, ///< sim-time or round budget ran out
    config_error = 3,     ///< unreadable/invalid scene or config
    planning_failure = 4, ///< the planner could not produce a goal
};

int exit_code(RunStatus status);
const char* status_name(RunStatus status);

/** One metrics CSV row. */
struct MetricsRow {
    double sim_time = 0.0;
    SceneMetrics metrics;
    int round = 0;         ///< planning rounds completed when the row was taken
    double utility = 0.0;  ///< utility of the goal in effect
};

/** One planning round, as logged to the JSONL trace. */
struct RoundRecord {
    int round = 0;
    double sim_time = 0.0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero(); ///< planned from here
    double yaw = 0.0;
    int chosen = -1;
    double best_gain = 0.0;
    double best_utility = 0.0;
    Eigen::Vector3d goal_position = Eigen::Vector3d::Zero();
    double goal_yaw = 0.0;
    double path_length = 0.0;
    std::vector<CandidateReport> candidates;
};

struct RunResult {
    RunStatus status = RunStatus::config_error;
    std::string message; ///< human-readable failure detail
    double sim_time = 0.0;
    int rounds = 0;
    std::uint64_t seed = 0;
    bool classic = false;
    std::vector<MetricsRow> rows;
    std::vector<RoundRecord> round_records;
    SceneMetrics final_metrics;
};

/** Run one experiment: sense, integrate, plan and move until exploration
 *  completes or a budget runs out. With an output directory set, writes
 *  metrics.csv, trace.jsonl, summary.json, background.ply and one PLY mesh
 *  per object (plus history PGMs when configured). Deterministic for a fixed
 *  scene, config and seed. */
RunResult run_experiment(const RunOptions& options);

/** Serialization helpers shared by the runner and the seed-sweep command. */
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string summary_json(const RunOptions& options, const RunResult& result);

} // namespace scout

#endif // SCOUT_HARNESS_HPP
