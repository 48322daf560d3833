// SPDX-License-Identifier: BSD-3-Clause

#include "scout/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace scout {

namespace {

using nlohmann::json;

void expect_keys(const json& j, const std::string& section,
                 std::initializer_list<const char*> allowed)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return it.key() == k; });
        if (!known) {
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + section);
        }
    }
}

void parse_camera(const json& j, CameraModel& cam)
{
    expect_keys(j, "camera", {"width", "height", "fx", "fy", "cx", "cy", "d_min", "d_max"});
    CameraModel c = CameraModel::centred(
        j.value("width", cam.width), j.value("height", cam.height), j.value("fx", cam.fx),
        j.value("fy", cam.fy), j.value("d_min", cam.d_min), j.value("d_max", cam.d_max));
    c.cx = j.value("cx", c.cx);
    c.cy = j.value("cy", c.cy);
    cam = c;
}

void parse_map(const json& j, OccupancyConfig& map)
{
    expect_keys(j, "map",
                {"resolution", "log_odds_hit", "log_odds_miss", "log_odds_clamp",
                 "free_threshold", "occupied_threshold"});
    map.resolution = j.value("resolution", map.resolution);
    map.log_odds_hit = j.value("log_odds_hit", map.log_odds_hit);
    map.log_odds_miss = j.value("log_odds_miss", map.log_odds_miss);
    map.log_odds_clamp = j.value("log_odds_clamp", map.log_odds_clamp);
    map.free_threshold = j.value("free_threshold", map.free_threshold);
    map.occupied_threshold = j.value("occupied_threshold", map.occupied_threshold);
}

void parse_planner(const json& j, PlannerConfig& p)
{
    expect_keys(j, "planner",
                {"pano_width", "pano_height", "pano_elevation_span", "d_min", "d_max", "hfov",
                 "d_bg", "d_obj", "alpha_entropy", "alpha_background", "alpha_objects",
                 "frontier_probability", "candidate_count", "v_max", "omega_max", "min_time",
                 "collision_radius", "lattice_step", "dijkstra_budget", "epsilon_gain"});
    p.pano_width = j.value("pano_width", p.pano_width);
    p.pano_height = j.value("pano_height", p.pano_height);
    p.pano_elevation_span = j.value("pano_elevation_span", p.pano_elevation_span);
    p.d_min = j.value("d_min", p.d_min);
    p.d_max = j.value("d_max", p.d_max);
    p.hfov = j.value("hfov", p.hfov);
    p.d_bg = j.value("d_bg", p.d_bg);
    p.d_obj = j.value("d_obj", p.d_obj);
    p.alpha_entropy = j.value("alpha_entropy", p.alpha_entropy);
    p.alpha_background = j.value("alpha_background", p.alpha_background);
    p.alpha_objects = j.value("alpha_objects", p.alpha_objects);
    p.frontier_probability = j.value("frontier_probability", p.frontier_probability);
    p.candidate_count = j.value("candidate_count", p.candidate_count);
    p.v_max = j.value("v_max", p.v_max);
    p.omega_max = j.value("omega_max", p.omega_max);
    p.min_time = j.value("min_time", p.min_time);
    p.collision_radius = j.value("collision_radius", p.collision_radius);
    p.lattice_step = j.value("lattice_step", p.lattice_step);
    p.dijkstra_budget = j.value("dijkstra_budget", p.dijkstra_budget);
    p.epsilon_gain = j.value("epsilon_gain", p.epsilon_gain);
}

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::size_t count_pixels(const BinaryImage& mask)
{
    std::size_t n = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            n += mask(x, y) ? 1 : 0;
        }
    }
    return n;
}

json vec_json(const Eigen::Vector3d& v)
{
    return json::array({v.x(), v.y(), v.z()});
}

json metrics_json(const SceneMetrics& m)
{
    json j;
    j["explored_volume"] = m.explored_volume;
    j["frontier_count"] = m.frontier_count;
    j["objects_found_pct"] = m.objects_found_pct;
    j["bg_acc"] = m.bg_acc;
    j["obj_acc"] = m.obj_acc;
    j["bg_comp"] = m.bg_comp;
    j["obj_comp"] = m.obj_comp;
    j["bg_within_dist_pct"] = m.bg_within_dist_pct;
    j["obj_within_dist_pct"] = m.obj_within_dist_pct;
    return j;
}

json round_json(const RoundRecord& r, const PlannerConfig& p)
{
    json j;
    j["round"] = r.round;
    j["sim_time"] = r.sim_time;
    j["position"] = vec_json(r.position);
    j["yaw"] = r.yaw;
    j["alpha"] = json::array({p.alpha_entropy, p.alpha_background, p.alpha_objects});
    j["frontier_probability"] = p.frontier_probability;
    json cands = json::array();
    for (const CandidateReport& c : r.candidates) {
        json cj;
        cj["sample"] = vec_json(c.sample);
        cj["pool"] = std::string(1, c.pool);
        cj["view"] = vec_json(c.view);
        cj["reached"] = c.reached;
        cj["path_length"] = c.path_length;
        cj["gain"] = c.gain;
        cj["yaw"] = c.yaw;
        cj["travel_time"] = c.travel_time;
        cj["utility"] = c.utility;
        cands.push_back(std::move(cj));
    }
    j["candidates"] = std::move(cands);
    j["chosen"] = r.chosen;
    j["best_gain"] = r.best_gain;
    if (r.chosen >= 0) {
        json g;
        g["position"] = vec_json(r.goal_position);
        g["yaw"] = r.goal_yaw;
        g["path_length"] = r.path_length;
        g["utility"] = r.best_utility;
        j["goal"] = std::move(g);
    } else {
        j["goal"] = nullptr;
    }
    return j;
}

/** Ground-truth detections for one frame: exact instance masks, optionally
 *  eroded, dropped when smaller than the (resolution-scaled) pixel floor. */
std::vector<Detection> make_detections(const RenderOutput& render, const Scene& scene,
                                       const HarnessConfig& hc)
{
    const double area_scale =
        static_cast<double>(hc.camera.width) * hc.camera.height / (320.0 * 240.0);
    const std::size_t min_pixels =
        static_cast<std::size_t>(std::max<long>(1, std::lround(hc.min_mask_pixels * area_scale)));
    std::vector<Detection> detections;
    for (std::size_t i = 0; i < render.masks.size(); ++i) {
        BinaryImage mask = render.masks[i];
        if (hc.erode_iterations > 0) {
            mask = erode_mask(mask, hc.erode_iterations);
        }
        if (count_pixels(mask) < min_pixels) {
            continue;
        }
        const int instance = render.mask_instances[i];
        detections.push_back(
            {std::move(mask), scene.instances[static_cast<std::size_t>(instance)].label});
    }
    return detections;
}

/** One frame of the object pipeline: render known-object masks, match the
 *  frame's detections against them, then fuse matched detections, create
 *  submaps for unmatched ones and run the undetected-but-visible update. */
void integrate_objects(ObjectStore& store, const OccupancyMap& map, const DepthImage& depth,
                       const ColourImage& colour, const std::vector<Detection>& detections,
                       const RigidTransform& T_WC, const HarnessConfig& hc)
{
    std::vector<BinaryImage> rendered;
    std::vector<int> rendered_ids;
    const std::size_t n_known = store.size();
    if (n_known > 0) {
        rendered = render_object_masks(store, map, T_WC, hc.camera);
        rendered_ids.reserve(n_known);
        for (std::size_t i = 0; i < n_known; ++i) {
            rendered_ids.push_back(store.at(i).id());
        }
    }
    if (detections.empty() && n_known == 0) {
        return;
    }

    const MatchResult match =
        match_detections(detections, rendered, rendered_ids, hc.iou_threshold);
    std::map<int, std::size_t> index_of_id;
    for (std::size_t i = 0; i < n_known; ++i) {
        index_of_id[rendered_ids[i]] = i;
    }

    const BinaryImage no_mask(hc.camera.width, hc.camera.height, std::uint8_t{0});
    std::vector<char> got_detection(n_known, 0);
    for (std::size_t d = 0; d < detections.size(); ++d) {
        const int id = match.detection_to_object[d];
        if (id < 0) {
            continue;
        }
        const std::size_t i = index_of_id.at(id);
        got_detection[i] = 1;
        store.at(i).integrate(depth, colour, detections[d].mask, rendered[i], T_WC, hc.camera,
                              /*detected=*/true, hc.fuse_fg_zero);
    }
    for (std::size_t i = 0; i < n_known; ++i) {
        if (!got_detection[i] && count_pixels(rendered[i]) > 0) {
            store.at(i).integrate(depth, colour, no_mask, rendered[i], T_WC, hc.camera,
                                  /*detected=*/false, hc.fuse_fg_zero);
        }
    }
    for (const int d : match.unmatched_detections) {
        ObjectSubmap& submap = store.create(detections[static_cast<std::size_t>(d)].label);
        submap.integrate(depth, colour, detections[static_cast<std::size_t>(d)].mask, no_mask,
                         T_WC, hc.camera, /*detected=*/true, hc.fuse_fg_zero);
    }
}

} // namespace

void HarnessConfig::validate() const
{
    camera.validate();
    planner.validate();
    noise.validate();
    OccupancyConfig probe = map;
    probe.bounds = Eigen::AlignedBox3d(Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones());
    probe.validate();
    if (!(history_cell > 0.0)) {
        throw std::invalid_argument("config: history cell size must be positive");
    }
    if (object_weight_saturation <= 0) {
        throw std::invalid_argument("config: weight saturation must be positive");
    }
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw std::invalid_argument("config: iou threshold must be in (0, 1]");
    }
    if (min_mask_pixels < 0 || erode_iterations < 0) {
        throw std::invalid_argument("config: mask filter values must be non-negative");
    }
    if (!(dt > 0.0)) {
        throw std::invalid_argument("config: dt must be positive");
    }
    if (!(start_clearance > 0.0)) {
        throw std::invalid_argument("config: start clearance must be positive");
    }
}

HarnessConfig load_harness_config(const std::string& path)
{
    HarnessConfig hc;
    if (path.empty()) {
        return hc;
    }
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file: " + path);
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }
    expect_keys(j, "config root",
                {"camera", "map", "planner", "noise", "history", "objects", "dt",
                 "start_clearance", "max_rounds"});
    if (j.contains("camera")) {
        parse_camera(j["camera"], hc.camera);
    }
    if (j.contains("map")) {
        parse_map(j["map"], hc.map);
    }
    if (j.contains("planner")) {
        parse_planner(j["planner"], hc.planner);
    }
    if (j.contains("noise")) {
        const json& n = j["noise"];
        expect_keys(n, "noise", {"enabled", "sigma_min", "sigma_max", "slope", "seed"});
        hc.noise_enabled = n.value("enabled", hc.noise_enabled);
        hc.noise.sigma_min = n.value("sigma_min", hc.noise.sigma_min);
        hc.noise.sigma_max = n.value("sigma_max", hc.noise.sigma_max);
        hc.noise.slope = n.value("slope", hc.noise.slope);
        hc.noise.seed = n.value("seed", hc.noise.seed);
    }
    if (j.contains("history")) {
        const json& h = j["history"];
        expect_keys(h, "history", {"enabled", "cell_size", "dilate", "dump"});
        hc.history_enabled = h.value("enabled", hc.history_enabled);
        hc.history_cell = h.value("cell_size", hc.history_cell);
        hc.history_dilate = h.value("dilate", hc.history_dilate);
        hc.history_dump = h.value("dump", hc.history_dump);
    }
    if (j.contains("objects")) {
        const json& o = j["objects"];
        expect_keys(o, "objects",
                    {"weight_saturation", "iou_threshold", "min_mask_pixels",
                     "erode_iterations", "fuse_fg_zero"});
        hc.object_weight_saturation = o.value("weight_saturation", hc.object_weight_saturation);
        hc.iou_threshold = o.value("iou_threshold", hc.iou_threshold);
        hc.min_mask_pixels = o.value("min_mask_pixels", hc.min_mask_pixels);
        hc.erode_iterations = o.value("erode_iterations", hc.erode_iterations);
        hc.fuse_fg_zero = o.value("fuse_fg_zero", hc.fuse_fg_zero);
    }
    hc.dt = j.value("dt", hc.dt);
    hc.start_clearance = j.value("start_clearance", hc.start_clearance);
    hc.max_rounds = j.value("max_rounds", hc.max_rounds);
    return hc;
}

int exit_code(RunStatus status)
{
    return static_cast<int>(status);
}

const char* status_name(RunStatus status)
{
    switch (status) {
    case RunStatus::terminated:
        return "terminated";
    case RunStatus::budget_exhausted:
        return "budget_exhausted";
    case RunStatus::config_error:
        return "config_error";
    case RunStatus::planning_failure:
        return "planning_failure";
    }
    return "unknown";
}

std::string metrics_csv(const std::vector<MetricsRow>& rows)
{
    std::string out = "sim_time,explored_volume,frontier_count,objects_found_pct,bg_acc,obj_acc,"
                      "bg_comp,obj_comp,bg_within_dist_pct,obj_within_dist_pct,round,"
                      "utility_of_goal\n";
    for (const MetricsRow& r : rows) {
        out += fmt(r.sim_time);
        out += ',';
        out += fmt(r.metrics.explored_volume);
        out += ',';
        out += std::to_string(r.metrics.frontier_count);
        out += ',';
        out += fmt(r.metrics.objects_found_pct);
        out += ',';
        out += fmt(r.metrics.bg_acc);
        out += ',';
        out += fmt(r.metrics.obj_acc);
        out += ',';
        out += fmt(r.metrics.bg_comp);
        out += ',';
        out += fmt(r.metrics.obj_comp);
        out += ',';
        out += fmt(r.metrics.bg_within_dist_pct);
        out += ',';
        out += fmt(r.metrics.obj_within_dist_pct);
        out += ',';
        out += std::to_string(r.round);
        out += ',';
        out += fmt(r.utility);
        out += '\n';
    }
    return out;
}

std::string summary_json(const RunOptions& options, const RunResult& result)
{
    json j;
    j["status"] = status_name(result.status);
    j["exit_code"] = exit_code(result.status);
    j["message"] = result.message;
    j["sim_time"] = result.sim_time;
    j["rounds"] = result.rounds;
    j["seed"] = result.seed;
    j["mode"] = result.classic ? "classic" : "semantic";
    j["scene"] = options.scene_path;
    j["budget_sim_seconds"] = options.budget_sim_seconds;
    j["frame_skip"] = options.frame_skip;
    j["final_metrics"] = metrics_json(result.final_metrics);
    return j.dump(2);
}

RunResult run_experiment(const RunOptions& options)
{
    RunResult result;
    result.seed = options.seed;
    result.classic = options.classic;

    Scene scene;
    HarnessConfig hc;
    try {
        hc = load_harness_config(options.config_path);
        if (options.classic) {
            hc.planner.alpha_entropy = 1.0;
            hc.planner.alpha_background = 0.0;
            hc.planner.alpha_objects = 0.0;
            hc.planner.frontier_probability = 1.0;
        }
        hc.validate();
        scene = Scene::load(options.scene_path);
        if (!(options.budget_sim_seconds > 0.0)) {
            throw std::invalid_argument("budget must be positive");
        }
        if (options.frame_skip < 0) {
            throw std::invalid_argument("frame skip must be non-negative");
        }
    } catch (const std::exception& e) {
        result.status = RunStatus::config_error;
        result.message = e.what();
        return result;
    }

    const GroundTruth gt(scene);

    // The start pose must have room for the platform before any free space is
    // carved around it; otherwise the carve would punch through real geometry.
    {
        bool inside_solid = false;
        for (const SceneInstance& inst : scene.instances) {
            if (inst.box && inst.box->contains(scene.start_position)) {
                inside_solid = true;
            }
        }
        const double d_near = gt.surface_distance(scene.start_position);
        if (inside_solid || d_near <= hc.planner.collision_radius + hc.map.resolution) {
            result.status = RunStatus::config_error;
            result.message = "start position unreachable: inside or too close to geometry";
            return result;
        }
        hc.start_clearance = std::min(hc.start_clearance, d_near - hc.map.resolution);
    }

    OccupancyConfig map_cfg = hc.map;
    map_cfg.bounds = scene.bounds;
    OccupancyMap map(map_cfg);
    map.update_frontiers(map.carve_free_sphere(scene.start_position, hc.start_clearance));

    ObjectStore store(scene.class_table(), hc.object_weight_saturation);
    const PanoramaModel pano{hc.planner.pano_width, hc.planner.pano_height,
                             hc.planner.pano_elevation_span};
    DepthHistory history(scene.bounds, hc.history_cell, pano, hc.history_dilate);
    Simulator sim(scene);
    Planner planner(hc.planner, options.seed);
    std::mt19937_64 noise_rng(options.seed ^ (hc.noise.seed + 0x6a09e667f3bcc909ULL));

    MavState state{scene.start_position, scene.start_yaw};
    std::vector<Waypoint> path;
    bool need_plan = true;
    bool any_integration = false;
    long tick = 0;
    int round = 0;
    double sim_time = 0.0;
    double next_row = 1.0;
    double current_utility = 0.0;
    SceneMetrics cached;
    const long max_rounds = options.max_rounds >= 0 ? options.max_rounds : hc.max_rounds;

    result.status = RunStatus::budget_exhausted;
    try {
        while (true) {
            // Sense and integrate (honouring the frame-skip emulation).
            if (tick % (options.frame_skip + 1) == 0) {
                const RigidTransform T_WC = camera_pose(state.position, state.yaw);
                RenderOutput frame = sim.render(T_WC, hc.camera);
                if (hc.noise_enabled) {
                    apply_noise(frame.depth, hc.noise, noise_rng);
                }
                map.update_frontiers(
                    map.integrate_frame(frame.depth, frame.colour, T_WC, hc.camera));
                if (hc.history_enabled) {
                    history.record(frame.depth, T_WC, hc.camera);
                }
                const std::vector<Detection> detections = make_detections(frame, scene, hc);
                integrate_objects(store, map, frame.depth, frame.colour, detections, T_WC, hc);
                any_integration = true;
            }

            // Plan when the previous goal is done (or none exists yet).
            if (need_plan) {
                ++round;
                PlanRoundResult pr = planner.plan_round(
                    map, store, hc.history_enabled ? &history : nullptr, state.position,
                    state.yaw);

                RoundRecord rec;
                rec.round = round;
                rec.sim_time = sim_time;
                rec.position = state.position;
                rec.yaw = state.yaw;
                rec.chosen = pr.chosen;
                rec.best_gain = pr.best_gain;
                rec.best_utility = pr.best_utility;
                if (pr.chosen >= 0) {
                    rec.goal_position = pr.path.back().position;
                    rec.goal_yaw = pr.path.back().yaw;
                    rec.path_length = pr.candidates[static_cast<std::size_t>(pr.chosen)]
                                          .path_length;
                }
                rec.candidates = pr.candidates;
                result.round_records.push_back(std::move(rec));

                cached = compute_metrics(map, store, gt, hc.planner.d_bg, hc.planner.d_obj);
                result.rows.push_back(
                    {sim_time, cached, round, pr.chosen >= 0 ? pr.best_utility : 0.0});

                if (exploration_complete(any_integration, map, store, round, pr.best_gain,
                                         hc.planner)) {
                    result.status = RunStatus::terminated;
                    break;
                }
                if (pr.chosen < 0 || pr.path.empty()) {
                    result.status = RunStatus::planning_failure;
                    result.message = "no productive goal before completion";
                    break;
                }
                path = std::move(pr.path);
                current_utility = pr.best_utility;
                need_plan = false;
                if (max_rounds > 0 && round >= max_rounds) {
                    result.status = RunStatus::budget_exhausted;
                    result.message = "round budget exhausted";
                    break;
                }
            }

            // Move one tick along the active path.
            const StepResult step =
                step_along(state, path, hc.dt, hc.planner.v_max, hc.planner.omega_max);
            state = step.state;
            ++tick;
            sim_time = static_cast<double>(tick) * hc.dt;
            if (step.arrived) {
                need_plan = true;
            }

            if (sim_time + 1e-9 >= next_row) {
                SceneMetrics m = compute_metrics(map, store, gt, hc.planner.d_bg,
                                                 hc.planner.d_obj, 0.05,
                                                 /*background_quality=*/false);
                m.bg_acc = cached.bg_acc;
                m.bg_comp = cached.bg_comp;
                cached = m;
                result.rows.push_back({sim_time, cached, round, current_utility});
                next_row += 1.0;
            }
            if (sim_time + 1e-9 >= options.budget_sim_seconds) {
                result.status = RunStatus::budget_exhausted;
                break;
            }
        }
    } catch (const PlanningFailure& e) {
        result.status = RunStatus::planning_failure;
        result.message = e.what();
    }

    result.sim_time = sim_time;
    result.rounds = round;
    result.final_metrics =
        compute_metrics(map, store, gt, hc.planner.d_bg, hc.planner.d_obj);

    if (!options.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(options.out_dir);
        {
            std::ofstream f(options.out_dir + "/metrics.csv", std::ios::binary);
            f << metrics_csv(result.rows);
        }
        {
            std::ofstream f(options.out_dir + "/trace.jsonl", std::ios::binary);
            for (const RoundRecord& r : result.round_records) {
                f << round_json(r, hc.planner).dump() << '\n';
            }
        }
        {
            std::ofstream f(options.out_dir + "/summary.json", std::ios::binary);
            f << summary_json(options, result) << '\n';
        }
        map.export_ply(options.out_dir + "/background.ply");
        store.export_meshes(options.out_dir);
        if (hc.history_dump) {
            const std::string dir = options.out_dir + "/history";
            fs::create_directories(dir);
            history.dump_pgm(dir);
        }
    }
    return result;
}

} // namespace scout
