// SPDX-License-Identifier: BSD-3-Clause

#include "scout/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace {

double median(std::vector<double> v)
{
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid] + v[mid - 1]);
}

void print_result(const scout::RunResult& r)
{
    std::printf("status: %s", scout::status_name(r.status));
    if (!r.message.empty()) {
        std::printf(" (%s)", r.message.c_str());
    }
    std::printf("\nsim_time: %.1f s, rounds: %d\n", r.sim_time, r.rounds);
    const scout::SceneMetrics& m = r.final_metrics;
    std::printf("explored_volume: %.2f m^3, frontiers: %lld\n", m.explored_volume,
                static_cast<long long>(m.frontier_count));
    std::printf("objects_found: %.1f %%, obj_within_dist: %.1f %%, obj_acc: %.4f m\n",
                m.objects_found_pct, m.obj_within_dist_pct, m.obj_acc);
    std::printf("bg_within_dist: %.1f %%, bg_acc: %.4f m, bg_comp: %.1f %%, obj_comp: %.1f %%\n",
                m.bg_within_dist_pct, m.bg_acc, m.bg_comp, m.obj_comp);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"scout: deterministic object-centric exploration experiments"};
    app.require_subcommand(1);

    scout::RunOptions opt;
    std::string mode = "semantic";

    CLI::App* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("--scene", opt.scene_path, "Scene JSON file")->required();
    run->add_option("--config", opt.config_path, "Config JSON file (built-in defaults if omitted)");
    run->add_option("--seed", opt.seed, "RNG seed");
    run->add_option("--mode", mode, "semantic (default) or classic (entropy-only ablation)")
        ->check(CLI::IsMember({"semantic", "classic"}));
    run->add_option("--budget-sim-seconds", opt.budget_sim_seconds,
                    "Simulated-time budget in seconds");
    run->add_option("--out", opt.out_dir, "Directory for metrics/trace/mesh artifacts");
    run->add_option("--frame-skip", opt.frame_skip,
                    "Integrate only every (N+1)-th frame (emulates slow mapping)");
    run->add_option("--max-rounds", opt.max_rounds,
                    "Planning-round budget; overrides the config (0 = unlimited)");

    int n_seeds = 5;
    std::uint64_t seed_base = 0;
    CLI::App* sweep = app.add_subcommand("sweep", "Run several seeds and report medians");
    sweep->add_option("--scene", opt.scene_path, "Scene JSON file")->required();
    sweep->add_option("--config", opt.config_path, "Config JSON file");
    sweep->add_option("--seeds", n_seeds, "Number of seeds")->check(CLI::PositiveNumber);
    sweep->add_option("--seed-base", seed_base, "First seed value");
    sweep->add_option("--mode", mode, "semantic or classic")
        ->check(CLI::IsMember({"semantic", "classic"}));
    sweep->add_option("--budget-sim-seconds", opt.budget_sim_seconds,
                      "Simulated-time budget per run in seconds");
    sweep->add_option("--out", opt.out_dir, "Directory; per-run artifacts go to seed_<k>/");
    sweep->add_option("--frame-skip", opt.frame_skip, "Integrate only every (N+1)-th frame");
    sweep->add_option("--max-rounds", opt.max_rounds, "Planning-round budget per run");

    CLI11_PARSE(app, argc, argv);
    opt.classic = mode == "classic";

    try {
        if (run->parsed()) {
            const scout::RunResult result = scout::run_experiment(opt);
            print_result(result);
            return scout::exit_code(result.status);
        }

        // Seed sweep.
        const std::string sweep_dir = opt.out_dir;
        nlohmann::json runs = nlohmann::json::array();
        std::vector<double> times, explored, found, obj_within;
        int worst = 0;
        for (int k = 0; k < n_seeds; ++k) {
            scout::RunOptions ro = opt;
            ro.seed = seed_base + static_cast<std::uint64_t>(k);
            ro.out_dir = sweep_dir.empty()
                             ? std::string()
                             : sweep_dir + "/seed_" + std::to_string(ro.seed);
            std::printf("== seed %llu ==\n", static_cast<unsigned long long>(ro.seed));
            const scout::RunResult result = scout::run_experiment(ro);
            print_result(result);
            worst = std::max(worst, scout::exit_code(result.status));
            times.push_back(result.sim_time);
            explored.push_back(result.final_metrics.explored_volume);
            found.push_back(result.final_metrics.objects_found_pct);
            obj_within.push_back(result.final_metrics.obj_within_dist_pct);
            nlohmann::json rj;
            rj["seed"] = result.seed;
            rj["status"] = scout::status_name(result.status);
            rj["sim_time"] = result.sim_time;
            rj["rounds"] = result.rounds;
            rj["explored_volume"] = result.final_metrics.explored_volume;
            rj["objects_found_pct"] = result.final_metrics.objects_found_pct;
            rj["obj_within_dist_pct"] = result.final_metrics.obj_within_dist_pct;
            runs.push_back(std::move(rj));
        }
        std::printf("== medians over %d seeds ==\n", n_seeds);
        std::printf("sim_time: %.1f s, explored: %.2f m^3, objects_found: %.1f %%, "
                    "obj_within_dist: %.1f %%\n",
                    median(times), median(explored), median(found), median(obj_within));
        if (!sweep_dir.empty()) {
            std::filesystem::create_directories(sweep_dir);
            nlohmann::json j;
            j["runs"] = std::move(runs);
            j["median_sim_time"] = median(times);
            j["median_explored_volume"] = median(explored);
            j["median_objects_found_pct"] = median(found);
            j["median_obj_within_dist_pct"] = median(obj_within);
            j["worst_exit_code"] = worst;
            std::ofstream f(sweep_dir + "/sweep.json", std::ios::binary);
            f << j.dump(2) << '\n';
        }
        return worst;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
