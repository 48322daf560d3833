// SPDX-License-Identifier: BSD-3-Clause

#include "scout/planner.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <queue>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scout {

void PlannerConfig::validate() const
{
    PanoramaModel pano{pano_width, pano_height, pano_elevation_span};
    pano.validate();
    if (!(d_min >= 0.0) || !(d_max > d_min)) {
        throw std::invalid_argument("planner: need 0 <= d_min < d_max");
    }
    if (!(hfov > 0.0) || hfov >= 2.0 * kPi) {
        throw std::invalid_argument("planner: hfov must be in (0, 2*pi)");
    }
    if (!(d_bg > 0.0) || !(d_obj > 0.0)) {
        throw std::invalid_argument("planner: desired observation distances must be positive");
    }
    if (alpha_entropy < 0.0 || alpha_background < 0.0 || alpha_objects < 0.0) {
        throw std::invalid_argument("planner: gain weights must be non-negative");
    }
    if (std::abs(alpha_entropy + alpha_background + alpha_objects - 1.0) > 1e-9) {
        throw std::invalid_argument("planner: gain weights must sum to 1");
    }
    if (!(d_obj < d_bg)) {
        throw std::invalid_argument("planner: d_obj must be smaller than d_bg");
    }
    if (frontier_probability < 0.0 || frontier_probability > 1.0) {
        throw std::invalid_argument("planner: frontier probability must be in [0, 1]");
    }
    if (candidate_count < 1) {
        throw std::invalid_argument("planner: need at least one candidate");
    }
    if (!(v_max > 0.0) || !(omega_max > 0.0)) {
        throw std::invalid_argument("planner: motion rates must be positive");
    }
    if (!(min_time > 0.0)) {
        throw std::invalid_argument("planner: the travel-time floor must be positive");
    }
    if (!(collision_radius >= 0.0)) {
        throw std::invalid_argument("planner: collision radius must be non-negative");
    }
    if (!(lattice_step > 0.0)) {
        throw std::invalid_argument("planner: lattice step must be positive");
    }
    if (dijkstra_budget < 1) {
        throw std::invalid_argument("planner: node budget must be positive");
    }
    if (!(epsilon_gain >= 0.0)) {
        throw std::invalid_argument("planner: epsilon gain must be non-negative");
    }
}

double distance_gain(double d_node, double d_exp, double d_des, double d_max)
{
    if (d_node <= d_des || d_node <= d_exp) {
        return 0.0;
    }
    return (d_node - std::max(d_exp, d_des)) / d_max;
}

GainImages compute_gain_images(const OccupancyMap& map, const ObjectStore& objects,
                               const Eigen::Vector3d& position, const PlannerConfig& cfg)
{
    const PanoramaModel pano{cfg.pano_width, cfg.pano_height, cfg.pano_elevation_span};
    GainImages out{GainImage(pano.width, pano.height, 0.0),
                   GainImage(pano.width, pano.height, 0.0),
                   GainImage(pano.width, pano.height, 0.0)};
    for (int row = 0; row < pano.height; ++row) {
        for (int col = 0; col < pano.width; ++col) {
            const Eigen::Vector3d dir = pano.direction(col, row);
            out.entropy(col, row) = map.raycast_entropy(position, dir, cfg.d_min, cfg.d_max);
            double bg_t = std::numeric_limits<double>::infinity();
            if (auto hit = map.raycast_first_hit(position, dir, cfg.d_max)) {
                bg_t = hit->distance;
                const double d_exp = (hit->voxel_centre - position).norm();
                out.background(col, row) = std::min(
                    1.0, distance_gain(hit->min_obs_dist, d_exp, cfg.d_bg, cfg.d_max));
            }
            // An object pixel only scores when no background surface stands
            // clearly in front of the crossing (the object's own voxels are
            // occupied in the background map too, and the occupancy hit band
            // starts up to two voxels before the surface, so allow three).
            if (auto hit = objects.nearest_crossing(position, dir, cfg.d_min, cfg.d_max)) {
                if (hit->second.distance < bg_t + 3.0 * map.resolution()) {
                    out.objects(col, row) =
                        std::min(1.0, distance_gain(hit->second.min_obs_dist,
                                                    hit->second.distance, cfg.d_obj, cfg.d_max));
                }
            }
        }
    }
    return out;
}

GainImage combine_gain_images(const GainImages& gains, const PlannerConfig& cfg,
                              const BinaryImage* history_mask)
{
    const int w = gains.entropy.width();
    const int h = gains.entropy.height();
    if (gains.background.width() != w || gains.background.height() != h
        || gains.objects.width() != w || gains.objects.height() != h) {
        throw std::invalid_argument("gain image sizes differ");
    }
    if (history_mask && (history_mask->width() != w || history_mask->height() != h)) {
        throw std::invalid_argument("history mask size does not match the gain images");
    }
    GainImage out(w, h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double g = cfg.alpha_entropy * gains.entropy(x, y)
                       + cfg.alpha_background * gains.background(x, y)
                       + cfg.alpha_objects * gains.objects(x, y);
            if (history_mask && !(*history_mask)(x, y)) {
                g = 0.0;
            }
            out(x, y) = g;
        }
    }
    return out;
}

YawChoice best_yaw(const GainImage& combined, double hfov)
{
    const int w = combined.width();
    const int h = combined.height();
    const double step = 2.0 * kPi / w;
    const int window = std::min(w, std::max(1, static_cast<int>(std::lround(hfov / step))));

    std::vector<double> colsum(static_cast<std::size_t>(w), 0.0);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            colsum[static_cast<std::size_t>(x)] += combined(x, y);
        }
    }

    YawChoice choice;
    double best_sum = -1.0;
    for (int c = 0; c < w; ++c) {
        double s = 0.0;
        for (int k = 0; k < window; ++k) {
            s += colsum[static_cast<std::size_t>((c + k) % w)];
        }
        if (s > best_sum) {
            best_sum = s;
            choice.start_col = c;
        }
    }
    choice.gain = best_sum / (static_cast<double>(window) * h);
    const double centre_col = choice.start_col + 0.5 * (window - 1);
    choice.yaw = wrap_angle((centre_col - 0.5 * w) * step);
    return choice;
}

double estimate_travel_time(double path_length, double yaw_change, const PlannerConfig& cfg)
{
    return path_length / cfg.v_max + std::abs(wrap_angle(yaw_change)) / cfg.omega_max;
}

// ---------------------------------------------------------------------------
// PathPlanner
// ---------------------------------------------------------------------------

namespace {

/** The 26 lattice offsets in a fixed deterministic order. */
std::array<Eigen::Vector3i, 26> lattice_offsets()
{
    std::array<Eigen::Vector3i, 26> out;
    std::size_t n = 0;
    for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) {
                    continue;
                }
                out[n++] = Eigen::Vector3i(dx, dy, dz);
            }
        }
    }
    return out;
}

} // namespace

PathPlanner::PathPlanner(const OccupancyMap& map, const Eigen::Vector3d& start,
                         const PlannerConfig& cfg)
    : map_(map), step_(cfg.lattice_step), radius_(cfg.collision_radius)
{
    if (!map.bounds().contains(start)) {
        throw PlanningFailure("path planning start lies outside the mapped volume");
    }

    // Snapshot the free-state grid once: a search runs on the order of a
    // million edge-collision checks, and enumerating a flat byte array beats
    // descending the octree for each one. Unallocated voxels stay 0, so the
    // snapshot blocks unknown space and leaves the outside of the volume
    // unconstrained, matching OccupancyMap::segment_collision_free.
    dims_ = map.dims();
    grid_min_ = map.bounds().min();
    res_ = map.resolution();
    free_.assign(static_cast<std::size_t>(dims_.x()) * static_cast<std::size_t>(dims_.y())
                     * static_cast<std::size_t>(dims_.z()),
                 0);
    const float free_lo = map.free_log_odds_threshold();
    map.for_each_allocated([&](const Eigen::Vector3i& v, const OccupancyVoxel& vox) {
        if (vox.log_odds < free_lo) {
            free_[(static_cast<std::size_t>(v.z()) * static_cast<std::size_t>(dims_.y())
                   + static_cast<std::size_t>(v.y()))
                      * static_cast<std::size_t>(dims_.x())
                  + static_cast<std::size_t>(v.x())] = 1;
        }
    });

    const auto offsets = lattice_offsets();
    auto cell_pos = [&](const Eigen::Vector3i& c) {
        return start + step_ * c.cast<double>();
    };

    struct QueueEntry {
        double dist;
        long seq;
        Eigen::Vector3i cell;
        int parent;
    };
    struct Later {
        bool operator()(const QueueEntry& a, const QueueEntry& b) const
        {
            return a.dist != b.dist ? a.dist > b.dist : a.seq > b.seq;
        }
    };
    std::priority_queue<QueueEntry, std::vector<QueueEntry>, Later> queue;
    const auto pack = [](const Eigen::Vector3i& c) {
        return ((static_cast<std::uint64_t>(c.x() + (1 << 20))) << 42)
               | ((static_cast<std::uint64_t>(c.y() + (1 << 20))) << 21)
               | static_cast<std::uint64_t>(c.z() + (1 << 20));
    };
    std::unordered_set<std::uint64_t> settled;

    // When the start already violates the inflation radius (a voxel near the
    // parked platform flipped after the last plan), strict expansion would
    // find zero edges and the platform would deadlock. Escape mode on the
    // start's own edges lets it retreat from the blockers it is touching.
    const bool start_clear = capsule_free(start, start, radius_);

    long seq = 0;
    queue.push({0.0, seq++, Eigen::Vector3i::Zero(), -1});
    nodes_.reserve(static_cast<std::size_t>(cfg.dijkstra_budget));

    while (!queue.empty() && nodes_.size() < static_cast<std::size_t>(cfg.dijkstra_budget)) {
        const QueueEntry top = queue.top();
        queue.pop();
        if (!settled.insert(pack(top.cell)).second) {
            continue;
        }
        const int index = static_cast<int>(nodes_.size());
        nodes_.push_back({top.cell, cell_pos(top.cell), top.parent, top.dist});

        const Eigen::Vector3d from = nodes_.back().pos;
        const bool escape = index == 0 && !start_clear;
        for (const Eigen::Vector3i& off : offsets) {
            const Eigen::Vector3i nc = top.cell + off;
            if (settled.count(pack(nc))) {
                continue;
            }
            const Eigen::Vector3d np = cell_pos(nc);
            if (!map.bounds().contains(np)) {
                continue;
            }
            if (!capsule_free(from, np, radius_, escape)) {
                continue;
            }
            queue.push({top.dist + step_ * off.cast<double>().norm(), seq++, nc, index});
        }
    }
}

bool PathPlanner::capsule_free(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double radius,
                               bool escape_from_a) const
{
    Eigen::Vector3i vlo;
    Eigen::Vector3i vhi;
    for (int i = 0; i < 3; ++i) {
        const double smin = std::min(a[i], b[i]) - radius;
        const double smax = std::max(a[i], b[i]) + radius;
        vlo[i] = std::max(0, static_cast<int>(std::ceil((smin - grid_min_[i]) / res_ - 0.5)));
        vhi[i] = std::min(dims_[i] - 1,
                          static_cast<int>(std::floor((smax - grid_min_[i]) / res_ - 0.5)));
        if (vlo[i] > vhi[i]) {
            return true; // no voxel centre can lie inside the capsule
        }
    }
    const Eigen::Vector3d ab = b - a;
    const double len2 = ab.squaredNorm();
    const double r2 = radius * radius;
    Eigen::Vector3d c;
    for (int z = vlo.z(); z <= vhi.z(); ++z) {
        c.z() = grid_min_.z() + (static_cast<double>(z) + 0.5) * res_;
        for (int y = vlo.y(); y <= vhi.y(); ++y) {
            c.y() = grid_min_.y() + (static_cast<double>(y) + 0.5) * res_;
            const std::uint8_t* row = free_.data()
                                      + (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims_.y())
                                         + static_cast<std::size_t>(y))
                                            * static_cast<std::size_t>(dims_.x());
            for (int x = vlo.x(); x <= vhi.x(); ++x) {
                if (row[x] != 0) {
                    continue; // free voxels never block; skip the distance test
                }
                c.x() = grid_min_.x() + (static_cast<double>(x) + 0.5) * res_;
                const Eigen::Vector3d ac = c - a;
                double d2 = 0.0;
                if (len2 <= 0.0) {
                    d2 = ac.squaredNorm();
                } else {
                    const double t = std::clamp(ac.dot(ab) / len2, 0.0, 1.0);
                    d2 = (ac - t * ab).squaredNorm();
                }
                if (d2 <= r2) {
                    if (escape_from_a) {
                        const double d2a = ac.squaredNorm();
                        const double d2b = (c - b).squaredNorm();
                        if (d2a <= r2 && d2b >= d2a) {
                            continue; // retreating from a blocker we already touch
                        }
                    }
                    return false;
                }
            }
        }
    }
    return true;
}

std::vector<Eigen::Vector3d> PathPlanner::shortcut(std::vector<Eigen::Vector3d> path) const
{
    if (path.size() < 3) {
        return path;
    }
    std::vector<Eigen::Vector3d> out;
    out.push_back(path.front());
    std::size_t i = 0;
    while (i + 1 < path.size()) {
        std::size_t next = i + 1;
        for (std::size_t j = path.size() - 1; j > i + 1; --j) {
            if (capsule_free(path[i], path[j], radius_)) {
                next = j;
                break;
            }
        }
        out.push_back(path[next]);
        i = next;
    }
    return out;
}

PathPlanner::Plan PathPlanner::plan_to(const Eigen::Vector3d& target) const
{
    Plan plan;
    if (nodes_.empty()) {
        return plan;
    }
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const double d2 = (nodes_[i].pos - target).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }

    std::vector<Eigen::Vector3d> raw;
    for (int i = static_cast<int>(best); i != -1; i = nodes_[static_cast<std::size_t>(i)].parent) {
        raw.push_back(nodes_[static_cast<std::size_t>(i)].pos);
    }
    std::reverse(raw.begin(), raw.end());

    // Creep from the nearest node straight towards the target as far as the
    // collision radius allows, so in open space the path ends at the target.
    // The creep uses two voxels of extra clearance: parking exactly at the
    // inflation boundary means a single voxel flipping next to the parked
    // platform (sensor noise, a late surface observation) would strand it
    // inside the inflated zone.
    const double park_radius = radius_ + 2.0 * res_;
    const Eigen::Vector3d gap = target - raw.back();
    if (gap.norm() > 1e-9 && map_.bounds().contains(target)) {
        for (int k = 16; k >= 1; --k) {
            const Eigen::Vector3d probe = raw.back() + gap * (static_cast<double>(k) / 16.0);
            if (capsule_free(raw.back(), probe, park_radius)) {
                raw.push_back(probe);
                break;
            }
        }
    }

    plan.path = shortcut(std::move(raw));
    for (std::size_t i = 1; i < plan.path.size(); ++i) {
        plan.length += (plan.path[i] - plan.path[i - 1]).norm();
    }
    plan.reached = (plan.path.back() - target).norm() <= 2.0 * step_;
    return plan;
}

// ---------------------------------------------------------------------------
// Round planning
// ---------------------------------------------------------------------------

std::vector<Waypoint> assign_path_yaws(const std::vector<Eigen::Vector3d>& path,
                                       double current_yaw, double goal_yaw,
                                       const OccupancyMap& map, const ObjectStore& objects,
                                       const DepthHistory* history, const PlannerConfig& cfg)
{
    std::vector<Waypoint> out;
    if (path.empty()) {
        return out;
    }
    out.reserve(path.size());
    if (path.size() == 1) {
        out.push_back({path[0], goal_yaw});
        return out;
    }
    out.push_back({path.front(), current_yaw});
    for (std::size_t i = 1; i + 1 < path.size(); ++i) {
        const GainImages gains = compute_gain_images(map, objects, path[i], cfg);
        const BinaryImage* mask = history ? &history->mask_at(path[i]) : nullptr;
        const GainImage combined = combine_gain_images(gains, cfg, mask);
        out.push_back({path[i], best_yaw(combined, cfg.hfov).yaw});
    }
    out.push_back({path.back(), goal_yaw});
    return out;
}

Planner::Planner(PlannerConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed)
{
    cfg_.validate();
}

std::vector<std::pair<Eigen::Vector3d, char>>
Planner::sample_candidates(const OccupancyMap& map, const ObjectStore& objects)
{
    // Pools in a fixed order so sampling is reproducible: frontier voxel
    // centres, and per-object lists of surface voxel centres.
    std::vector<Eigen::Vector3d> frontier_pool;
    frontier_pool.reserve(map.frontiers().size());
    for (std::uint64_t key : map.frontiers()) {
        frontier_pool.push_back(map.voxel_centre(OccupancyMap::voxel_of_key(key)));
    }
    std::vector<std::vector<Eigen::Vector3d>> per_object;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const ObjectSubmap& obj = objects.at(i);
        std::vector<Eigen::Vector3d> voxels;
        obj.for_each_weighted([&](const ObjectSubmap::VoxelView& v) {
            if (v.fg > 0.5 && std::abs(v.tsdf) < 0.25) {
                voxels.push_back(obj.voxel_centre(v.index));
            }
        });
        if (!voxels.empty()) {
            per_object.push_back(std::move(voxels));
        }
    }

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto draw_from = [this](std::vector<Eigen::Vector3d>& pool) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t i = pick(rng_);
        const Eigen::Vector3d p = pool[i];
        pool[i] = pool.back();
        pool.pop_back();
        return p;
    };

    std::vector<std::pair<Eigen::Vector3d, char>> samples;
    samples.reserve(static_cast<std::size_t>(cfg_.candidate_count));
    for (int k = 0; k < cfg_.candidate_count; ++k) {
        if (frontier_pool.empty() && per_object.empty()) {
            break;
        }
        const double u = u01(rng_);
        bool take_frontier = u < cfg_.frontier_probability;
        if (take_frontier && frontier_pool.empty()) {
            take_frontier = false;
        } else if (!take_frontier && per_object.empty()) {
            take_frontier = true;
        }
        if (take_frontier) {
            samples.emplace_back(draw_from(frontier_pool), 'F');
        } else {
            std::uniform_int_distribution<std::size_t> pick_obj(0, per_object.size() - 1);
            const std::size_t oi = pick_obj(rng_);
            samples.emplace_back(draw_from(per_object[oi]), 'O');
            if (per_object[oi].empty()) {
                per_object.erase(per_object.begin() + static_cast<std::ptrdiff_t>(oi));
            }
        }
    }
    return samples;
}

PlanRoundResult Planner::plan_round(const OccupancyMap& map, const ObjectStore& objects,
                                    const DepthHistory* history, const Eigen::Vector3d& position,
                                    double yaw)
{
    PlanRoundResult out;
    std::vector<std::pair<Eigen::Vector3d, char>> samples = sample_candidates(map, objects);
    if (samples.empty()) {
        return out;
    }

    PathPlanner router(map, position, cfg_);

    out.candidates.resize(samples.size());
    std::vector<std::vector<Eigen::Vector3d>> paths(samples.size());

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t i = 0; i < samples.size(); ++i) {
        PathPlanner::Plan plan = router.plan_to(samples[i].first);
        CandidateReport r;
        r.sample = samples[i].first;
        r.pool = samples[i].second;
        r.view = plan.path.empty() ? position : plan.path.back();
        r.reached = plan.reached;
        r.path_length = plan.length;
        const GainImages gains = compute_gain_images(map, objects, r.view, cfg_);
        const BinaryImage* mask = history ? &history->mask_at(r.view) : nullptr;
        const GainImage combined = combine_gain_images(gains, cfg_, mask);
        const YawChoice yc = best_yaw(combined, cfg_.hfov);
        r.gain = yc.gain;
        r.yaw = yc.yaw;
        r.travel_time = estimate_travel_time(plan.length, yc.yaw - yaw, cfg_);
        r.utility = r.gain / std::max(r.travel_time, cfg_.min_time);
        out.candidates[i] = r;
        paths[i] = std::move(plan.path);
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < out.candidates.size(); ++i) {
        if (out.candidates[i].utility > out.candidates[best].utility) {
            best = i;
        }
        out.best_gain = std::max(out.best_gain, out.candidates[i].gain);
    }
    out.best_gain = std::max(out.best_gain, out.candidates[0].gain);
    if (!(out.candidates[best].gain > 0.0)) {
        return out; // no productive goal; chosen stays -1 to feed termination
    }
    out.chosen = static_cast<int>(best);
    out.best_utility = out.candidates[best].utility;
    out.path = assign_path_yaws(paths[best], yaw, out.candidates[best].yaw, map, objects, history,
                                cfg_);
    return out;
}

bool exploration_complete(bool any_integration, const OccupancyMap& map,
                          const ObjectStore& objects, int rounds_completed,
                          double last_best_gain, const PlannerConfig& cfg)
{
    if (!any_integration) {
        return false;
    }
    const bool map_done = map.frontiers().empty() && map.all_occupied_within(cfg.d_bg)
                          && objects.all_surface_within(cfg.d_obj);
    const bool gain_exhausted = rounds_completed >= 1 && last_best_gain < cfg.epsilon_gain;
    return map_done || gain_exhausted;
}

} // namespace scout
