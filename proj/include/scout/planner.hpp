// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_PLANNER_HPP
#define SCOUT_PLANNER_HPP

#include "scout/depth_history.hpp"
#include "scout/geometry.hpp"
#include "scout/image.hpp"
#include "scout/object_map.hpp"
#include "scout/occupancy_map.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace scout {

/** Thrown when path planning cannot start (e.g. the current position lies
 *  outside the mapped volume). */
struct PlanningFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PlannerConfig {
    // Panoramic gain images. The default elevation span covers the vertical
    // field of view of the default camera plus 15 degrees headroom both ways.
    int pano_width = 36;
    int pano_height = 10;
    double pano_elevation_span = 2.0 * (std::atan2(120.0, 262.5) + 15.0 * kPi / 180.0);

    // Sensor limits used when casting gain rays.
    double d_min = 0.1;
    double d_max = 10.0;
    double hfov = 2.0 * std::atan2(160.0, 262.5); ///< [rad], full width

    // View scoring.
    double d_bg = 3.0;  ///< desired background observation distance [m]
    double d_obj = 1.0; ///< desired object observation distance [m]
    double alpha_entropy = 0.34;
    double alpha_background = 0.33;
    double alpha_objects = 0.33;

    // Candidate sampling.
    double frontier_probability = 0.5; ///< chance of drawing from the frontier pool
    int candidate_count = 20;

    // Motion model.
    double v_max = 1.5;      ///< [m/s]
    double omega_max = 0.75; ///< [rad/s]
    double min_time = 0.1;   ///< travel-time floor when scoring utility [s]

    // Path planning lattice.
    double collision_radius = 0.125; ///< [m]
    double lattice_step = 0.16;      ///< [m]
    int dijkstra_budget = 40000;     ///< max settled lattice nodes per round

    double epsilon_gain = 0.01; ///< termination threshold on the best gain

    void validate() const; ///< throws std::invalid_argument on bad values
};

/** Gain for re-observing a surface element whose closest observation so far
 *  was from d_node, when a candidate view would see it from d_exp and the
 *  desired observation distance is d_des. Zero once the element has been seen
 *  from d_des or closer, or when the candidate would not improve on the best
 *  observation; otherwise the improvement normalized by d_max (unclamped). */
double distance_gain(double d_node, double d_exp, double d_des, double d_max);

struct GainImages {
    GainImage entropy;
    GainImage background;
    GainImage objects;
};

/** Panoramic gain images from one position. Entropy rays accumulate unknown-
 *  ness until they hit occupied space. Background rays score the distance gain
 *  of the first occupied voxel (expected observation distance = distance to
 *  its centre), clamped to 1. Object rays score the nearest foreground surface
 *  crossing the same way, zeroed when a background surface lies more than
 *  three map voxels in front of it (slack for the width of the occupancy hit
 *  band). */
GainImages compute_gain_images(const OccupancyMap& map, const ObjectStore& objects,
                               const Eigen::Vector3d& position, const PlannerConfig& cfg);

/** Weighted sum of the three gain images, multiplied elementwise by the
 *  history mask when one is given (mask dimensions must match). */
GainImage combine_gain_images(const GainImages& gains, const PlannerConfig& cfg,
                              const BinaryImage* history_mask);

struct YawChoice {
    double yaw = 0.0;  ///< azimuth of the window centre [rad], wrapped
    double gain = 0.0; ///< mean gain over the window
    int start_col = 0; ///< leftmost column of the chosen window
};

/** Best camera yaw for a combined gain image: slide a cyclic window as wide as
 *  the horizontal field of view over the columns and pick the one with the
 *  highest mean (ties: smallest start column). */
YawChoice best_yaw(const GainImage& combined, double hfov);

/** Travel time along a path of the given length followed by (or overlapped
 *  with) a yaw change, at the configured rates. */
double estimate_travel_time(double path_length, double yaw_change, const PlannerConfig& cfg);

/** Start-anchored lattice paths over the free space of an occupancy map.
 *
 *  Construction runs one Dijkstra pass from `start` over a 26-connected
 *  lattice with the configured step, keeping nodes inside the map bounds and
 *  edges whose connecting capsule of the collision radius is collision-free,
 *  until the node budget is exhausted. Every later `plan_to` reuses that
 *  shortest-path tree. */
class PathPlanner {
public:
    struct Plan {
        std::vector<Eigen::Vector3d> path; ///< start ... end, shortcut-smoothed
        double length = 0.0;               ///< total path length [m]
        bool reached = false; ///< end within two lattice steps of the target
    };

    /** Throws PlanningFailure when `start` lies outside the map bounds. */
    PathPlanner(const OccupancyMap& map, const Eigen::Vector3d& start, const PlannerConfig& cfg);

    /** Path to the settled lattice node nearest to `target`, extended by a
     *  final straight segment as far towards the target as the collision
     *  radius allows (so in open space the path ends at the target itself). */
    Plan plan_to(const Eigen::Vector3d& target) const;

    std::size_t settled_count() const { return nodes_.size(); }

private:
    struct Node {
        Eigen::Vector3i cell;
        Eigen::Vector3d pos;
        int parent;
        double dist;
    };

    std::vector<Eigen::Vector3d> shortcut(std::vector<Eigen::Vector3d> path) const;

    /** Same voxel-centre-in-capsule rule as
     *  OccupancyMap::segment_collision_free, evaluated against the tri-state
     *  snapshot taken at construction (one byte per voxel, built once so the
     *  million-odd lattice-edge checks per round stay cheap). With
     *  escape_from_a set, blockers that already sit within `radius` of `a`
     *  are tolerated as long as the segment does not end closer to them:
     *  that lets a platform that drifted into the inflation zone retreat
     *  instead of deadlocking. */
    bool capsule_free(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double radius,
                      bool escape_from_a = false) const;

    const OccupancyMap& map_;
    double step_;
    double radius_;
    Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
    Eigen::Vector3d grid_min_ = Eigen::Vector3d::Zero();
    double res_ = 0.0;
    std::vector<std::uint8_t> free_; // snapshot: 1 where the voxel is free
    std::vector<Node> nodes_;        // in settle order; nodes_[0] is the start
};

struct Waypoint {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double yaw = 0.0;
};

struct CandidateReport {
    Eigen::Vector3d sample = Eigen::Vector3d::Zero(); ///< sampled voxel centre
    char pool = 'F';                                  ///< 'F' frontier, 'O' object
    Eigen::Vector3d view = Eigen::Vector3d::Zero();   ///< planned view position
    bool reached = false;
    double path_length = 0.0;
    double gain = 0.0;
    double yaw = 0.0;
    double travel_time = 0.0;
    double utility = 0.0;
};

struct PlanRoundResult {
    std::vector<Waypoint> path; ///< empty when there is no productive goal
    int chosen = -1; ///< index into `candidates`; -1 when no candidate exists
                     ///< or every candidate's gain is zero
    std::vector<CandidateReport> candidates;
    /** Largest gain any candidate offered this round. Goal selection goes by
     *  utility (gain over travel time), but exhaustion must not: a cheap
     *  nearby view can win on utility while a distant view still promises
     *  real gain, so termination watches the round's gain ceiling instead. */
    double best_gain = 0.0;
    double best_utility = 0.0;
};

/** Yaw assignment along a path: the first waypoint keeps the current yaw, the
 *  last takes the goal yaw, and every intermediate vertex looks at the best
 *  window of its own combined gain image. */
std::vector<Waypoint> assign_path_yaws(const std::vector<Eigen::Vector3d>& path,
                                       double current_yaw, double goal_yaw,
                                       const OccupancyMap& map, const ObjectStore& objects,
                                       const DepthHistory* history, const PlannerConfig& cfg);

/** Next-best-view selection. Holds the candidate-sampling RNG; everything else
 *  is recomputed from the maps each round. */
class Planner {
public:
    Planner(PlannerConfig cfg, std::uint64_t seed);

    const PlannerConfig& config() const { return cfg_; }
    std::mt19937_64& rng() { return rng_; }

    /** Sample positions to consider this round, tagged 'F' (frontier voxel
     *  centre) or 'O' (object surface voxel centre). Each draw picks the
     *  frontier pool with the configured probability, otherwise an object
     *  uniformly and then one of its surface voxels, all without replacement;
     *  an exhausted pool falls back to the other, and sampling stops when both
     *  are empty. Consumes the planner RNG. */
    std::vector<std::pair<Eigen::Vector3d, char>> sample_candidates(const OccupancyMap& map,
                                                                    const ObjectStore& objects);

    /** One planning round: sample candidates, plan a path to each, score the
     *  best yaw at each reached view by gain over travel time, and return the
     *  best path with yaws assigned. When every candidate scores zero gain the
     *  result carries no goal (chosen = -1, empty path) so the caller can feed
     *  termination. Throws PlanningFailure when the current position lies
     *  outside the map bounds. */
    PlanRoundResult plan_round(const OccupancyMap& map, const ObjectStore& objects,
                               const DepthHistory* history, const Eigen::Vector3d& position,
                               double yaw);

private:
    PlannerConfig cfg_;
    std::mt19937_64 rng_;
};

/** Exploration is complete when something has been integrated and either the
 *  map is finished (no frontiers, all occupied voxels observed within d_bg,
 *  all object surfaces within d_obj) or the largest candidate gain seen in
 *  the last planning round fell below epsilon. */
bool exploration_complete(bool any_integration, const OccupancyMap& map,
                          const ObjectStore& objects, int rounds_completed,
                          double last_best_gain, const PlannerConfig& cfg);

} // namespace scout

#endif
