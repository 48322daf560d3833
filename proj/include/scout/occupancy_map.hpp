// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_OCCUPANCY_MAP_HPP
#define SCOUT_OCCUPANCY_MAP_HPP

#include "scout/geometry.hpp"
#include "scout/image.hpp"

#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace scout {

enum class VoxelState : std::uint8_t { unknown = 0, free = 1, occupied = 2 };

/** Per-voxel occupancy payload exposed to callers. */
struct OccupancyVoxel {
    float log_odds = 0.0f;     ///< clamped occupancy log-odds; 0 = never informed
    float fusion_weight = 0.0f; ///< number of surface (hit-band) updates fused
    Rgb8 colour;               ///< running average of surface colour observations
    float min_obs_dist = std::numeric_limits<float>::infinity();
    ///< smallest camera-centre to voxel-centre distance over all updates [m]
};

struct OccupancyConfig {
    Eigen::AlignedBox3d bounds; ///< mapped volume [m]
    double resolution = 0.04;   ///< voxel edge length [m]

    // Inverse sensor model. One observation must be able to cross the classify
    // thresholds, and the clamp must push per-voxel entropy below 0.02.
    float log_odds_hit = 2.0f;   ///< added to voxels in the hit band
    float log_odds_miss = 1.5f;  ///< subtracted from voxels in front of the hit
    float log_odds_clamp = 7.0f; ///< |log-odds| saturation bound

    // Tri-state classification on occupancy probability.
    float free_threshold = 0.25f;     ///< P < free_threshold  => free
    float occupied_threshold = 0.75f; ///< P > occupied_threshold => occupied

    void validate() const;
};

/** Octree occupancy map over a fixed axis-aligned volume.
 *
 *  Voxels live in 8x8x8 leaf blocks; internal nodes keep [min, max] bounds of
 *  the log-odds below them (unallocated space counts as log-odds 0), which
 *  lets region queries prune without visiting leaves. The map maintains the
 *  set of frontier voxels (free voxels with at least one in-bounds unknown
 *  6-neighbour) incrementally across integrations.
 */
class OccupancyMap {
public:
    /** Changes recorded by one integration, consumed by update_frontiers(). */
    struct UpdateSummary {
        std::vector<std::uint64_t> state_changed; ///< voxels whose tri-state changed (may repeat)
        std::size_t valid_pixels = 0;
        std::size_t updated_voxels = 0;
    };

    struct RayHit {
        std::uint64_t voxel_key = 0;
        Eigen::Vector3d voxel_centre = Eigen::Vector3d::Zero();
        double distance = 0.0; ///< along-ray distance to the voxel entry point [m]
        float min_obs_dist = std::numeric_limits<float>::infinity();
    };

    explicit OccupancyMap(const OccupancyConfig& config);
    OccupancyMap(const OccupancyMap&);
    OccupancyMap& operator=(const OccupancyMap&) = delete;
    OccupancyMap(OccupancyMap&&) = default;
    ~OccupancyMap();

    const OccupancyConfig& config() const { return config_; }
    double resolution() const { return config_.resolution; }
    const Eigen::AlignedBox3d& bounds() const { return config_.bounds; }
    const Eigen::Vector3i& dims() const { return dims_; }

    bool contains(const Eigen::Vector3d& p) const { return config_.bounds.contains(p); }

    /** Tri-state classification of the voxel containing a point. Throws
     *  std::out_of_range for points outside the mapped volume. */
    VoxelState classify(const Eigen::Vector3d& p) const;

    /** Tri-state classification by voxel index; indices outside the grid are
     *  unknown. */
    VoxelState classify_voxel(const Eigen::Vector3i& v) const;

    /** Voxel payload, or nullptr when the voxel was never allocated. */
    const OccupancyVoxel* voxel(const Eigen::Vector3i& v) const;

    /** Integrate one posed RGB-D frame. Invalid depth pixels (non-finite,
     *  <= 0, outside [d_min, d_max]) update nothing. Along each valid pixel's
     *  ray, voxels from depth d_min up to one voxel before the measurement get
     *  a miss update; voxels within one voxel of the measurement get a hit
     *  update with colour fused into the running average. Every updated voxel
     *  also lowers its min_obs_dist to the camera-centre distance. Throws
     *  std::invalid_argument on image/camera size mismatch. */
    UpdateSummary integrate_frame(const DepthImage& depth, const ColourImage& colour,
                                  const RigidTransform& T_WC, const CameraModel& cam);

    /** Recheck frontier membership for the changed voxels and their
     *  6-neighbours. After this call the frontier set equals a full
     *  brute-force scan of the map. */
    void update_frontiers(const UpdateSummary& summary);

    /** True iff the voxel is free and has at least one in-bounds unknown
     *  6-neighbour. */
    bool is_frontier(const Eigen::Vector3i& v) const;

    const std::set<std::uint64_t>& frontiers() const { return frontiers_; }

    /** Mean per-step Shannon entropy along a ray. Sampling starts at depth
     *  d_min and advances in steps of one voxel (the final step is clipped at
     *  d_max and weighted by its fraction); accumulation stops early when a
     *  sample is occupied or leaves the mapped volume. The sum is normalized
     *  by (d_max - d_min) / resolution, so the result is in [0, 1] and an
     *  unobserved ray scores exactly 1. */
    double raycast_entropy(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                           double d_min, double d_max) const;

    /** First occupied voxel along a ray within t_max metres, or nullopt. */
    std::optional<RayHit> raycast_first_hit(const Eigen::Vector3d& origin,
                                            const Eigen::Vector3d& dir, double t_max) const;

    /** True iff every map voxel whose centre lies within `radius` of segment
     *  ab classifies free. Unknown space blocks; space outside the mapped
     *  volume imposes no constraint. */
    bool segment_collision_free(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                double radius) const;

    /** Force a sphere around `centre` to saturated free (initial free-space
     *  seed). Returns a summary for update_frontiers(). */
    UpdateSummary carve_free_sphere(const Eigen::Vector3d& centre, double radius);

    std::int64_t free_count() const { return free_count_; }
    std::int64_t occupied_count() const { return occ_count_; }

    /** True iff every occupied voxel has min_obs_dist <= dist. */
    bool all_occupied_within(double dist) const;

    /** Fraction of occupied voxels with min_obs_dist <= dist (1 if none). */
    double fraction_occupied_within(double dist) const;

    /** Deterministic traversal of all allocated voxels. */
    void for_each_allocated(
        const std::function<void(const Eigen::Vector3i&, const OccupancyVoxel&)>& fn) const;

    /** ASCII PLY point dump of occupied voxel centres with colour. */
    void export_ply(const std::string& path) const;

    /** Versioned little-endian binary snapshot. */
    void save(const std::string& path) const;
    static OccupancyMap load(const std::string& path);

    // Voxel <-> world helpers.
    Eigen::Vector3i voxel_of(const Eigen::Vector3d& p) const;
    Eigen::Vector3d voxel_centre(const Eigen::Vector3i& v) const;
    bool voxel_in_grid(const Eigen::Vector3i& v) const;
    static std::uint64_t voxel_key(const Eigen::Vector3i& v);
    static Eigen::Vector3i voxel_of_key(std::uint64_t key);

    float free_log_odds_threshold() const { return free_lo_; }
    float occupied_log_odds_threshold() const { return occ_lo_; }

private:
    struct Block;
    struct Node;

    VoxelState state_of(float log_odds) const;
    Block* fetch_block(const Eigen::Vector3i& block_coord) const;
    Block& allocate_block(const Eigen::Vector3i& block_coord);
    void refresh_dirty();
    void refresh_node(Node& node, int level);
    void integrate_ray(const Eigen::Vector3d& origin, const Eigen::Vector3d& hit_w,
                       double measured_depth, double cam_d_min, Rgb8 colour_obs,
                       UpdateSummary& summary);
    bool segment_free_rec(const Node* node, const Eigen::Vector3i& corner, int level,
                          const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                          double radius) const;
    bool any_centre_in_capsule(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double radius,
                               const Eigen::Vector3i& lo_v, const Eigen::Vector3i& hi_v) const;

    OccupancyConfig config_;
    Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();       // grid size [voxels]
    Eigen::Vector3i block_dims_ = Eigen::Vector3i::Zero(); // grid size [blocks]
    int levels_ = 0; // internal levels above the block level; root side = 8 << levels_
    float free_lo_ = 0.0f;
    float occ_lo_ = 0.0f;
    std::unique_ptr<Node> root_;
    std::set<std::uint64_t> frontiers_;
    std::int64_t free_count_ = 0;
    std::int64_t occ_count_ = 0;
    std::vector<Block*> dirty_blocks_;
};

/** Occupancy probability of a log-odds value. */
double log_odds_to_probability(double log_odds);

/** Binary Shannon entropy of a probability, in [0, 1] bits. */
double binary_entropy(double p);

} // namespace scout

#endif
