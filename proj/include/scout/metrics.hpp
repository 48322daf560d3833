// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_METRICS_HPP
#define SCOUT_METRICS_HPP

#include "scout/object_map.hpp"
#include "scout/occupancy_map.hpp"
#include "scout/scene.hpp"

#include <Eigen/Geometry>
#include <string>
#include <vector>

namespace scout {

/** Densely sampled ground-truth surfaces of a scene with exact
 *  point-to-surface distance queries (boxes and triangles are handled
 *  analytically; the samples only drive completeness and matching). */
class GroundTruth {
public:
    struct Instance {
        std::string name;
        std::string label; ///< empty for background geometry
        std::vector<Eigen::Vector3d> samples;
    };

    explicit GroundTruth(const Scene& scene, double background_spacing = 0.05,
                         double object_spacing = 0.025);

    /** Labelled instances, in scene order. */
    const std::vector<Instance>& objects() const { return objects_; }

    /** Surface samples of every unlabelled instance. */
    const std::vector<Eigen::Vector3d>& background_samples() const { return background_; }

    /** Exact distance from p to the nearest surface of any instance. */
    double surface_distance(const Eigen::Vector3d& p) const;

    /** Exact distance from p to the nearest surface of one labelled instance
     *  (index into objects()). */
    double object_surface_distance(std::size_t object_index, const Eigen::Vector3d& p) const;

private:
    struct Solid {
        int object_index = -1; ///< index into objects_, -1 for background
        bool is_box = false;
        Eigen::AlignedBox3d box;
        std::vector<std::array<Eigen::Vector3d, 3>> triangles;
        Eigen::AlignedBox3d tri_bounds;
    };

    double solid_distance(const Solid& s, const Eigen::Vector3d& p) const;

    std::vector<Instance> objects_;
    std::vector<Eigen::Vector3d> background_;
    std::vector<Solid> solids_;
};

/** Reconstruction and coverage figures for one point in time. Percentages are
 *  in [0, 100]; distances in metres. Empty maps report zeroes. */
struct SceneMetrics {
    double explored_volume = 0.0; ///< (free + occupied voxels) * resolution^3 [m^3]
    std::int64_t frontier_count = 0;
    double objects_found_pct = 0.0; ///< ground-truth instances matched by a submap
    double bg_acc = 0.0;  ///< RMS occupied-voxel-centre to nearest true surface
    double obj_acc = 0.0; ///< RMS submap mesh vertex to nearest true surface
    double bg_comp = 0.0; ///< % background samples with an occupied voxel nearby
    double obj_comp = 0.0; ///< % object samples with a submap mesh vertex nearby
    double bg_within_dist_pct = 0.0;  ///< % occupied voxels observed from <= d_bg
    double obj_within_dist_pct = 0.0; ///< % object surface voxels observed from <= d_obj
};

/** A submap matches a ground-truth instance when the labels agree and the
 *  median distance from its mesh vertices to that instance's surface is below
 *  twice the submap resolution. Returns, per submap, the matched instance
 *  index or -1. Each instance counts at most once towards objects_found_pct
 *  but may be matched by several submaps. */
std::vector<int> match_submaps_to_truth(const ObjectStore& objects, const GroundTruth& gt);

/** With background_quality=false the expensive occupied-voxel accuracy and
 *  background completeness scans are skipped and left at 0 (callers logging a
 *  time series carry the last full values forward). */
SceneMetrics compute_metrics(const OccupancyMap& map, const ObjectStore& objects,
                             const GroundTruth& gt, double d_bg, double d_obj,
                             double completeness_dist = 0.05, bool background_quality = true);

} // namespace scout

#endif // SCOUT_METRICS_HPP
