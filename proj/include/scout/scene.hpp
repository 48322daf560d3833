// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_SCENE_HPP
#define SCOUT_SCENE_HPP

#include "scout/image.hpp"
#include "scout/mesh.hpp"
#include "scout/object_map.hpp"

#include <Eigen/Geometry>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace scout {

/** One piece of world geometry: an axis-aligned box or a triangle mesh, with
 *  an optional class label (labelled instances are the objects to find) and an
 *  optional unmeasurable flag (depth returns invalid but the surface still
 *  occludes). */
struct SceneInstance {
    std::string name;
    std::string label; ///< object class; empty marks background structure
    bool unmeasurable = false;
    Rgb8 colour{200, 200, 200};
    std::optional<Eigen::AlignedBox3d> box;
    TriangleMesh mesh; ///< world-space triangles when `box` is not set

    bool is_object() const { return !label.empty(); }
    Eigen::AlignedBox3d bounding_box() const;
};

/** A simulated world loaded from a versioned JSON file (see README for the
 *  schema). */
struct Scene {
    std::string name;
    Eigen::AlignedBox3d bounds;
    Eigen::Vector3d start_position = Eigen::Vector3d::Zero();
    double start_yaw = 0.0;
    std::vector<std::pair<std::string, double>> classes; ///< label -> voxel size
    std::vector<SceneInstance> instances;

    ClassTable class_table() const;
    std::vector<int> object_instances() const; ///< indices of labelled instances

    /** Throws std::invalid_argument on duplicate names, geometry leaking out
     *  of the bounds, labels missing from the class list, or an out-of-bounds
     *  start. */
    void validate() const;

    /** Parse a scene file. Mesh paths resolve relative to the file's
     *  directory. Throws std::runtime_error / std::invalid_argument on
     *  unreadable files or schema violations. */
    static Scene load(const std::string& path);
};

} // namespace scout

#endif
