// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_OBJECT_MAP_HPP
#define SCOUT_OBJECT_MAP_HPP

#include "scout/geometry.hpp"
#include "scout/image.hpp"
#include "scout/mesh.hpp"
#include "scout/occupancy_map.hpp"

#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace scout {

// Quantized per-voxel payload. The signed distance is stored in 16 bits over
// [-1, 1] (units of the truncation distance) and the foreground probability in
// 8 bits over [0, 1]; both decode to the midpoint of their bin, so the
// roundtrip error is at most 1/32767 resp. 1/255. Compared with a float
// layout holding the same fields the payload shrinks from 12 to 7 bytes.
#pragma pack(push, 1)
struct TsdfPayload {
    std::int16_t tsdf = 0;
    std::uint8_t fg = 0;
    Rgb8 colour;
    std::uint8_t weight = 0;
};
struct TsdfPayloadFloatBaseline {
    float tsdf = 0.0f;
    float fg = 0.0f;
    Rgb8 colour;
    std::uint8_t weight = 0;
};
#pragma pack(pop)

static_assert(sizeof(TsdfPayload) == 7, "quantized payload must pack to 7 bytes");
static_assert(sizeof(TsdfPayloadFloatBaseline) == 12, "float baseline packs to 12 bytes");
static_assert(100 * (sizeof(TsdfPayloadFloatBaseline) - sizeof(TsdfPayload))
                  >= 39 * sizeof(TsdfPayloadFloatBaseline),
              "quantized payload must be at least 39% smaller than the float baseline");

std::int16_t encode_tsdf(double v); ///< clamp to [-1, 1], round to 16-bit code
double decode_tsdf(std::int16_t q);
std::uint8_t encode_fg(double p); ///< clamp to [0, 1], round to 8-bit code
double decode_fg(std::uint8_t q);

/** One labelled segmentation mask handed to the matching stage. */
struct Detection {
    BinaryImage mask;
    std::string label;
};

/** Truncated signed distance submap of one object instance, stored in an
 *  expanding octree of 8x8x8 voxel blocks at the per-class resolution. Voxel
 *  indices are global (voxel v spans [v*res, (v+1)*res) in world space), so
 *  growth never moves data. */
class ObjectSubmap {
public:
    struct VoxelView {
        Eigen::Vector3i index;
        double tsdf;   ///< decoded, units of the truncation distance
        double fg;     ///< decoded foreground probability
        Rgb8 colour;
        int weight;
        float min_obs_dist;
    };

    struct SurfaceHit {
        double distance = 0.0; ///< along-ray distance to the zero crossing [m]
        Eigen::Vector3d point = Eigen::Vector3d::Zero();
        Eigen::Vector3i voxel = Eigen::Vector3i::Zero();
        float min_obs_dist = std::numeric_limits<float>::infinity();
    };

    ObjectSubmap(int id, std::string label, double resolution, int weight_saturation = 100);
    ObjectSubmap(ObjectSubmap&&) noexcept;
    ObjectSubmap& operator=(ObjectSubmap&&) noexcept;
    ~ObjectSubmap();

    int id() const { return id_; }
    const std::string& label() const { return label_; }
    double resolution() const { return res_; }
    double truncation() const { return trunc_; }

    /** Axis-aligned box enclosing every voxel with nonzero weight (empty if
     *  none). */
    Eigen::AlignedBox3d extent() const;

    bool empty() const { return !any_weight_; }

    /** Fuse one posed RGB-D observation.
     *
     *  When `detected` is true, voxels projecting into `detection_mask` pixels
     *  with valid depth get a projective TSDF, colour and foreground (obs 1)
     *  update; if `fuse_fg_zero` is set, already-weighted voxels projecting
     *  into `rendered_mask` pixels outside the detection mask get a foreground
     *  observation of 0 instead. When `detected` is false the update runs over
     *  `rendered_mask` pixels and foreground values stay untouched. min
     *  observation distances shrink to the camera distance on every TSDF
     *  update. */
    void integrate(const DepthImage& depth, const ColourImage& colour,
                   const BinaryImage& detection_mask, const BinaryImage& rendered_mask,
                   const RigidTransform& T_WC, const CameraModel& cam, bool detected,
                   bool fuse_fg_zero = true);

    /** First foreground zero crossing along a ray within [t_min, t_max]. Only
     *  voxels with weight > 0 and decoded fg > 0.5 participate. */
    std::optional<SurfaceHit> ray_zero_crossing(const Eigen::Vector3d& origin,
                                                const Eigen::Vector3d& dir, double t_min,
                                                double t_max) const;

    /** Marching-cubes mesh over cells whose 8 corners all have weight > 0 and
     *  decoded fg > 0.5, at the zero level set. Vertices in world frame. */
    TriangleMesh extract_surface() const;

    /** Deterministic traversal of voxels with weight > 0. */
    void for_each_weighted(const std::function<void(const VoxelView&)>& fn) const;

    /** Surface voxels: weight > 0, decoded fg > 0.5 and |tsdf| under one voxel
     *  (in metres). Keys are in deterministic order. */
    std::vector<Eigen::Vector3i> surface_voxels() const;

    /** True iff every surface voxel has min_obs_dist <= dist. */
    bool all_surface_within(double dist) const;

    std::optional<VoxelView> voxel(const Eigen::Vector3i& index) const;

    /** Author one voxel directly (allocating its block), bypassing projective
     *  fusion. tsdf is in truncation-distance units and is quantized on the
     *  way in; weight is clamped to the saturation limit. */
    void write_voxel(const Eigen::Vector3i& index, double tsdf, double fg, int weight,
                     Rgb8 colour = {255, 255, 255},
                     float min_obs_dist = std::numeric_limits<float>::infinity());

    Eigen::Vector3d voxel_centre(const Eigen::Vector3i& v) const
    {
        return (v.cast<double>() + Eigen::Vector3d::Constant(0.5)) * res_;
    }

private:
    struct Block;

    Block* find_block(const Eigen::Vector3i& bc) const;
    Block& touch_block(const Eigen::Vector3i& bc);

    int id_;
    std::string label_;
    double res_;
    double trunc_;
    int weight_sat_;
    bool any_weight_ = false;
    Eigen::Vector3i ext_min_ = Eigen::Vector3i::Zero();
    Eigen::Vector3i ext_max_ = Eigen::Vector3i::Zero();
    std::map<std::array<int, 3>, std::unique_ptr<Block>> blocks_; // keyed by block coord
};

/** Known classes and their submap resolutions. */
class ClassTable {
public:
    void add(const std::string& label, double resolution);
    bool contains(const std::string& label) const;
    double resolution(const std::string& label) const; ///< throws on unknown label

private:
    std::map<std::string, double> classes_;
};

/** The set of reconstructed object submaps. */
class ObjectStore {
public:
    explicit ObjectStore(ClassTable classes, int weight_saturation = 100)
        : classes_(std::move(classes)), weight_sat_(weight_saturation)
    {
    }

    const ClassTable& classes() const { return classes_; }

    ObjectSubmap& create(const std::string& label); ///< throws on unknown label
    std::size_t size() const { return objects_.size(); }
    ObjectSubmap& at(std::size_t i) { return *objects_[i]; }
    const ObjectSubmap& at(std::size_t i) const { return *objects_[i]; }

    /** Nearest foreground zero crossing over all submaps along a ray. */
    std::optional<std::pair<int, ObjectSubmap::SurfaceHit>>
    nearest_crossing(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_min,
                     double t_max) const;

    /** True iff every object surface voxel has min_obs_dist <= dist. */
    bool all_surface_within(double dist) const;

    /** Fraction of object surface voxels with min_obs_dist <= dist (1 if none). */
    double fraction_surface_within(double dist) const;

    /** Write one mesh per non-empty object as object_<id>_<label>.ply. */
    void export_meshes(const std::string& directory) const;

private:
    ClassTable classes_;
    int weight_sat_;
    int next_id_ = 0;
    std::vector<std::unique_ptr<ObjectSubmap>> objects_;
};

/** Per-object visibility masks raycast from the map: a pixel belongs to the
 *  object whose foreground surface is nearest along the pixel ray, unless a
 *  background surface lies more than three background voxels in front of it
 *  (the slack covers the occupancy hit band, which starts up to two voxels
 *  before a measured surface). Returned in object-store order. */
std::vector<BinaryImage> render_object_masks(const ObjectStore& store, const OccupancyMap& map,
                                             const RigidTransform& T_WC, const CameraModel& cam);

/** Intersection-over-union of two equally sized binary masks (0 when either is
 *  empty). Throws std::invalid_argument on size mismatch. */
double mask_iou(const BinaryImage& a, const BinaryImage& b);

/** Greedy IoU matching of detections against rendered object masks.
 *  Pairs are taken in order of descending IoU (ties: lower object id, then
 *  lower detection index); each object receives at most one detection and each
 *  detection one object, and only pairs with IoU > threshold match. */
struct MatchResult {
    std::vector<int> detection_to_object; ///< object id or -1 per detection
    std::vector<int> unmatched_detections; ///< detection indices, ascending
};
MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<BinaryImage>& rendered_masks,
                             const std::vector<int>& rendered_ids, double iou_threshold);

} // namespace scout

#endif
