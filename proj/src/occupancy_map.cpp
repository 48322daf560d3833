// SPDX-License-Identifier: BSD-3-Clause

#include "scout/occupancy_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace scout {

namespace {

constexpr int kBlockShift = 3;
constexpr int kBlockSide = 1 << kBlockShift;
constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;
constexpr float kInf = std::numeric_limits<float>::infinity();

inline int voxel_index(const Eigen::Vector3i& v)
{
    return (v.x() & (kBlockSide - 1)) | ((v.y() & (kBlockSide - 1)) << kBlockShift)
         | ((v.z() & (kBlockSide - 1)) << (2 * kBlockShift));
}

inline double point_box_distance(const Eigen::Vector3d& p, const Eigen::AlignedBox3d& box)
{
    const Eigen::Vector3d d = (box.min() - p).cwiseMax(p - box.max()).cwiseMax(0.0);
    return d.norm();
}

/** Distance between segment ab and an axis-aligned box. point_box_distance is
 *  convex along the segment, so a ternary search finds the minimum. */
double segment_box_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                            const Eigen::AlignedBox3d& box)
{
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 64; ++i) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        const Eigen::Vector3d p1 = a + m1 * (b - a);
        const Eigen::Vector3d p2 = a + m2 * (b - a);
        if (point_box_distance(p1, box) <= point_box_distance(p2, box)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    return point_box_distance(a + 0.5 * (lo + hi) * (b - a), box);
}

inline double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                     const Eigen::Vector3d& b)
{
    const Eigen::Vector3d ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 <= 0.0) {
        return (p - a).norm();
    }
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

/** Clip the parameter interval of origin + t * dir against a box. */
bool clip_ray_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                  const Eigen::AlignedBox3d& box, double& t0, double& t1)
{
    for (int i = 0; i < 3; ++i) {
        if (dir[i] == 0.0) {
            if (origin[i] < box.min()[i] || origin[i] > box.max()[i]) {
                return false;
            }
            continue;
        }
        double ta = (box.min()[i] - origin[i]) / dir[i];
        double tb = (box.max()[i] - origin[i]) / dir[i];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) {
            return false;
        }
    }
    return true;
}

} // namespace

double log_odds_to_probability(double log_odds)
{
    return 1.0 / (1.0 + std::exp(-log_odds));
}

double binary_entropy(double p)
{
    if (p <= 0.0 || p >= 1.0) {
        return 0.0;
    }
    const double h = -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
    return std::clamp(h, 0.0, 1.0);
}

struct OccupancyMap::Block {
    Eigen::Vector3i coord = Eigen::Vector3i::Zero(); // block coordinate (voxel >> 3)
    std::array<OccupancyVoxel, kBlockVoxels> voxels{};
    float lo_min = 0.0f;
    float lo_max = 0.0f;
    float max_min_obs = kInf;
    bool dirty = false;

    void refresh()
    {
        lo_min = kInf;
        lo_max = -kInf;
        max_min_obs = 0.0f;
        for (const auto& v : voxels) {
            lo_min = std::min(lo_min, v.log_odds);
            lo_max = std::max(lo_max, v.log_odds);
            max_min_obs = std::max(max_min_obs, v.min_obs_dist);
        }
    }
};

struct OccupancyMap::Node {
    std::array<std::unique_ptr<Node>, 8> child;
    std::unique_ptr<Block> block; // present only at the leaf level
    float lo_min = 0.0f;
    float lo_max = 0.0f;
};

void OccupancyConfig::validate() const
{
    if (bounds.isEmpty() || !(resolution > 0.0)) {
        throw std::invalid_argument("OccupancyConfig: empty bounds or non-positive resolution");
    }
    if (!(log_odds_hit > 0.0f) || !(log_odds_miss > 0.0f) || !(log_odds_clamp > 0.0f)) {
        throw std::invalid_argument("OccupancyConfig: sensor model increments must be positive");
    }
    if (!(free_threshold > 0.0f) || !(occupied_threshold < 1.0f)
        || !(free_threshold < occupied_threshold)) {
        throw std::invalid_argument("OccupancyConfig: classify thresholds must satisfy "
                                    "0 < free < occupied < 1");
    }
    const double free_lo = std::log(free_threshold / (1.0 - free_threshold));
    const double occ_lo = std::log(occupied_threshold / (1.0 - occupied_threshold));
    if (!(log_odds_hit > occ_lo) || !(-log_odds_miss < free_lo)) {
        throw std::invalid_argument(
            "OccupancyConfig: one observation must cross a classify threshold");
    }
    if (log_odds_clamp < log_odds_hit
        || binary_entropy(log_odds_to_probability(log_odds_clamp)) >= 0.02) {
        throw std::invalid_argument(
            "OccupancyConfig: clamp must saturate per-voxel entropy below 0.02");
    }
}

OccupancyMap::OccupancyMap(const OccupancyConfig& config) : config_(config)
{
    config_.validate();
    const Eigen::Vector3d extent = config_.bounds.max() - config_.bounds.min();
    for (int i = 0; i < 3; ++i) {
        dims_[i] = std::max(1, static_cast<int>(std::ceil(extent[i] / config_.resolution - 1e-9)));
        block_dims_[i] = (dims_[i] + kBlockSide - 1) / kBlockSide;
    }
    const int max_blocks = block_dims_.maxCoeff();
    levels_ = 0;
    while ((1 << levels_) < max_blocks) {
        ++levels_;
    }
    free_lo_ = std::log(config_.free_threshold / (1.0f - config_.free_threshold));
    occ_lo_ = std::log(config_.occupied_threshold / (1.0f - config_.occupied_threshold));
    root_ = std::make_unique<Node>();
}

OccupancyMap::~OccupancyMap() = default;

OccupancyMap::OccupancyMap(const OccupancyMap& o)
    : config_(o.config_),
      dims_(o.dims_),
      block_dims_(o.block_dims_),
      levels_(o.levels_),
      free_lo_(o.free_lo_),
      occ_lo_(o.occ_lo_),
      frontiers_(o.frontiers_),
      free_count_(o.free_count_),
      occ_count_(o.occ_count_)
{
    std::function<std::unique_ptr<Node>(const Node&)> clone = [&](const Node& n) {
        auto out = std::make_unique<Node>();
        out->lo_min = n.lo_min;
        out->lo_max = n.lo_max;
        if (n.block) {
            out->block = std::make_unique<Block>(*n.block);
        }
        for (int i = 0; i < 8; ++i) {
            if (n.child[i]) {
                out->child[i] = clone(*n.child[i]);
            }
        }
        return out;
    };
    root_ = clone(*o.root_);
}

VoxelState OccupancyMap::state_of(float log_odds) const
{
    if (log_odds < free_lo_) {
        return VoxelState::free;
    }
    if (log_odds > occ_lo_) {
        return VoxelState::occupied;
    }
    return VoxelState::unknown;
}

std::uint64_t OccupancyMap::voxel_key(const Eigen::Vector3i& v)
{
    return static_cast<std::uint64_t>(v.x()) | (static_cast<std::uint64_t>(v.y()) << 21)
         | (static_cast<std::uint64_t>(v.z()) << 42);
}

Eigen::Vector3i OccupancyMap::voxel_of_key(std::uint64_t key)
{
    return {static_cast<int>(key & 0x1FFFFF), static_cast<int>((key >> 21) & 0x1FFFFF),
            static_cast<int>((key >> 42) & 0x1FFFFF)};
}

Eigen::Vector3i OccupancyMap::voxel_of(const Eigen::Vector3d& p) const
{
    const Eigen::Vector3d q = (p - config_.bounds.min()) / config_.resolution;
    return {static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y())),
            static_cast<int>(std::floor(q.z()))};
}

Eigen::Vector3d OccupancyMap::voxel_centre(const Eigen::Vector3i& v) const
{
    return config_.bounds.min() + (v.cast<double>() + Eigen::Vector3d::Constant(0.5)) * config_.resolution;
}

bool OccupancyMap::voxel_in_grid(const Eigen::Vector3i& v) const
{
    return v.x() >= 0 && v.y() >= 0 && v.z() >= 0 && v.x() < dims_.x() && v.y() < dims_.y()
        && v.z() < dims_.z();
}

OccupancyMap::Block* OccupancyMap::fetch_block(const Eigen::Vector3i& bc) const
{
    const Node* node = root_.get();
    for (int level = levels_; level > 0; --level) {
        const int s = level - 1;
        const int idx = ((bc.x() >> s) & 1) | (((bc.y() >> s) & 1) << 1) | (((bc.z() >> s) & 1) << 2);
        node = node->child[idx].get();
        if (!node) {
            return nullptr;
        }
    }
    return node->block.get();
}

OccupancyMap::Block& OccupancyMap::allocate_block(const Eigen::Vector3i& bc)
{
    Node* node = root_.get();
    for (int level = levels_; level > 0; --level) {
        const int s = level - 1;
        const int idx = ((bc.x() >> s) & 1) | (((bc.y() >> s) & 1) << 1) | (((bc.z() >> s) & 1) << 2);
        if (!node->child[idx]) {
            node->child[idx] = std::make_unique<Node>();
        }
        node = node->child[idx].get();
    }
    if (!node->block) {
        node->block = std::make_unique<Block>();
        node->block->coord = bc;
    }
    return *node->block;
}

VoxelState OccupancyMap::classify_voxel(const Eigen::Vector3i& v) const
{
    if (!voxel_in_grid(v)) {
        return VoxelState::unknown;
    }
    const Block* b = fetch_block(v / kBlockSide);
    if (!b) {
        return VoxelState::unknown;
    }
    return state_of(b->voxels[voxel_index(v)].log_odds);
}

VoxelState OccupancyMap::classify(const Eigen::Vector3d& p) const
{
    if (!contains(p)) {
        throw std::out_of_range("OccupancyMap::classify: point outside mapped volume");
    }
    const Eigen::Vector3i v = voxel_of(p).cwiseMin(dims_ - Eigen::Vector3i::Ones()).cwiseMax(0);
    return classify_voxel(v);
}

const OccupancyVoxel* OccupancyMap::voxel(const Eigen::Vector3i& v) const
{
    if (!voxel_in_grid(v)) {
        return nullptr;
    }
    const Block* b = fetch_block(v / kBlockSide);
    return b ? &b->voxels[voxel_index(v)] : nullptr;
}

OccupancyMap::UpdateSummary OccupancyMap::integrate_frame(const DepthImage& depth,
                                                          const ColourImage& colour,
                                                          const RigidTransform& T_WC,
                                                          const CameraModel& cam)
{
    cam.validate();
    if (depth.width() != cam.width || depth.height() != cam.height
        || colour.width() != cam.width || colour.height() != cam.height) {
        throw std::invalid_argument("OccupancyMap::integrate_frame: image/camera size mismatch");
    }
    if (!T_WC.is_rigid(1e-6)) {
        throw std::invalid_argument("OccupancyMap::integrate_frame: T_WC is not rigid");
    }

    UpdateSummary summary;
    const Eigen::Vector3d origin = T_WC.t;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const float d = depth(x, y);
            if (!std::isfinite(d) || d < cam.d_min || d > cam.d_max) {
                continue;
            }
            ++summary.valid_pixels;
            const Eigen::Vector3d dir_cam((x + 0.5 - cam.cx) / cam.fx,
                                          (y + 0.5 - cam.cy) / cam.fy, 1.0);
            const Eigen::Vector3d hit_w = T_WC * (dir_cam * static_cast<double>(d));
            integrate_ray(origin, hit_w, d, cam.d_min, colour(x, y), summary);
        }
    }
    refresh_dirty();
    return summary;
}

void OccupancyMap::integrate_ray(const Eigen::Vector3d& origin, const Eigen::Vector3d& hit_w,
                                 double measured_depth, double cam_d_min, Rgb8 colour_obs,
                                 UpdateSummary& summary)
{
    const double r = config_.resolution;
    const Eigen::Vector3d seg = hit_w - origin;
    const double length = seg.norm();
    if (!(length > 0.0)) {
        return;
    }
    const Eigen::Vector3d u = seg / length;
    const double per_z = length / measured_depth; // ray length per unit depth
    double t0 = cam_d_min * per_z;
    double t1 = length + r;          // hit band extends one voxel past the surface
    const double band0 = length - r; // and starts one voxel before it

    if (!clip_ray_box(origin, u, config_.bounds, t0, t1) || t0 >= t1) {
        return;
    }

    const Eigen::Vector3d bmin = config_.bounds.min();
    Eigen::Vector3i v = voxel_of(origin + u * (t0 + 1e-12));
    v = v.cwiseMax(0).cwiseMin(dims_ - Eigen::Vector3i::Ones());

    Eigen::Vector3i step;
    Eigen::Vector3d t_max, t_delta;
    for (int i = 0; i < 3; ++i) {
        if (u[i] > 0.0) {
            step[i] = 1;
            t_max[i] = (bmin[i] + (v[i] + 1) * r - origin[i]) / u[i];
            t_delta[i] = r / u[i];
        } else if (u[i] < 0.0) {
            step[i] = -1;
            t_max[i] = (bmin[i] + v[i] * r - origin[i]) / u[i];
            t_delta[i] = -r / u[i];
        } else {
            step[i] = 0;
            t_max[i] = std::numeric_limits<double>::infinity();
            t_delta[i] = std::numeric_limits<double>::infinity();
        }
    }

    Block* block = nullptr;
    Eigen::Vector3i block_coord(-1, -1, -1);
    bool block_saturated = false;
    Eigen::Vector3d centre = voxel_centre(v); // maintained incrementally below

    double t_entry = t0;
    while (t_entry < t1) {
        const double t_exit = std::min({t_max.x(), t_max.y(), t_max.z(), t1});
        const bool in_band = t_exit > band0;

        const Eigen::Vector3i bc = v / kBlockSide;
        if (bc != block_coord) {
            block_coord = bc;
            block = &allocate_block(bc);
            // A fully saturated-free block whose distances cannot improve can
            // be traversed without touching memory; the skipped updates would
            // all be exact no-ops.
            const Eigen::AlignedBox3d box(
                bmin + (bc * kBlockSide).cast<double>() * r,
                bmin + ((bc + Eigen::Vector3i::Ones()) * kBlockSide).cast<double>() * r);
            block_saturated = block->lo_max <= -config_.log_odds_clamp + 1e-6f
                           && block->max_min_obs <= point_box_distance(origin, box);
        }

        if (!(block_saturated && !in_band)) {
            OccupancyVoxel& vox = block->voxels[voxel_index(v)];
            const VoxelState st_old = state_of(vox.log_odds);
            if (in_band) {
                vox.log_odds = std::min(vox.log_odds + config_.log_odds_hit, config_.log_odds_clamp);
                const float w = vox.fusion_weight;
                vox.colour.r = static_cast<std::uint8_t>(
                    std::lround((vox.colour.r * w + colour_obs.r) / (w + 1.0f)));
                vox.colour.g = static_cast<std::uint8_t>(
                    std::lround((vox.colour.g * w + colour_obs.g) / (w + 1.0f)));
                vox.colour.b = static_cast<std::uint8_t>(
                    std::lround((vox.colour.b * w + colour_obs.b) / (w + 1.0f)));
                vox.fusion_weight = w + 1.0f;
            } else {
                vox.log_odds = std::max(vox.log_odds - config_.log_odds_miss, -config_.log_odds_clamp);
            }
            const float d2 = static_cast<float>((centre - origin).squaredNorm());
            if (d2 < vox.min_obs_dist * vox.min_obs_dist) {
                vox.min_obs_dist = std::sqrt(d2);
            }
            const VoxelState st_new = state_of(vox.log_odds);
            if (st_new != st_old) {
                summary.state_changed.push_back(voxel_key(v));
                free_count_ += (st_new == VoxelState::free) - (st_old == VoxelState::free);
                occ_count_ += (st_new == VoxelState::occupied) - (st_old == VoxelState::occupied);
            }
            if (!block->dirty) {
                block->dirty = true;
                dirty_blocks_.push_back(block);
            }
            ++summary.updated_voxels;
        }

        int axis = 0;
        if (t_max.y() < t_max.x()) {
            axis = 1;
        }
        if (t_max.z() < t_max[axis]) {
            axis = 2;
        }
        if (t_max[axis] >= t1) {
            break;
        }
        t_entry = t_max[axis];
        t_max[axis] += t_delta[axis];
        v[axis] += step[axis];
        centre[axis] += step[axis] * r;
        if (v[axis] < 0 || v[axis] >= dims_[axis]) {
            break;
        }
    }
}

void OccupancyMap::refresh_dirty()
{
    if (dirty_blocks_.empty()) {
        return;
    }
    for (Block* b : dirty_blocks_) {
        b->refresh();
        b->dirty = false;
    }
    dirty_blocks_.clear();
    refresh_node(*root_, levels_);
}

void OccupancyMap::refresh_node(Node& node, int level)
{
    if (level == 0) {
        if (node.block) {
            node.lo_min = node.block->lo_min;
            node.lo_max = node.block->lo_max;
        } else {
            node.lo_min = node.lo_max = 0.0f;
        }
        return;
    }
    float lo = kInf;
    float hi = -kInf;
    bool any_missing = false;
    for (int i = 0; i < 8; ++i) {
        if (node.child[i]) {
            refresh_node(*node.child[i], level - 1);
            lo = std::min(lo, node.child[i]->lo_min);
            hi = std::max(hi, node.child[i]->lo_max);
        } else {
            any_missing = true;
        }
    }
    if (any_missing) {
        lo = std::min(lo, 0.0f);
        hi = std::max(hi, 0.0f);
    }
    node.lo_min = lo;
    node.lo_max = hi;
}

bool OccupancyMap::is_frontier(const Eigen::Vector3i& v) const
{
    if (classify_voxel(v) != VoxelState::free) {
        return false;
    }
    static const Eigen::Vector3i nbr[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                           {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (const auto& n : nbr) {
        const Eigen::Vector3i q = v + n;
        if (voxel_in_grid(q) && classify_voxel(q) == VoxelState::unknown) {
            return true;
        }
    }
    return false;
}

void OccupancyMap::update_frontiers(const UpdateSummary& summary)
{
    // A voxel's frontier status can only change when its own tri-state or a
    // 6-neighbour's tri-state changed, so rechecking exactly the changed
    // voxels plus their neighbours keeps the set equal to a full scan.
    // state_changed may repeat keys heavily, so dedup before fanning out.
    std::vector<std::uint64_t> changed(summary.state_changed);
    std::sort(changed.begin(), changed.end());
    changed.erase(std::unique(changed.begin(), changed.end()), changed.end());

    static const Eigen::Vector3i nbr[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                           {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    std::vector<std::uint64_t> candidates;
    candidates.reserve(changed.size() * 7);
    for (const std::uint64_t key : changed) {
        candidates.push_back(key);
        const Eigen::Vector3i v = voxel_of_key(key);
        for (const auto& n : nbr) {
            const Eigen::Vector3i q = v + n;
            if (voxel_in_grid(q)) {
                candidates.push_back(voxel_key(q));
            }
        }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    for (const std::uint64_t key : candidates) {
        if (is_frontier(voxel_of_key(key))) {
            frontiers_.insert(key);
        } else {
            frontiers_.erase(key);
        }
    }
}

double OccupancyMap::raycast_entropy(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                     double d_min, double d_max) const
{
    if (!(d_max > d_min) || !(d_min >= 0.0)) {
        throw std::invalid_argument("raycast_entropy: invalid depth range");
    }
    const Eigen::Vector3d u = dir.normalized();
    const double r = config_.resolution;
    const double total = (d_max - d_min) / r;
    double sum = 0.0;

    const Block* block = nullptr;
    Eigen::Vector3i block_coord(-1, -1, -1);

    for (std::int64_t k = 0;; ++k) {
        const double s0 = d_min + k * r;
        if (s0 >= d_max) {
            break;
        }
        const double s1 = std::min(s0 + r, d_max);
        const Eigen::Vector3d p = origin + u * (0.5 * (s0 + s1));
        if (!contains(p)) {
            break;
        }
        const Eigen::Vector3i v = voxel_of(p).cwiseMax(0).cwiseMin(dims_ - Eigen::Vector3i::Ones());
        const Eigen::Vector3i bc = v / kBlockSide;
        if (bc != block_coord) {
            block_coord = bc;
            block = fetch_block(bc);
        }
        const float lo = block ? block->voxels[voxel_index(v)].log_odds : 0.0f;
        if (state_of(lo) == VoxelState::occupied) {
            break;
        }
        sum += binary_entropy(log_odds_to_probability(lo)) * ((s1 - s0) / r);
    }
    return sum / total;
}

std::optional<OccupancyMap::RayHit> OccupancyMap::raycast_first_hit(const Eigen::Vector3d& origin,
                                                                    const Eigen::Vector3d& dir,
                                                                    double t_max) const
{
    const Eigen::Vector3d u = dir.normalized();
    double t0 = 0.0;
    double t1 = t_max;
    if (!clip_ray_box(origin, u, config_.bounds, t0, t1) || t0 >= t1) {
        return std::nullopt;
    }
    const double r = config_.resolution;
    const Eigen::Vector3d bmin = config_.bounds.min();
    Eigen::Vector3i v = voxel_of(origin + u * (t0 + 1e-12));
    v = v.cwiseMax(0).cwiseMin(dims_ - Eigen::Vector3i::Ones());

    Eigen::Vector3i step;
    Eigen::Vector3d t_maxv, t_delta;
    for (int i = 0; i < 3; ++i) {
        if (u[i] > 0.0) {
            step[i] = 1;
            t_maxv[i] = (bmin[i] + (v[i] + 1) * r - origin[i]) / u[i];
            t_delta[i] = r / u[i];
        } else if (u[i] < 0.0) {
            step[i] = -1;
            t_maxv[i] = (bmin[i] + v[i] * r - origin[i]) / u[i];
            t_delta[i] = -r / u[i];
        } else {
            step[i] = 0;
            t_maxv[i] = std::numeric_limits<double>::infinity();
            t_delta[i] = std::numeric_limits<double>::infinity();
        }
    }

    const Block* block = nullptr;
    Eigen::Vector3i block_coord(-1, -1, -1);
    double t_entry = t0;
    while (t_entry < t1) {
        const Eigen::Vector3i bc = v / kBlockSide;
        if (bc != block_coord) {
            block_coord = bc;
            block = fetch_block(bc);
        }
        if (block) {
            const OccupancyVoxel& vox = block->voxels[voxel_index(v)];
            if (state_of(vox.log_odds) == VoxelState::occupied) {
                RayHit hit;
                hit.voxel_key = voxel_key(v);
                hit.voxel_centre = voxel_centre(v);
                hit.distance = t_entry;
                hit.min_obs_dist = vox.min_obs_dist;
                return hit;
            }
        }
        int axis = 0;
        if (t_maxv.y() < t_maxv.x()) {
            axis = 1;
        }
        if (t_maxv.z() < t_maxv[axis]) {
            axis = 2;
        }
        if (t_maxv[axis] >= t1) {
            break;
        }
        t_entry = t_maxv[axis];
        t_maxv[axis] += t_delta[axis];
        v[axis] += step[axis];
        if (v[axis] < 0 || v[axis] >= dims_[axis]) {
            break;
        }
    }
    return std::nullopt;
}

bool OccupancyMap::any_centre_in_capsule(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                         double radius, const Eigen::Vector3i& lo_v,
                                         const Eigen::Vector3i& hi_v) const
{
    const double r = config_.resolution;
    const Eigen::Vector3d bmin = config_.bounds.min();
    Eigen::Vector3i vlo, vhi; // inclusive candidate range inside [lo_v, hi_v)
    for (int i = 0; i < 3; ++i) {
        const double smin = std::min(a[i], b[i]) - radius;
        const double smax = std::max(a[i], b[i]) + radius;
        vlo[i] = std::max(lo_v[i], static_cast<int>(std::ceil((smin - bmin[i]) / r - 0.5)));
        vhi[i] = std::min(hi_v[i] - 1, static_cast<int>(std::floor((smax - bmin[i]) / r - 0.5)));
    }
    for (int z = vlo.z(); z <= vhi.z(); ++z) {
        for (int y = vlo.y(); y <= vhi.y(); ++y) {
            for (int x = vlo.x(); x <= vhi.x(); ++x) {
                if (point_segment_distance(voxel_centre({x, y, z}), a, b) <= radius) {
                    return true;
                }
            }
        }
    }
    return false;
}

bool OccupancyMap::segment_free_rec(const Node* node, const Eigen::Vector3i& corner, int level,
                                    const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                    double radius) const
{
    const double r = config_.resolution;
    const Eigen::Vector3d bmin = config_.bounds.min();
    const int side = kBlockSide << level; // node side length in voxels
    const Eigen::Vector3i vmin = corner * kBlockSide;

    // Voxel centres only exist inside the valid grid.
    const Eigen::Vector3i lo_v = vmin.cwiseMax(0);
    const Eigen::Vector3i hi_v = (vmin + Eigen::Vector3i::Constant(side)).cwiseMin(dims_);
    if ((hi_v - lo_v).minCoeff() <= 0) {
        return true;
    }
    const Eigen::AlignedBox3d centres(bmin + (lo_v.cast<double>() + Eigen::Vector3d::Constant(0.5)) * r,
                                      bmin + (hi_v.cast<double>() - Eigen::Vector3d::Constant(0.5)) * r);
    if (segment_box_distance(a, b, centres) > radius) {
        return true;
    }
    if (node && node->lo_max < free_lo_) {
        return true; // every voxel below (allocated or not) classifies free
    }
    if (!node) {
        // unallocated space is unknown: blocks iff a real centre is in the capsule
        return !any_centre_in_capsule(a, b, radius, lo_v, hi_v);
    }
    if (level == 0) {
        const Block* blk = node->block.get();
        if (!blk) {
            return !any_centre_in_capsule(a, b, radius, lo_v, hi_v);
        }
        // only centres inside the capsule's bounding box can qualify
        Eigen::Vector3i vlo, vhi; // inclusive
        for (int i = 0; i < 3; ++i) {
            const double smin = std::min(a[i], b[i]) - radius;
            const double smax = std::max(a[i], b[i]) + radius;
            vlo[i] = std::max(lo_v[i], static_cast<int>(std::ceil((smin - bmin[i]) / r - 0.5)));
            vhi[i] =
                std::min(hi_v[i] - 1, static_cast<int>(std::floor((smax - bmin[i]) / r - 0.5)));
        }
        for (int z = vlo.z(); z <= vhi.z(); ++z) {
            for (int y = vlo.y(); y <= vhi.y(); ++y) {
                for (int x = vlo.x(); x <= vhi.x(); ++x) {
                    const Eigen::Vector3i v(x, y, z);
                    const Eigen::Vector3d c = voxel_centre(v);
                    if (point_segment_distance(c, a, b) <= radius
                        && state_of(blk->voxels[voxel_index(v)].log_odds) != VoxelState::free) {
                        return false;
                    }
                }
            }
        }
        return true;
    }
    const int half = 1 << (level - 1);
    for (int i = 0; i < 8; ++i) {
        const Eigen::Vector3i c = corner + Eigen::Vector3i((i & 1) * half, ((i >> 1) & 1) * half,
                                                           ((i >> 2) & 1) * half);
        if (!segment_free_rec(node->child[i].get(), c, level - 1, a, b, radius)) {
            return false;
        }
    }
    return true;
}

bool OccupancyMap::segment_collision_free(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                          double radius) const
{
    if (!(radius >= 0.0)) {
        throw std::invalid_argument("segment_collision_free: negative radius");
    }
    return segment_free_rec(root_.get(), Eigen::Vector3i::Zero(), levels_, a, b, radius);
}

OccupancyMap::UpdateSummary OccupancyMap::carve_free_sphere(const Eigen::Vector3d& centre,
                                                            double radius)
{
    UpdateSummary summary;
    const Eigen::Vector3i lo =
        voxel_of(centre - Eigen::Vector3d::Constant(radius)).cwiseMax(0);
    const Eigen::Vector3i hi = voxel_of(centre + Eigen::Vector3d::Constant(radius))
                                   .cwiseMin(dims_ - Eigen::Vector3i::Ones());
    for (int z = lo.z(); z <= hi.z(); ++z) {
        for (int y = lo.y(); y <= hi.y(); ++y) {
            for (int x = lo.x(); x <= hi.x(); ++x) {
                const Eigen::Vector3i v(x, y, z);
                if ((voxel_centre(v) - centre).norm() > radius) {
                    continue;
                }
                Block& blk = allocate_block(v / kBlockSide);
                OccupancyVoxel& vox = blk.voxels[voxel_index(v)];
                const VoxelState st_old = state_of(vox.log_odds);
                vox.log_odds = -config_.log_odds_clamp;
                const VoxelState st_new = state_of(vox.log_odds);
                if (st_new != st_old) {
                    summary.state_changed.push_back(voxel_key(v));
                    free_count_ += (st_new == VoxelState::free) - (st_old == VoxelState::free);
                    occ_count_ +=
                        (st_new == VoxelState::occupied) - (st_old == VoxelState::occupied);
                }
                if (!blk.dirty) {
                    blk.dirty = true;
                    dirty_blocks_.push_back(&blk);
                }
                ++summary.updated_voxels;
            }
        }
    }
    refresh_dirty();
    return summary;
}

void OccupancyMap::for_each_allocated(
    const std::function<void(const Eigen::Vector3i&, const OccupancyVoxel&)>& fn) const
{
    std::function<void(const Node&, const Eigen::Vector3i&, int)> walk =
        [&](const Node& node, const Eigen::Vector3i& corner, int level) {
            if (level == 0) {
                if (!node.block) {
                    return;
                }
                const Eigen::Vector3i vmin = corner * kBlockSide;
                for (int z = 0; z < kBlockSide; ++z) {
                    for (int y = 0; y < kBlockSide; ++y) {
                        for (int x = 0; x < kBlockSide; ++x) {
                            const Eigen::Vector3i v = vmin + Eigen::Vector3i(x, y, z);
                            if (voxel_in_grid(v)) {
                                fn(v, node.block->voxels[voxel_index(v)]);
                            }
                        }
                    }
                }
                return;
            }
            const int half = 1 << (level - 1);
            for (int i = 0; i < 8; ++i) {
                if (node.child[i]) {
                    const Eigen::Vector3i c =
                        corner + Eigen::Vector3i((i & 1) * half, ((i >> 1) & 1) * half,
                                                 ((i >> 2) & 1) * half);
                    walk(*node.child[i], c, level - 1);
                }
            }
        };
    walk(*root_, Eigen::Vector3i::Zero(), levels_);
}

bool OccupancyMap::all_occupied_within(double dist) const
{
    bool ok = true;
    for_each_allocated([&](const Eigen::Vector3i&, const OccupancyVoxel& v) {
        if (ok && state_of(v.log_odds) == VoxelState::occupied && v.min_obs_dist > dist) {
            ok = false;
        }
    });
    return ok;
}

double OccupancyMap::fraction_occupied_within(double dist) const
{
    std::int64_t total = 0;
    std::int64_t within = 0;
    for_each_allocated([&](const Eigen::Vector3i&, const OccupancyVoxel& v) {
        if (state_of(v.log_odds) == VoxelState::occupied) {
            ++total;
            within += (v.min_obs_dist <= dist);
        }
    });
    return total == 0 ? 1.0 : static_cast<double>(within) / static_cast<double>(total);
}

void OccupancyMap::export_ply(const std::string& path) const
{
    std::vector<std::pair<Eigen::Vector3d, Rgb8>> points;
    for_each_allocated([&](const Eigen::Vector3i& v, const OccupancyVoxel& vox) {
        if (state_of(vox.log_odds) == VoxelState::occupied) {
            points.emplace_back(voxel_centre(v), vox.colour);
        }
    });
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw std::runtime_error("export_ply: cannot open " + path);
    }
    std::fprintf(f,
                 "ply\nformat ascii 1.0\nelement vertex %zu\n"
                 "property float x\nproperty float y\nproperty float z\n"
                 "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
                 points.size());
    for (const auto& [p, c] : points) {
        std::fprintf(f, "%.6f %.6f %.6f %u %u %u\n", p.x(), p.y(), p.z(), c.r, c.g, c.b);
    }
    std::fclose(f);
}

namespace {
constexpr char kSnapshotMagic[8] = {'S', 'C', 'O', 'U', 'T', 'O', 'C', 'C'};
constexpr std::uint32_t kSnapshotVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v)
{
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}
} // namespace

void OccupancyMap::save(const std::string& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("OccupancyMap::save: cannot open " + path);
    }
    out.write(kSnapshotMagic, sizeof(kSnapshotMagic));
    write_pod(out, kSnapshotVersion);
    write_pod(out, config_.resolution);
    const Eigen::Vector3d bmin = config_.bounds.min();
    const Eigen::Vector3d bmax = config_.bounds.max();
    out.write(reinterpret_cast<const char*>(bmin.data()), 3 * sizeof(double));
    out.write(reinterpret_cast<const char*>(bmax.data()), 3 * sizeof(double));
    write_pod(out, config_.log_odds_hit);
    write_pod(out, config_.log_odds_miss);
    write_pod(out, config_.log_odds_clamp);
    write_pod(out, config_.free_threshold);
    write_pod(out, config_.occupied_threshold);
    write_pod(out, free_count_);
    write_pod(out, occ_count_);

    std::vector<const Block*> blocks;
    std::function<void(const Node&)> collect = [&](const Node& node) {
        if (node.block) {
            blocks.push_back(node.block.get());
        }
        for (const auto& c : node.child) {
            if (c) {
                collect(*c);
            }
        }
    };
    collect(*root_);
    write_pod(out, static_cast<std::uint64_t>(blocks.size()));
    for (const Block* b : blocks) {
        write_pod(out, b->coord.x());
        write_pod(out, b->coord.y());
        write_pod(out, b->coord.z());
        for (const auto& v : b->voxels) {
            write_pod(out, v.log_odds);
            write_pod(out, v.fusion_weight);
            write_pod(out, v.colour.r);
            write_pod(out, v.colour.g);
            write_pod(out, v.colour.b);
            write_pod(out, v.min_obs_dist);
        }
    }
    write_pod(out, static_cast<std::uint64_t>(frontiers_.size()));
    for (const std::uint64_t k : frontiers_) {
        write_pod(out, k);
    }
    if (!out) {
        throw std::runtime_error("OccupancyMap::save: write failed for " + path);
    }
}

OccupancyMap OccupancyMap::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("OccupancyMap::load: cannot open " + path);
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("OccupancyMap::load: bad magic in " + path);
    }
    std::uint32_t version = 0;
    read_pod(in, version);
    if (version != kSnapshotVersion) {
        throw std::runtime_error("OccupancyMap::load: unsupported snapshot version");
    }
    OccupancyConfig cfg;
    read_pod(in, cfg.resolution);
    Eigen::Vector3d bmin, bmax;
    in.read(reinterpret_cast<char*>(bmin.data()), 3 * sizeof(double));
    in.read(reinterpret_cast<char*>(bmax.data()), 3 * sizeof(double));
    cfg.bounds = Eigen::AlignedBox3d(bmin, bmax);
    read_pod(in, cfg.log_odds_hit);
    read_pod(in, cfg.log_odds_miss);
    read_pod(in, cfg.log_odds_clamp);
    read_pod(in, cfg.free_threshold);
    read_pod(in, cfg.occupied_threshold);

    OccupancyMap map(cfg);
    read_pod(in, map.free_count_);
    read_pod(in, map.occ_count_);
    std::uint64_t n_blocks = 0;
    read_pod(in, n_blocks);
    for (std::uint64_t i = 0; i < n_blocks; ++i) {
        Eigen::Vector3i bc;
        read_pod(in, bc.x());
        read_pod(in, bc.y());
        read_pod(in, bc.z());
        Block& b = map.allocate_block(bc);
        for (auto& v : b.voxels) {
            read_pod(in, v.log_odds);
            read_pod(in, v.fusion_weight);
            read_pod(in, v.colour.r);
            read_pod(in, v.colour.g);
            read_pod(in, v.colour.b);
            read_pod(in, v.min_obs_dist);
        }
        b.refresh();
    }
    std::uint64_t n_frontiers = 0;
    read_pod(in, n_frontiers);
    for (std::uint64_t i = 0; i < n_frontiers; ++i) {
        std::uint64_t k = 0;
        read_pod(in, k);
        map.frontiers_.insert(k);
    }
    if (!in) {
        throw std::runtime_error("OccupancyMap::load: truncated snapshot " + path);
    }
    map.refresh_node(*map.root_, map.levels_);
    return map;
}

} // namespace scout
