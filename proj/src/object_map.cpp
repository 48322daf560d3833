// SPDX-License-Identifier: BSD-3-Clause

#include "scout/object_map.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scout {

namespace {

constexpr int kBlockShift = 3;
constexpr int kBlockSide = 1 << kBlockShift; // 8
constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;

inline Eigen::Vector3i block_of(const Eigen::Vector3i& v)
{
    return {v.x() >> kBlockShift, v.y() >> kBlockShift, v.z() >> kBlockShift};
}

inline int local_index(const Eigen::Vector3i& v)
{
    return (v.x() & (kBlockSide - 1)) | ((v.y() & (kBlockSide - 1)) << kBlockShift)
           | ((v.z() & (kBlockSide - 1)) << (2 * kBlockShift));
}

inline Eigen::Vector3i voxel_of_point(const Eigen::Vector3d& p, double res)
{
    return {static_cast<int>(std::floor(p.x() / res)), static_cast<int>(std::floor(p.y() / res)),
            static_cast<int>(std::floor(p.z() / res))};
}

inline bool depth_valid(float d) { return std::isfinite(d) && d > 0.0f; }

/** Entry/exit of a ray with a box; false when they do not meet in [t0, t1]. */
bool clip_ray_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                  const Eigen::AlignedBox3d& box, double& t0, double& t1)
{
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-15) {
            if (origin[a] < box.min()[a] || origin[a] > box.max()[a]) {
                return false;
            }
            continue;
        }
        double inv = 1.0 / dir[a];
        double ta = (box.min()[a] - origin[a]) * inv;
        double tb = (box.max()[a] - origin[a]) * inv;
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

std::int16_t encode_tsdf(double v)
{
    double c = std::clamp(v, -1.0, 1.0);
    return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

double decode_tsdf(std::int16_t q) { return static_cast<double>(q) / 32767.0; }

std::uint8_t encode_fg(double p)
{
    double c = std::clamp(p, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

double decode_fg(std::uint8_t q) { return static_cast<double>(q) / 255.0; }

// ---------------------------------------------------------------------------
// ObjectSubmap
// ---------------------------------------------------------------------------

struct ObjectSubmap::Block {
    std::array<TsdfPayload, kBlockVoxels> voxels{};
    std::array<float, kBlockVoxels> min_obs{};

    Block() { min_obs.fill(std::numeric_limits<float>::infinity()); }
};

ObjectSubmap::ObjectSubmap(int id, std::string label, double resolution, int weight_saturation)
    : id_(id), label_(std::move(label)), res_(resolution), trunc_(4.0 * resolution),
      weight_sat_(weight_saturation)
{
    if (!(res_ > 0.0)) {
        throw std::invalid_argument("object submap resolution must be positive");
    }
    if (weight_sat_ < 1) {
        throw std::invalid_argument("weight saturation must be at least 1");
    }
}

ObjectSubmap::ObjectSubmap(ObjectSubmap&&) noexcept = default;
ObjectSubmap& ObjectSubmap::operator=(ObjectSubmap&&) noexcept = default;
ObjectSubmap::~ObjectSubmap() = default;

ObjectSubmap::Block* ObjectSubmap::find_block(const Eigen::Vector3i& bc) const
{
    auto it = blocks_.find({bc.x(), bc.y(), bc.z()});
    return it == blocks_.end() ? nullptr : it->second.get();
}

ObjectSubmap::Block& ObjectSubmap::touch_block(const Eigen::Vector3i& bc)
{
    auto& slot = blocks_[{bc.x(), bc.y(), bc.z()}];
    if (!slot) {
        slot = std::make_unique<Block>();
    }
    return *slot;
}

Eigen::AlignedBox3d ObjectSubmap::extent() const
{
    if (!any_weight_) {
        return {};
    }
    return {ext_min_.cast<double>() * res_,
            (ext_max_.cast<double>() + Eigen::Vector3d::Ones()) * res_};
}

void ObjectSubmap::integrate(const DepthImage& depth, const ColourImage& colour,
                             const BinaryImage& detection_mask, const BinaryImage& rendered_mask,
                             const RigidTransform& T_WC, const CameraModel& cam, bool detected,
                             bool fuse_fg_zero)
{
    cam.validate();
    if (depth.width() != cam.width || depth.height() != cam.height
        || colour.width() != cam.width || colour.height() != cam.height
        || detection_mask.width() != cam.width || detection_mask.height() != cam.height
        || rendered_mask.width() != cam.width || rendered_mask.height() != cam.height) {
        throw std::invalid_argument("image dimensions do not match the camera");
    }
    if (!T_WC.is_rigid(1e-6)) {
        throw std::invalid_argument("camera pose is not a rigid transform");
    }

    const BinaryImage& active = detected ? detection_mask : rendered_mask;

    // Allocation pass: walk the truncation band of every active measurement and
    // make sure the blocks it crosses exist, so the projective update below can
    // reach them. Blocks are only ever created near observed surface.
    Eigen::Vector3i last_bc(INT_MIN, INT_MIN, INT_MIN);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            if (!active(x, y)) {
                continue;
            }
            float d = depth(x, y);
            if (!depth_valid(d)) {
                continue;
            }
            Eigen::Vector3d dir_cam((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
            double z0 = std::max(1e-6, static_cast<double>(d) - trunc_ - res_);
            double z1 = static_cast<double>(d) + trunc_ + res_;
            for (double z = z0; z <= z1; z += 0.5 * res_) {
                Eigen::Vector3d p_w = T_WC * (dir_cam * z);
                Eigen::Vector3i bc = block_of(voxel_of_point(p_w, res_));
                if (bc != last_bc) {
                    touch_block(bc);
                    last_bc = bc;
                }
            }
        }
    }

    // Projective update over every allocated voxel.
    const RigidTransform T_CW = T_WC.inverse();
    const Eigen::Vector3d cam_centre = T_WC.t;
    for (auto& [bc_key, block] : blocks_) {
        const Eigen::Vector3i base(bc_key[0] * kBlockSide, bc_key[1] * kBlockSide,
                                   bc_key[2] * kBlockSide);
        for (int i = 0; i < kBlockVoxels; ++i) {
            const Eigen::Vector3i v = base
                                      + Eigen::Vector3i(i & (kBlockSide - 1),
                                                        (i >> kBlockShift) & (kBlockSide - 1),
                                                        i >> (2 * kBlockShift));
            const Eigen::Vector3d centre = voxel_centre(v);
            const Eigen::Vector3d p_c = T_CW * centre;
            if (p_c.z() <= 0.0) {
                continue;
            }
            auto px = cam.project(p_c);
            if (!px) {
                continue;
            }
            const int ix = static_cast<int>(std::floor(px->x()));
            const int iy = static_cast<int>(std::floor(px->y()));
            if (!depth.contains(ix, iy)) {
                continue;
            }
            const float d = depth(ix, iy);
            if (!depth_valid(d)) {
                continue;
            }
            const double sdf = static_cast<double>(d) - p_c.z();
            TsdfPayload& cell = block->voxels[static_cast<std::size_t>(i)];

            if (active(ix, iy) && sdf >= -trunc_) {
                const int w_old = cell.weight;
                const double obs = std::clamp(sdf / trunc_, -1.0, 1.0);
                const double fused =
                    (decode_tsdf(cell.tsdf) * w_old + obs) / static_cast<double>(w_old + 1);
                cell.tsdf = encode_tsdf(fused);
                if (std::abs(sdf) <= trunc_) {
                    const Rgb8 c = colour(ix, iy);
                    auto avg = [w_old](std::uint8_t prev, std::uint8_t obs8) {
                        return static_cast<std::uint8_t>(std::lround(
                            (static_cast<double>(prev) * w_old + obs8) / (w_old + 1)));
                    };
                    cell.colour = {avg(cell.colour.r, c.r), avg(cell.colour.g, c.g),
                                   avg(cell.colour.b, c.b)};
                    if (detected) {
                        cell.fg = encode_fg((decode_fg(cell.fg) * w_old + 1.0) / (w_old + 1));
                    }
                }
                cell.weight = static_cast<std::uint8_t>(std::min(w_old + 1, weight_sat_));
                float& mo = block->min_obs[static_cast<std::size_t>(i)];
                mo = std::min(mo, static_cast<float>((centre - cam_centre).norm()));
                if (w_old == 0) {
                    if (!any_weight_) {
                        ext_min_ = ext_max_ = v;
                        any_weight_ = true;
                    } else {
                        ext_min_ = ext_min_.cwiseMin(v);
                        ext_max_ = ext_max_.cwiseMax(v);
                    }
                }
            } else if (detected && fuse_fg_zero && cell.weight > 0 && std::abs(sdf) <= trunc_
                       && rendered_mask(ix, iy) && !detection_mask(ix, iy)) {
                const int w = cell.weight;
                cell.fg = encode_fg((decode_fg(cell.fg) * w) / (w + 1));
            }
        }
    }
}

std::optional<ObjectSubmap::SurfaceHit>
ObjectSubmap::ray_zero_crossing(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                double t_min, double t_max) const
{
    if (!any_weight_ || !(t_max > t_min)) {
        return std::nullopt;
    }
    const Eigen::Vector3d u = dir.normalized();
    double t0 = t_min;
    double t1 = t_max;
    if (!clip_ray_box(origin, u, extent(), t0, t1)) {
        return std::nullopt;
    }

    const double step = 0.5 * res_;
    bool prev_valid = false;
    double prev_val = 0.0;
    double prev_t = 0.0;
    Eigen::Vector3i prev_voxel = Eigen::Vector3i::Zero();
    float prev_min_obs = std::numeric_limits<float>::infinity();

    Eigen::Vector3i cached_bc(INT_MIN, INT_MIN, INT_MIN);
    const Block* cached_block = nullptr;

    for (double t = t0; t <= t1; t += step) {
        const Eigen::Vector3i v = voxel_of_point(origin + u * t, res_);
        const Eigen::Vector3i bc = block_of(v);
        if (bc != cached_bc) {
            cached_block = find_block(bc);
            cached_bc = bc;
        }
        bool valid = false;
        double val = 0.0;
        float mo = std::numeric_limits<float>::infinity();
        if (cached_block) {
            const int li = local_index(v);
            const TsdfPayload& cell = cached_block->voxels[static_cast<std::size_t>(li)];
            if (cell.weight > 0 && decode_fg(cell.fg) > 0.5) {
                valid = true;
                val = decode_tsdf(cell.tsdf);
                mo = cached_block->min_obs[static_cast<std::size_t>(li)];
            }
        }
        if (valid && prev_valid && prev_val > 0.0 && val <= 0.0) {
            const double denom = prev_val - val;
            const double frac = denom > 0.0 ? prev_val / denom : 0.5;
            SurfaceHit hit;
            hit.distance = prev_t + (t - prev_t) * frac;
            hit.point = origin + u * hit.distance;
            hit.voxel = prev_voxel;
            hit.min_obs_dist = prev_min_obs;
            return hit;
        }
        prev_valid = valid;
        prev_val = val;
        prev_t = t;
        prev_voxel = v;
        prev_min_obs = mo;
    }
    return std::nullopt;
}

TriangleMesh ObjectSubmap::extract_surface() const
{
    TriangleMesh mesh;
    if (!any_weight_) {
        return mesh;
    }

    // Vertices on cell edges are welded through a quantized-position map so
    // neighbouring cells share them.
    std::map<std::array<std::int64_t, 3>, std::uint32_t> vertex_index;
    auto add_vertex = [&](const Eigen::Vector3d& p) {
        const double q = 1e4 / res_;
        std::array<std::int64_t, 3> key = {static_cast<std::int64_t>(std::llround(p.x() * q)),
                                           static_cast<std::int64_t>(std::llround(p.y() * q)),
                                           static_cast<std::int64_t>(std::llround(p.z() * q))};
        auto [it, inserted] = vertex_index.emplace(key, static_cast<std::uint32_t>(
                                                            mesh.vertices.size()));
        if (inserted) {
            mesh.vertices.push_back(p);
        }
        return it->second;
    };

    auto corner_view = [&](const Eigen::Vector3i& v) -> std::optional<std::pair<double, bool>> {
        const Block* b = find_block(block_of(v));
        if (!b) {
            return std::nullopt;
        }
        const TsdfPayload& cell = b->voxels[static_cast<std::size_t>(local_index(v))];
        if (cell.weight == 0) {
            return std::nullopt;
        }
        return std::make_pair(decode_tsdf(cell.tsdf), decode_fg(cell.fg) > 0.5);
    };

    for (const auto& [bc_key, block] : blocks_) {
        const Eigen::Vector3i base(bc_key[0] * kBlockSide, bc_key[1] * kBlockSide,
                                   bc_key[2] * kBlockSide);
        for (int i = 0; i < kBlockVoxels; ++i) {
            if (block->voxels[static_cast<std::size_t>(i)].weight == 0) {
                continue;
            }
            const Eigen::Vector3i v = base
                                      + Eigen::Vector3i(i & (kBlockSide - 1),
                                                        (i >> kBlockShift) & (kBlockSide - 1),
                                                        i >> (2 * kBlockShift));
            // Cell anchored at v; all 8 corners must carry weight and be
            // foreground for the cell to produce geometry.
            std::array<double, 8> val{};
            std::array<Eigen::Vector3d, 8> pos;
            bool ok = true;
            for (int c = 0; c < 8 && ok; ++c) {
                const Eigen::Vector3i vc = v + kMcCorner[static_cast<std::size_t>(c)];
                auto view = corner_view(vc);
                if (!view || !view->second) {
                    ok = false;
                    break;
                }
                val[static_cast<std::size_t>(c)] = view->first;
                pos[static_cast<std::size_t>(c)] = voxel_centre(vc);
            }
            if (!ok) {
                continue;
            }
            int case_index = 0;
            for (int c = 0; c < 8; ++c) {
                if (val[static_cast<std::size_t>(c)] < 0.0) {
                    case_index |= 1 << c;
                }
            }
            const int edges = kMcEdgeTable[static_cast<std::size_t>(case_index)];
            if (edges == 0) {
                continue;
            }
            std::array<std::uint32_t, 12> edge_vertex{};
            for (int e = 0; e < 12; ++e) {
                if (!(edges & (1 << e))) {
                    continue;
                }
                const int c0 = kMcEdgeCorner[static_cast<std::size_t>(e)][0];
                const int c1 = kMcEdgeCorner[static_cast<std::size_t>(e)][1];
                const double v0 = val[static_cast<std::size_t>(c0)];
                const double v1 = val[static_cast<std::size_t>(c1)];
                const double denom = v1 - v0;
                const double frac = std::abs(denom) < 1e-12 ? 0.5 : std::clamp(-v0 / denom, 0.0, 1.0);
                const Eigen::Vector3d p = pos[static_cast<std::size_t>(c0)]
                                          + frac
                                                * (pos[static_cast<std::size_t>(c1)]
                                                   - pos[static_cast<std::size_t>(c0)]);
                edge_vertex[static_cast<std::size_t>(e)] = add_vertex(p);
            }
            const auto& tris = kMcTriTable[static_cast<std::size_t>(case_index)];
            for (int k = 0; tris[static_cast<std::size_t>(k)] != -1; k += 3) {
                const std::uint32_t a = edge_vertex[static_cast<std::size_t>(tris[k])];
                const std::uint32_t b = edge_vertex[static_cast<std::size_t>(tris[k + 1])];
                const std::uint32_t c = edge_vertex[static_cast<std::size_t>(tris[k + 2])];
                if (a == b || b == c || a == c) {
                    continue; // degenerate after welding
                }
                mesh.triangles.push_back({a, b, c});
            }
        }
    }
    return mesh;
}

void ObjectSubmap::for_each_weighted(const std::function<void(const VoxelView&)>& fn) const
{
    for (const auto& [bc_key, block] : blocks_) {
        const Eigen::Vector3i base(bc_key[0] * kBlockSide, bc_key[1] * kBlockSide,
                                   bc_key[2] * kBlockSide);
        for (int i = 0; i < kBlockVoxels; ++i) {
            const TsdfPayload& cell = block->voxels[static_cast<std::size_t>(i)];
            if (cell.weight == 0) {
                continue;
            }
            VoxelView view;
            view.index = base
                         + Eigen::Vector3i(i & (kBlockSide - 1),
                                           (i >> kBlockShift) & (kBlockSide - 1),
                                           i >> (2 * kBlockShift));
            view.tsdf = decode_tsdf(cell.tsdf);
            view.fg = decode_fg(cell.fg);
            view.colour = cell.colour;
            view.weight = cell.weight;
            view.min_obs_dist = block->min_obs[static_cast<std::size_t>(i)];
            fn(view);
        }
    }
}

std::vector<Eigen::Vector3i> ObjectSubmap::surface_voxels() const
{
    std::vector<Eigen::Vector3i> out;
    for_each_weighted([&](const VoxelView& v) {
        if (v.fg > 0.5 && std::abs(v.tsdf) < 0.25) {
            out.push_back(v.index);
        }
    });
    return out;
}

bool ObjectSubmap::all_surface_within(double dist) const
{
    bool ok = true;
    for_each_weighted([&](const VoxelView& v) {
        if (v.fg > 0.5 && std::abs(v.tsdf) < 0.25 && !(v.min_obs_dist <= dist)) {
            ok = false;
        }
    });
    return ok;
}

std::optional<ObjectSubmap::VoxelView> ObjectSubmap::voxel(const Eigen::Vector3i& index) const
{
    const Block* b = find_block(block_of(index));
    if (!b) {
        return std::nullopt;
    }
    const int li = local_index(index);
    const TsdfPayload& cell = b->voxels[static_cast<std::size_t>(li)];
    VoxelView view;
    view.index = index;
    view.tsdf = decode_tsdf(cell.tsdf);
    view.fg = decode_fg(cell.fg);
    view.colour = cell.colour;
    view.weight = cell.weight;
    view.min_obs_dist = b->min_obs[static_cast<std::size_t>(li)];
    return view;
}

void ObjectSubmap::write_voxel(const Eigen::Vector3i& index, double tsdf, double fg, int weight,
                               Rgb8 colour, float min_obs_dist)
{
    Block& block = touch_block(block_of(index));
    const int li = local_index(index);
    TsdfPayload& cell = block.voxels[static_cast<std::size_t>(li)];
    const bool was_weightless = cell.weight == 0;
    cell.tsdf = encode_tsdf(tsdf);
    cell.fg = encode_fg(fg);
    cell.colour = colour;
    cell.weight = static_cast<std::uint8_t>(std::clamp(weight, 0, weight_sat_));
    block.min_obs[static_cast<std::size_t>(li)] = min_obs_dist;
    if (cell.weight > 0 && was_weightless) {
        if (!any_weight_) {
            ext_min_ = ext_max_ = index;
            any_weight_ = true;
        } else {
            ext_min_ = ext_min_.cwiseMin(index);
            ext_max_ = ext_max_.cwiseMax(index);
        }
    }
}

// ---------------------------------------------------------------------------
// ClassTable / ObjectStore
// ---------------------------------------------------------------------------

void ClassTable::add(const std::string& label, double resolution)
{
    if (!(resolution > 0.0)) {
        throw std::invalid_argument("class resolution must be positive");
    }
    classes_[label] = resolution;
}

bool ClassTable::contains(const std::string& label) const { return classes_.count(label) > 0; }

double ClassTable::resolution(const std::string& label) const
{
    auto it = classes_.find(label);
    if (it == classes_.end()) {
        throw std::invalid_argument("unknown object class: " + label);
    }
    return it->second;
}

ObjectSubmap& ObjectStore::create(const std::string& label)
{
    const double res = classes_.resolution(label);
    objects_.push_back(std::make_unique<ObjectSubmap>(next_id_++, label, res, weight_sat_));
    return *objects_.back();
}

std::optional<std::pair<int, ObjectSubmap::SurfaceHit>>
ObjectStore::nearest_crossing(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                              double t_min, double t_max) const
{
    std::optional<std::pair<int, ObjectSubmap::SurfaceHit>> best;
    for (const auto& obj : objects_) {
        auto hit = obj->ray_zero_crossing(origin, dir, t_min, t_max);
        if (hit && (!best || hit->distance < best->second.distance)) {
            best = {obj->id(), *hit};
        }
    }
    return best;
}

bool ObjectStore::all_surface_within(double dist) const
{
    for (const auto& obj : objects_) {
        if (!obj->all_surface_within(dist)) {
            return false;
        }
    }
    return true;
}

double ObjectStore::fraction_surface_within(double dist) const
{
    std::size_t total = 0;
    std::size_t within = 0;
    for (const auto& obj : objects_) {
        obj->for_each_weighted([&](const ObjectSubmap::VoxelView& v) {
            if (v.fg > 0.5 && std::abs(v.tsdf) < 0.25) {
                ++total;
                if (v.min_obs_dist <= dist) {
                    ++within;
                }
            }
        });
    }
    return total == 0 ? 1.0 : static_cast<double>(within) / static_cast<double>(total);
}

void ObjectStore::export_meshes(const std::string& directory) const
{
    std::filesystem::create_directories(directory);
    for (const auto& obj : objects_) {
        if (obj->empty()) {
            continue;
        }
        TriangleMesh mesh = obj->extract_surface();
        if (mesh.empty()) {
            continue;
        }
        write_ply(mesh,
                  directory + "/object_" + std::to_string(obj->id()) + "_" + obj->label() + ".ply");
    }
}

// ---------------------------------------------------------------------------
// Mask rendering and matching
// ---------------------------------------------------------------------------

std::vector<BinaryImage> render_object_masks(const ObjectStore& store, const OccupancyMap& map,
                                             const RigidTransform& T_WC, const CameraModel& cam)
{
    cam.validate();
    if (!T_WC.is_rigid(1e-6)) {
        throw std::invalid_argument("camera pose is not a rigid transform");
    }
    std::vector<BinaryImage> masks;
    masks.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        masks.emplace_back(cam.width, cam.height, std::uint8_t{0});
    }
    if (store.size() == 0) {
        return masks;
    }

    const Eigen::Vector3d origin = T_WC.t;
    // Occlusion slack: the occupancy hit model marks voxels up to two voxels
    // in front of the measured surface and first-hit reports the band's entry
    // point, so a crossing needs that much headroom to count as unoccluded.
    const double tol = 3.0 * map.resolution();

    // cache the (slightly inflated) submap bounds; pixels whose ray misses all
    // of them can skip the background raycast entirely
    std::vector<Eigen::AlignedBox3d> extents(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        extents[i] = store.at(i).extent();
        if (!extents[i].isEmpty()) {
            extents[i].min().array() -= tol;
            extents[i].max().array() += tol;
        }
    }
    const auto ray_hits_box = [](const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                 const Eigen::AlignedBox3d& box, double t_hi) {
        double t0 = 0.0;
        double t1 = t_hi;
        for (int i = 0; i < 3; ++i) {
            if (d[i] == 0.0) {
                if (o[i] < box.min()[i] || o[i] > box.max()[i]) {
                    return false;
                }
                continue;
            }
            double ta = (box.min()[i] - o[i]) / d[i];
            double tb = (box.max()[i] - o[i]) / d[i];
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
    };

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Eigen::Vector3d dir_cam((x + 0.5 - cam.cx) / cam.fx,
                                          (y + 0.5 - cam.cy) / cam.fy, 1.0);
            const double scale = dir_cam.norm();
            const Eigen::Vector3d dir_w = (T_WC.R * dir_cam).normalized();
            const double t_min = cam.d_min * scale;
            const double t_cap = cam.d_max * scale;

            bool near_any = false;
            for (std::size_t i = 0; i < store.size() && !near_any; ++i) {
                near_any = !extents[i].isEmpty() && ray_hits_box(origin, dir_w, extents[i], t_cap);
            }
            if (!near_any) {
                continue;
            }

            double bg_t = std::numeric_limits<double>::infinity();
            if (auto hit = map.raycast_first_hit(origin, dir_w, t_cap)) {
                bg_t = hit->distance;
            }

            int best = -1;
            double best_t = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < store.size(); ++i) {
                auto hit = store.at(i).ray_zero_crossing(origin, dir_w, t_min,
                                                         std::min(t_cap, bg_t + tol));
                if (hit && hit->distance < best_t) {
                    best_t = hit->distance;
                    best = static_cast<int>(i);
                }
            }
            if (best >= 0 && best_t < bg_t + tol) {
                masks[static_cast<std::size_t>(best)](x, y) = 1;
            }
        }
    }
    return masks;
}

double mask_iou(const BinaryImage& a, const BinaryImage& b)
{
    if (a.width() != b.width() || a.height() != b.height()) {
        throw std::invalid_argument("mask sizes differ");
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            const bool pa = a(x, y) != 0;
            const bool pb = b(x, y) != 0;
            inter += pa && pb;
            uni += pa || pb;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<BinaryImage>& rendered_masks,
                             const std::vector<int>& rendered_ids, double iou_threshold)
{
    if (rendered_masks.size() != rendered_ids.size()) {
        throw std::invalid_argument("rendered mask/id count mismatch");
    }
    MatchResult result;
    result.detection_to_object.assign(detections.size(), -1);

    // Candidate pairs above threshold, best IoU first; ties resolved by lower
    // object id, then lower detection index.
    struct Pair {
        double iou;
        int object_id;
        int object_idx;
        int det_idx;
    };
    std::vector<Pair> pairs;
    for (std::size_t d = 0; d < detections.size(); ++d) {
        for (std::size_t o = 0; o < rendered_masks.size(); ++o) {
            const double iou = mask_iou(detections[d].mask, rendered_masks[o]);
            if (iou > iou_threshold) {
                pairs.push_back({iou, rendered_ids[o], static_cast<int>(o), static_cast<int>(d)});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return std::tie(b.iou, a.object_id, a.det_idx) < std::tie(a.iou, b.object_id, b.det_idx);
    });

    std::vector<bool> object_taken(rendered_masks.size(), false);
    for (const Pair& p : pairs) {
        if (object_taken[static_cast<std::size_t>(p.object_idx)]
            || result.detection_to_object[static_cast<std::size_t>(p.det_idx)] != -1) {
            continue;
        }
        object_taken[static_cast<std::size_t>(p.object_idx)] = true;
        result.detection_to_object[static_cast<std::size_t>(p.det_idx)] = p.object_id;
    }
    for (std::size_t d = 0; d < detections.size(); ++d) {
        if (result.detection_to_object[d] == -1) {
            result.unmatched_detections.push_back(static_cast<int>(d));
        }
    }
    return result;
}

} // namespace scout
