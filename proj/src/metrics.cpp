// SPDX-License-Identifier: BSD-3-Clause

#include "scout/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace scout {

namespace {

/** Exact distance from a point to the surface (not the solid) of a box:
 *  outside points use the usual clamped distance, inside points the gap to
 *  the nearest face. */
double box_surface_distance(const Eigen::AlignedBox3d& box, const Eigen::Vector3d& p)
{
    double out2 = 0.0;
    double inside = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double lo = box.min()[a] - p[a];
        const double hi = p[a] - box.max()[a];
        const double d = std::max({lo, hi, 0.0});
        out2 += d * d;
        inside = std::min(inside, std::max(-lo, 0.0));
        inside = std::min(inside, std::max(-hi, 0.0));
    }
    return out2 > 0.0 ? std::sqrt(out2) : inside;
}

/** Distance from a point to a triangle (closest-point construction). */
double triangle_distance(const std::array<Eigen::Vector3d, 3>& tri, const Eigen::Vector3d& p)
{
    const Eigen::Vector3d& a = tri[0];
    const Eigen::Vector3d& b = tri[1];
    const Eigen::Vector3d& c = tri[2];
    const Eigen::Vector3d ab = b - a;
    const Eigen::Vector3d ac = c - a;
    const Eigen::Vector3d ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        return (p - a).norm();
    }
    const Eigen::Vector3d bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        return (p - b).norm();
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return (p - (a + v * ab)).norm();
    }
    const Eigen::Vector3d cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        return (p - c).norm();
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return (p - (a + w * ac)).norm();
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + w * (c - b))).norm();
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return (p - (a + v * ab + w * ac)).norm();
}

void sample_box(const Eigen::AlignedBox3d& box, double spacing,
                std::vector<Eigen::Vector3d>& out)
{
    for (int axis = 0; axis < 3; ++axis) {
        const int u_axis = (axis + 1) % 3;
        const int v_axis = (axis + 2) % 3;
        const double u_len = box.max()[u_axis] - box.min()[u_axis];
        const double v_len = box.max()[v_axis] - box.min()[v_axis];
        const int nu = std::max(1, static_cast<int>(std::ceil(u_len / spacing)));
        const int nv = std::max(1, static_cast<int>(std::ceil(v_len / spacing)));
        for (int side = 0; side < 2; ++side) {
            Eigen::Vector3d p;
            p[axis] = side == 0 ? box.min()[axis] : box.max()[axis];
            for (int iu = 0; iu <= nu; ++iu) {
                p[u_axis] = box.min()[u_axis] + u_len * iu / nu;
                for (int iv = 0; iv <= nv; ++iv) {
                    p[v_axis] = box.min()[v_axis] + v_len * iv / nv;
                    out.push_back(p);
                }
            }
        }
    }
}

void sample_triangle(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c, double spacing,
                     std::vector<Eigen::Vector3d>& out)
{
    const double longest =
        std::max({(b - a).norm(), (c - a).norm(), (c - b).norm()});
    const int n = std::max(1, static_cast<int>(std::ceil(longest / spacing)));
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; i + j <= n; ++j) {
            const double u = static_cast<double>(i) / n;
            const double v = static_cast<double>(j) / n;
            out.push_back(a + u * (b - a) + v * (c - a));
        }
    }
}

/** Uniform-cell point grid answering "is any stored point within dist of p". */
class PointGrid {
public:
    explicit PointGrid(double cell) : cell_(cell) {}

    void insert(const Eigen::Vector3d& p) { cells_[key_of(p)].push_back(p); }

    bool any_within(const Eigen::Vector3d& p, double dist) const
    {
        const double d2 = dist * dist;
        const Eigen::Vector3i base = cell_of(p);
        for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto it = cells_.find(
                        pack(base + Eigen::Vector3i(dx, dy, dz)));
                    if (it == cells_.end()) {
                        continue;
                    }
                    for (const Eigen::Vector3d& q : it->second) {
                        if ((p - q).squaredNorm() <= d2) {
                            return true;
                        }
                    }
                }
            }
        }
        return false;
    }

private:
    Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const
    {
        return {static_cast<int>(std::floor(p.x() / cell_)),
                static_cast<int>(std::floor(p.y() / cell_)),
                static_cast<int>(std::floor(p.z() / cell_))};
    }
    static long long pack(const Eigen::Vector3i& c)
    {
        constexpr long long kOffset = 1 << 20;
        return ((c.x() + kOffset) << 42) ^ ((c.y() + kOffset) << 21) ^ (c.z() + kOffset);
    }
    long long key_of(const Eigen::Vector3d& p) const { return pack(cell_of(p)); }

    double cell_;
    std::unordered_map<long long, std::vector<Eigen::Vector3d>> cells_;
};

double median_of(std::vector<double> values)
{
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        std::nth_element(values.begin(), values.begin() + mid - 1,
                         values.begin() + mid);
        m = 0.5 * (m + values[mid - 1]);
    }
    return m;
}

std::vector<int> match_with_meshes(const ObjectStore& objects,
                                   const std::vector<TriangleMesh>& meshes,
                                   const GroundTruth& gt)
{
    std::vector<int> matches(objects.size(), -1);
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const ObjectSubmap& submap = objects.at(i);
        const TriangleMesh& mesh = meshes[i];
        if (mesh.vertices.empty()) {
            continue;
        }
        double best_median = std::numeric_limits<double>::infinity();
        int best_instance = -1;
        for (std::size_t j = 0; j < gt.objects().size(); ++j) {
            if (gt.objects()[j].label != submap.label()) {
                continue;
            }
            std::vector<double> dists;
            dists.reserve(mesh.vertices.size());
            for (const Eigen::Vector3d& v : mesh.vertices) {
                dists.push_back(gt.object_surface_distance(j, v));
            }
            const double med = median_of(std::move(dists));
            if (med < best_median) {
                best_median = med;
                best_instance = static_cast<int>(j);
            }
        }
        if (best_instance >= 0 && best_median < 2.0 * submap.resolution()) {
            matches[i] = best_instance;
        }
    }
    return matches;
}

} // namespace

GroundTruth::GroundTruth(const Scene& scene, double background_spacing, double object_spacing)
{
    scene.validate();
    for (const SceneInstance& inst : scene.instances) {
        Solid solid;
        const bool is_object = inst.is_object();
        const double spacing = is_object ? object_spacing : background_spacing;
        std::vector<Eigen::Vector3d> samples;
        if (inst.box) {
            solid.is_box = true;
            solid.box = *inst.box;
            sample_box(*inst.box, spacing, samples);
        } else {
            solid.tri_bounds.setEmpty();
            for (const auto& tri : inst.mesh.triangles) {
                const Eigen::Vector3d& a = inst.mesh.vertices[tri[0]];
                const Eigen::Vector3d& b = inst.mesh.vertices[tri[1]];
                const Eigen::Vector3d& c = inst.mesh.vertices[tri[2]];
                solid.triangles.push_back({a, b, c});
                solid.tri_bounds.extend(a);
                solid.tri_bounds.extend(b);
                solid.tri_bounds.extend(c);
                sample_triangle(a, b, c, spacing, samples);
            }
        }
        if (is_object) {
            solid.object_index = static_cast<int>(objects_.size());
            objects_.push_back({inst.name, inst.label, std::move(samples)});
        } else {
            background_.insert(background_.end(), samples.begin(), samples.end());
        }
        solids_.push_back(std::move(solid));
    }
}

double GroundTruth::solid_distance(const Solid& s, const Eigen::Vector3d& p) const
{
    if (s.is_box) {
        return box_surface_distance(s.box, p);
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tri : s.triangles) {
        best = std::min(best, triangle_distance(tri, p));
    }
    return best;
}

double GroundTruth::surface_distance(const Eigen::Vector3d& p) const
{
    double best = std::numeric_limits<double>::infinity();
    for (const Solid& s : solids_) {
        const Eigen::AlignedBox3d& bb = s.is_box ? s.box : s.tri_bounds;
        if (bb.exteriorDistance(p) >= best) {
            continue;
        }
        best = std::min(best, solid_distance(s, p));
    }
    return best;
}

double GroundTruth::object_surface_distance(std::size_t object_index,
                                            const Eigen::Vector3d& p) const
{
    double best = std::numeric_limits<double>::infinity();
    for (const Solid& s : solids_) {
        if (s.object_index != static_cast<int>(object_index)) {
            continue;
        }
        best = std::min(best, solid_distance(s, p));
    }
    return best;
}

std::vector<int> match_submaps_to_truth(const ObjectStore& objects, const GroundTruth& gt)
{
    std::vector<TriangleMesh> meshes;
    meshes.reserve(objects.size());
    for (std::size_t i = 0; i < objects.size(); ++i) {
        meshes.push_back(objects.at(i).extract_surface());
    }
    return match_with_meshes(objects, meshes, gt);
}

SceneMetrics compute_metrics(const OccupancyMap& map, const ObjectStore& objects,
                             const GroundTruth& gt, double d_bg, double d_obj,
                             double completeness_dist, bool background_quality)
{
    SceneMetrics m;
    const double res = map.resolution();
    m.explored_volume =
        static_cast<double>(map.free_count() + map.occupied_count()) * res * res * res;
    m.frontier_count = static_cast<std::int64_t>(map.frontiers().size());

    if (background_quality) {
        // Occupied voxel centres: accuracy against the true surfaces plus a
        // grid for background completeness.
        PointGrid occ_grid(completeness_dist);
        double occ_sq_sum = 0.0;
        std::int64_t occ_n = 0;
        const float occ_threshold = map.occupied_log_odds_threshold();
        map.for_each_allocated([&](const Eigen::Vector3i& v, const OccupancyVoxel& voxel) {
            if (voxel.log_odds <= occ_threshold) {
                return;
            }
            const Eigen::Vector3d centre = map.voxel_centre(v);
            occ_grid.insert(centre);
            const double d = gt.surface_distance(centre);
            occ_sq_sum += d * d;
            ++occ_n;
        });
        m.bg_acc = occ_n > 0 ? std::sqrt(occ_sq_sum / static_cast<double>(occ_n)) : 0.0;

        if (!gt.background_samples().empty() && occ_n > 0) {
            std::int64_t hit = 0;
            for (const Eigen::Vector3d& s : gt.background_samples()) {
                if (occ_grid.any_within(s, completeness_dist)) {
                    ++hit;
                }
            }
            m.bg_comp = 100.0 * static_cast<double>(hit)
                        / static_cast<double>(gt.background_samples().size());
        }
    }

    // Submap meshes: accuracy, object completeness and instance matching.
    std::vector<TriangleMesh> meshes;
    meshes.reserve(objects.size());
    PointGrid vertex_grid(completeness_dist);
    double vert_sq_sum = 0.0;
    std::int64_t vert_n = 0;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        meshes.push_back(objects.at(i).extract_surface());
        for (const Eigen::Vector3d& v : meshes.back().vertices) {
            vertex_grid.insert(v);
            const double d = gt.surface_distance(v);
            vert_sq_sum += d * d;
            ++vert_n;
        }
    }
    m.obj_acc = vert_n > 0 ? std::sqrt(vert_sq_sum / static_cast<double>(vert_n)) : 0.0;

    std::int64_t obj_samples = 0;
    std::int64_t obj_hit = 0;
    for (const GroundTruth::Instance& inst : gt.objects()) {
        for (const Eigen::Vector3d& s : inst.samples) {
            ++obj_samples;
            if (vert_n > 0 && vertex_grid.any_within(s, completeness_dist)) {
                ++obj_hit;
            }
        }
    }
    if (obj_samples > 0) {
        m.obj_comp = 100.0 * static_cast<double>(obj_hit) / static_cast<double>(obj_samples);
    }

    if (!gt.objects().empty()) {
        const std::vector<int> matches = match_with_meshes(objects, meshes, gt);
        std::vector<char> found(gt.objects().size(), 0);
        for (int match : matches) {
            if (match >= 0) {
                found[static_cast<std::size_t>(match)] = 1;
            }
        }
        const auto n_found = std::count(found.begin(), found.end(), 1);
        m.objects_found_pct =
            100.0 * static_cast<double>(n_found) / static_cast<double>(found.size());
    }

    if (map.occupied_count() > 0) {
        m.bg_within_dist_pct = 100.0 * map.fraction_occupied_within(d_bg);
    }
    std::size_t surface_total = 0;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        surface_total += objects.at(i).surface_voxels().size();
    }
    if (surface_total > 0) {
        m.obj_within_dist_pct = 100.0 * objects.fraction_surface_within(d_obj);
    }
    return m;
}

} // namespace scout
