// SPDX-License-Identifier: BSD-3-Clause

#include "scout/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scout {

void NoiseParams::validate() const
{
    if (!(sigma_min > 0.0) || !(sigma_max >= sigma_min)) {
        throw std::invalid_argument("noise: need 0 < sigma_min <= sigma_max");
    }
    if (!(slope >= 0.0)) {
        throw std::invalid_argument("noise: slope must be non-negative");
    }
}

double noise_sigma(double depth, const NoiseParams& params)
{
    return std::max(params.sigma_min, std::min(params.slope * depth, params.sigma_max));
}

void apply_noise(DepthImage& depth, const NoiseParams& params, std::mt19937_64& rng)
{
    params.validate();
    for (int y = 0; y < depth.height(); ++y) {
        for (int x = 0; x < depth.width(); ++x) {
            float& d = depth(x, y);
            if (!(std::isfinite(d) && d > 0.0f)) {
                continue;
            }
            std::normal_distribution<double> gauss(0.0, noise_sigma(d, params));
            const double noisy = static_cast<double>(d) + gauss(rng);
            d = noisy > 0.0 ? static_cast<float>(noisy) : 0.0f;
        }
    }
}

BinaryImage erode_mask(const BinaryImage& mask, int iterations)
{
    BinaryImage current = mask;
    for (int it = 0; it < iterations; ++it) {
        BinaryImage next = current;
        for (int y = 0; y < current.height(); ++y) {
            for (int x = 0; x < current.width(); ++x) {
                if (!current(x, y)) {
                    continue;
                }
                const bool keep = x > 0 && current(x - 1, y) && x + 1 < current.width()
                                  && current(x + 1, y) && y > 0 && current(x, y - 1)
                                  && y + 1 < current.height() && current(x, y + 1);
                if (!keep) {
                    next(x, y) = 0;
                }
            }
        }
        current = std::move(next);
    }
    return current;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

struct Simulator::Prim {
    int instance;
    bool is_box;
    Eigen::AlignedBox3d box;
    Eigen::Vector3d v0, e1, e2; // triangle: v0 + s*e1 + t*e2
};

Simulator::Simulator(Simulator&&) noexcept = default;
Simulator& Simulator::operator=(Simulator&&) noexcept = default;
Simulator::~Simulator() = default;

Simulator::Simulator(const Scene& scene) : scene_(&scene)
{
    scene.validate();
    for (std::size_t i = 0; i < scene.instances.size(); ++i) {
        const SceneInstance& inst = scene.instances[i];
        if (inst.box) {
            Prim p;
            p.instance = static_cast<int>(i);
            p.is_box = true;
            p.box = *inst.box;
            prims_.push_back(p);
        } else {
            for (const auto& tri : inst.mesh.triangles) {
                Prim p;
                p.instance = static_cast<int>(i);
                p.is_box = false;
                p.v0 = inst.mesh.vertices[tri[0]];
                p.e1 = inst.mesh.vertices[tri[1]] - p.v0;
                p.e2 = inst.mesh.vertices[tri[2]] - p.v0;
                prims_.push_back(p);
            }
        }
        if (inst.is_object()) {
            labelled_.push_back(static_cast<int>(i));
        }
    }
}

namespace {

/** Entry parameter of a ray into a box, or nullopt. The direction need not be
 *  unit length; t is in units of |dir|. Rays starting inside miss (the camera
 *  is never inside solid geometry). */
std::optional<double> ray_box_entry(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                    const Eigen::AlignedBox3d& box)
{
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < box.min()[a] || o[a] > box.max()[a]) {
                return std::nullopt;
            }
            continue;
        }
        const double inv = 1.0 / d[a];
        double ta = (box.min()[a] - o[a]) * inv;
        double tb = (box.max()[a] - o[a]) * inv;
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) {
            return std::nullopt;
        }
    }
    if (t0 <= 1e-9) {
        return std::nullopt;
    }
    return t0;
}

/** Moeller-Trumbore, two-sided. t in units of |dir|. */
std::optional<double> ray_triangle(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                   const Eigen::Vector3d& v0, const Eigen::Vector3d& e1,
                                   const Eigen::Vector3d& e2)
{
    const Eigen::Vector3d p = d.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-15) {
        return std::nullopt;
    }
    const double inv = 1.0 / det;
    const Eigen::Vector3d s = o - v0;
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) {
        return std::nullopt;
    }
    const Eigen::Vector3d q = s.cross(e1);
    const double v = d.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) {
        return std::nullopt;
    }
    const double t = e2.dot(q) * inv;
    if (t <= 1e-9) {
        return std::nullopt;
    }
    return t;
}

} // namespace

RenderOutput Simulator::render(const RigidTransform& T_WC, const CameraModel& cam) const
{
    cam.validate();
    if (!T_WC.is_rigid(1e-6)) {
        throw std::invalid_argument("camera pose is not a rigid transform");
    }

    RenderOutput out{DepthImage(cam.width, cam.height, 0.0f),
                     ColourImage(cam.width, cam.height, Rgb8{0, 0, 0}),
                     {},
                     labelled_};
    out.masks.reserve(labelled_.size());
    for (std::size_t i = 0; i < labelled_.size(); ++i) {
        out.masks.emplace_back(cam.width, cam.height, std::uint8_t{0});
    }
    std::vector<int> mask_of_instance(scene_->instances.size(), -1);
    for (std::size_t i = 0; i < labelled_.size(); ++i) {
        mask_of_instance[static_cast<std::size_t>(labelled_[i])] = static_cast<int>(i);
    }

    const Eigen::Vector3d origin = T_WC.t;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            // Unnormalized world direction with unit optical-axis component,
            // so intersection parameters are optical-axis depths directly.
            const Eigen::Vector3d dir_cam((x + 0.5 - cam.cx) / cam.fx,
                                          (y + 0.5 - cam.cy) / cam.fy, 1.0);
            const Eigen::Vector3d dir = T_WC.R * dir_cam;

            double best_t = std::numeric_limits<double>::infinity();
            int best_instance = -1;
            for (const Prim& prim : prims_) {
                std::optional<double> t =
                    prim.is_box ? ray_box_entry(origin, dir, prim.box)
                                : ray_triangle(origin, dir, prim.v0, prim.e1, prim.e2);
                if (t && *t < best_t) {
                    best_t = *t;
                    best_instance = prim.instance;
                }
            }
            if (best_instance < 0) {
                continue;
            }
            const SceneInstance& inst = scene_->instances[static_cast<std::size_t>(best_instance)];
            out.colour(x, y) = inst.colour;
            if (mask_of_instance[static_cast<std::size_t>(best_instance)] >= 0) {
                out.masks[static_cast<std::size_t>(
                    mask_of_instance[static_cast<std::size_t>(best_instance)])](x, y) = 1;
            }
            if (!inst.unmeasurable && best_t >= cam.d_min && best_t <= cam.d_max) {
                out.depth(x, y) = static_cast<float>(best_t);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Motion
// ---------------------------------------------------------------------------

StepResult step_along(const MavState& state, const std::vector<Waypoint>& path, double dt,
                      double v_max, double omega_max)
{
    if (path.empty()) {
        throw std::invalid_argument("step_along: empty path");
    }
    if (dt < 0.0) {
        throw std::invalid_argument("step_along: negative dt");
    }
    if (!(v_max > 0.0) || !(omega_max > 0.0)) {
        throw std::invalid_argument("step_along: rates must be positive");
    }
    StepResult result{state, false};
    auto at_goal = [&](const MavState& s) {
        return (s.position - path.back().position).norm() <= 1e-9
               && std::abs(wrap_angle(path.back().yaw - s.yaw)) <= 1e-6;
    };
    if (dt == 0.0) {
        result.arrived = at_goal(state);
        return result;
    }

    // Cumulative arc length of the polyline.
    std::vector<double> cum(path.size(), 0.0);
    for (std::size_t i = 1; i < path.size(); ++i) {
        cum[i] = cum[i - 1] + (path[i].position - path[i - 1].position).norm();
    }
    const double total = cum.back();

    // Arc-length parameter of the path point nearest to the current position
    // (first such segment on ties).
    double s_now = 0.0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const Eigen::Vector3d a = path[i].position;
        const Eigen::Vector3d ab = path[i + 1].position - a;
        const double len2 = ab.squaredNorm();
        const double u =
            len2 > 0.0 ? std::clamp((state.position - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const Eigen::Vector3d q = a + u * ab;
        const double d2 = (state.position - q).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            s_now = cum[i] + u * std::sqrt(len2);
        }
    }
    if (path.size() == 1) {
        s_now = 0.0;
    }

    // Advance position along the arc.
    const double s_new = std::min(total, s_now + v_max * dt);
    auto point_at = [&](double s) -> Eigen::Vector3d {
        for (std::size_t i = 1; i < path.size(); ++i) {
            if (s <= cum[i] || i + 1 == path.size()) {
                const double seg = cum[i] - cum[i - 1];
                const double u = seg > 0.0 ? std::clamp((s - cum[i - 1]) / seg, 0.0, 1.0) : 1.0;
                return path[i - 1].position + u * (path[i].position - path[i - 1].position);
            }
        }
        return path[0].position;
    };
    auto yaw_at = [&](double s) -> double {
        for (std::size_t i = 1; i < path.size(); ++i) {
            if (s <= cum[i] || i + 1 == path.size()) {
                const double seg = cum[i] - cum[i - 1];
                const double u = seg > 0.0 ? std::clamp((s - cum[i - 1]) / seg, 0.0, 1.0) : 1.0;
                return path[i - 1].yaw + u * wrap_angle(path[i].yaw - path[i - 1].yaw);
            }
        }
        return path[0].yaw;
    };
    // Chase the advanced arc point with a clamped step so the speed limit
    // holds even when the current position sits off the polyline; on-path
    // states reach the arc point exactly (a chord never exceeds its arc).
    const Eigen::Vector3d target = point_at(s_new);
    const Eigen::Vector3d delta = target - state.position;
    const double dist = delta.norm();
    const double budget = v_max * dt;
    result.state.position = dist <= budget ? target
                                           : state.position + delta * (budget / dist);

    // Rate-limited yaw towards the interpolated target, shortest direction.
    const double target_yaw = path.size() == 1 ? path[0].yaw : yaw_at(s_new);
    const double diff = wrap_angle(target_yaw - state.yaw);
    const double turn = std::clamp(diff, -omega_max * dt, omega_max * dt);
    result.state.yaw = wrap_angle(state.yaw + turn);

    // In-step guards: the kinematic limits must hold by construction.
    if ((result.state.position - state.position).norm() > budget + 1e-9
        || std::abs(turn) > omega_max * dt + 1e-12) {
        throw std::logic_error("step_along: kinematic limit violated");
    }

    result.arrived = at_goal(result.state);
    return result;
}

} // namespace scout
