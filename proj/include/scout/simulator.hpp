// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_SIMULATOR_HPP
#define SCOUT_SIMULATOR_HPP

#include "scout/geometry.hpp"
#include "scout/image.hpp"
#include "scout/planner.hpp"
#include "scout/scene.hpp"

#include <Eigen/Geometry>
#include <cstdint>
#include <random>
#include <vector>

namespace scout {

/** Distance-dependent depth noise. */
struct NoiseParams {
    double sigma_min = 0.005; ///< [m]
    double sigma_max = 0.2;   ///< [m]
    double slope = 0.002;     ///< dimensionless
    std::uint64_t seed = 0;

    void validate() const; ///< throws std::invalid_argument on bad values
};

/** sigma(d) = max(sigma_min, min(slope*d, sigma_max)). */
double noise_sigma(double depth, const NoiseParams& params);

/** Perturb every valid pixel with zero-mean Gaussian noise of std sigma(d), in
 *  row-major order; invalid pixels stay untouched. A perturbed value at or
 *  below zero becomes invalid. */
void apply_noise(DepthImage& depth, const NoiseParams& params, std::mt19937_64& rng);

/** 4-neighbour erosion, `iterations` times (emulates segmentation masks that
 *  undershoot object borders). */
BinaryImage erode_mask(const BinaryImage& mask, int iterations);

struct RenderOutput {
    DepthImage depth;   ///< optical-axis depth [m]; 0 marks invalid
    ColourImage colour; ///< flat instance colours; black where nothing is hit
    std::vector<BinaryImage> masks; ///< exact masks of labelled instances
    std::vector<int> mask_instances; ///< scene instance index per mask
};

/** Ray-traced RGB-D + ground-truth instance mask rendering of a scene. */
class Simulator {
public:
    explicit Simulator(const Scene& scene);
    Simulator(Simulator&&) noexcept;
    Simulator& operator=(Simulator&&) noexcept;
    ~Simulator();

    const Scene& scene() const { return *scene_; }

    /** Per pixel: the nearest box/triangle intersection wins (lower instance
     *  on ties); its optical-axis depth is valid when inside [d_min, d_max]
     *  and the instance is measurable, else 0. Masks mark the nearest-hit
     *  pixels of each labelled instance regardless of depth validity (the
     *  colour image sees them, so a detector would too). */
    RenderOutput render(const RigidTransform& T_WC, const CameraModel& cam) const;

private:
    struct Prim; // one box or one triangle

    const Scene* scene_;
    std::vector<Prim> prims_;
    std::vector<int> labelled_; ///< scene indices of labelled instances
};

/** Kinematic state of the simulated platform. */
struct MavState {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double yaw = 0.0;
};

struct StepResult {
    MavState state;
    bool arrived = false;
};

/** Advance along a yawed polyline for one tick: at most v_max*dt of arc
 *  length, with yaw rate-limited by omega_max*dt towards the arc-length
 *  interpolation of the vertex yaws (shortest direction). Progress restarts
 *  from the point of the path nearest to the current position, so callers
 *  step the returned state. Arrived once the final vertex is reached and the
 *  final yaw matches within 1e-6. Throws std::invalid_argument on an empty
 *  path or dt < 0; dt == 0 returns the state unchanged. */
StepResult step_along(const MavState& state, const std::vector<Waypoint>& path, double dt,
                      double v_max, double omega_max);

} // namespace scout

#endif
