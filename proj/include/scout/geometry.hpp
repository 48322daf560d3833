// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_GEOMETRY_HPP
#define SCOUT_GEOMETRY_HPP

#include <Eigen/Dense>
#include <optional>

namespace scout {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/** Wrap an angle to [-pi, pi). */
double wrap_angle(double a);

/** Rigid body transform (rotation + translation), mapping points from the
 *  source frame into the target frame. */
struct RigidTransform {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return R * p + t; }

    RigidTransform operator*(const RigidTransform& o) const { return {R * o.R, R * o.t + t}; }

    RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

    /** True iff R is orthonormal with determinant +1 within tol. */
    bool is_rigid(double tol = 1e-9) const;
};

/** Pinhole camera. Standard computer-vision frame: z forward, x right, y down.
 *  Pixel coordinates are continuous; the centre of array pixel (i, j) is
 *  (i + 0.5, j + 0.5). Depth values are distances along the optical axis. */
struct CameraModel {
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double d_min = 0.0; ///< nearest measurable depth [m]
    double d_max = 0.0; ///< farthest measurable depth [m]

    /** Camera with the principal point at the image centre. */
    static CameraModel centred(int width, int height, double fx, double fy, double d_min,
                               double d_max);

    /** Throws std::invalid_argument on non-positive dimensions, focal lengths
     *  or an empty/inverted depth range. */
    void validate() const;

    double horizontal_fov() const; ///< full horizontal field of view [rad]
    double vertical_fov() const;   ///< full vertical field of view [rad]

    /** Project a camera-frame point. Returns the continuous pixel position, or
     *  nullopt when the point is behind the camera or outside the image. */
    std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& p_c) const;

    /** Back-project a continuous pixel position at the given depth (> 0,
     *  distance along the optical axis). Throws std::invalid_argument on
     *  non-positive depth. */
    Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth) const;

    /** Unit direction of the viewing ray through a continuous pixel position,
     *  in the camera frame. */
    Eigen::Vector3d ray_direction(const Eigen::Vector2d& pixel) const;
};

/** Equal-angle panorama used for gain images and the invalid-depth history.
 *  Columns cover the full 360 degree azimuth range: column w/2 has azimuth 0
 *  (world +x), adjacent columns differ by 2*pi/w, azimuth grows towards +y.
 *  Rows cover elevations symmetric about horizontal: row h/2 has elevation 0,
 *  adjacent rows differ by span/h, row 0 is the highest elevation. */
struct PanoramaModel {
    int width = 0;
    int height = 0;
    double elevation_span = 0.0; ///< full covered elevation range [rad]

    void validate() const;

    double azimuth_step() const { return 2.0 * M_PI / width; }
    double elevation_step() const { return elevation_span / height; }

    double azimuth_of_column(double col) const { return (col - 0.5 * width) * azimuth_step(); }
    double elevation_of_row(double row) const { return (0.5 * height - row) * elevation_step(); }

    /** Unit world-frame direction of a pixel. Throws std::out_of_range when the
     *  pixel is outside the grid. */
    Eigen::Vector3d direction(int col, int row) const;

    /** Nearest pixel for a direction, or nullopt when its elevation falls
     *  outside the covered span. The azimuth wraps cyclically. */
    std::optional<Eigen::Vector2i> project(const Eigen::Vector3d& dir) const;
};

/** Camera-to-world pose of the body-carried camera for a hovering platform at
 *  `position` with heading `yaw` (world frame: x forward at yaw 0, z up). The
 *  optical axis is horizontal and points along the heading. */
RigidTransform camera_pose(const Eigen::Vector3d& position, double yaw);

} // namespace scout

#endif
