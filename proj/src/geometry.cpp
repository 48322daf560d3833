// SPDX-License-Identifier: BSD-3-Clause

#include "scout/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace scout {

double wrap_angle(double a)
{
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a < 0.0) {
        a += 2.0 * M_PI;
    }
    return a - M_PI;
}

bool RigidTransform::is_rigid(double tol) const
{
    const Eigen::Matrix3d e = R * R.transpose() - Eigen::Matrix3d::Identity();
    return e.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

CameraModel CameraModel::centred(int width, int height, double fx, double fy, double d_min,
                                 double d_max)
{
    CameraModel c;
    c.width = width;
    c.height = height;
    c.fx = fx;
    c.fy = fy;
    c.cx = 0.5 * width;
    c.cy = 0.5 * height;
    c.d_min = d_min;
    c.d_max = d_max;
    c.validate();
    return c;
}

void CameraModel::validate() const
{
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("CameraModel: image dimensions must be positive");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw std::invalid_argument("CameraModel: focal lengths must be positive");
    }
    if (!(d_min > 0.0) || !(d_max > d_min)) {
        throw std::invalid_argument("CameraModel: depth range must satisfy 0 < d_min < d_max");
    }
}

double CameraModel::horizontal_fov() const
{
    return 2.0 * std::atan2(0.5 * width, fx);
}

double CameraModel::vertical_fov() const
{
    return 2.0 * std::atan2(0.5 * height, fy);
}

std::optional<Eigen::Vector2d> CameraModel::project(const Eigen::Vector3d& p_c) const
{
    if (!(p_c.z() > 0.0)) {
        return std::nullopt;
    }
    const double u = fx * p_c.x() / p_c.z() + cx;
    const double v = fy * p_c.y() / p_c.z() + cy;
    if (u < 0.0 || u >= width || v < 0.0 || v >= height) {
        return std::nullopt;
    }
    return Eigen::Vector2d(u, v);
}

Eigen::Vector3d CameraModel::backproject(const Eigen::Vector2d& pixel, double depth) const
{
    if (!(depth > 0.0)) {
        throw std::invalid_argument("CameraModel::backproject: depth must be positive");
    }
    return {(pixel.x() - cx) / fx * depth, (pixel.y() - cy) / fy * depth, depth};
}

Eigen::Vector3d CameraModel::ray_direction(const Eigen::Vector2d& pixel) const
{
    return backproject(pixel, 1.0).normalized();
}

void PanoramaModel::validate() const
{
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("PanoramaModel: dimensions must be positive");
    }
    if (!(elevation_span > 0.0) || elevation_span > M_PI) {
        throw std::invalid_argument("PanoramaModel: elevation span must be in (0, pi]");
    }
}

Eigen::Vector3d PanoramaModel::direction(int col, int row) const
{
    if (col < 0 || col >= width || row < 0 || row >= height) {
        throw std::out_of_range("PanoramaModel::direction: pixel outside grid");
    }
    const double az = azimuth_of_column(col);
    const double el = elevation_of_row(row);
    const double c = std::cos(el);
    return {c * std::cos(az), c * std::sin(az), std::sin(el)};
}

std::optional<Eigen::Vector2i> PanoramaModel::project(const Eigen::Vector3d& dir) const
{
    const double n = dir.norm();
    if (!(n > 0.0)) {
        return std::nullopt;
    }
    const double az = std::atan2(dir.y(), dir.x());
    const double el = std::asin(std::clamp(dir.z() / n, -1.0, 1.0));
    long col = std::lround(az / azimuth_step()) + width / 2;
    col = ((col % width) + width) % width;
    const long row = std::lround(0.5 * height - el / elevation_step());
    if (row < 0 || row >= height) {
        return std::nullopt;
    }
    return Eigen::Vector2i(static_cast<int>(col), static_cast<int>(row));
}

RigidTransform camera_pose(const Eigen::Vector3d& position, double yaw)
{
    // Optical axis along the heading, image x to the platform's right, image y
    // down: camera axes expressed in the world frame at yaw 0 are
    // x_c = -y_w, y_c = -z_w, z_c = +x_w.
    Eigen::Matrix3d r0;
    r0.col(0) = Eigen::Vector3d(0, -1, 0);
    r0.col(1) = Eigen::Vector3d(0, 0, -1);
    r0.col(2) = Eigen::Vector3d(1, 0, 0);
    RigidTransform T;
    T.R = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix() * r0;
    T.t = position;
    return T;
}

} // namespace scout
