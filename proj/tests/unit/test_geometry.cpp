// SPDX-License-Identifier: BSD-3-Clause

#include <doctest.h>

#include "scout/geometry.hpp"

#include <cmath>
#include <random>

using namespace scout;

TEST_CASE("wrap_angle maps into [-pi, pi) and preserves the angle mod 2pi")
{
    CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
    CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));   // pi itself wraps to -pi
    CHECK(wrap_angle(-kPi) == doctest::Approx(-kPi));
    CHECK(wrap_angle(3.0 * kPi) == doctest::Approx(-kPi));
    CHECK(wrap_angle(2.0 * kPi) == doctest::Approx(0.0));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng);
        const double w = wrap_angle(a);
        CHECK(w >= -kPi);
        CHECK(w < kPi);
        // same angle modulo 2*pi
        const double diff = std::remainder(a - w, 2.0 * kPi);
        CHECK(std::abs(diff) < 1e-9);
    }
}

TEST_CASE("RigidTransform compose/inverse round-trips points")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Vector3d axis = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
        const double angle = 3.0 * u(rng);
        RigidTransform T;
        T.R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
        T.t = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 5.0;
        CHECK(T.is_rigid(1e-9));

        const Eigen::Vector3d p(u(rng), u(rng), u(rng));
        const Eigen::Vector3d q = T * p;
        CHECK((T.inverse() * q - p).norm() < 1e-9);

        RigidTransform I = T * T.inverse();
        CHECK((I.R - Eigen::Matrix3d::Identity()).norm() < 1e-9);
        CHECK(I.t.norm() < 1e-9);
    }

    RigidTransform skewed;
    skewed.R(0, 1) = 0.3;
    CHECK_FALSE(skewed.is_rigid(1e-9));
}

TEST_CASE("camera validate rejects bad parameters")
{
    CameraModel cam = CameraModel::centred(320, 240, 262.5, 262.5, 0.1, 10.0);
    CHECK_NOTHROW(cam.validate());
    CHECK(cam.cx == doctest::Approx(160.0));
    CHECK(cam.cy == doctest::Approx(120.0));

    auto broken = cam;
    broken.width = 0;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    broken = cam;
    broken.fx = 0.0;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    broken = cam;
    broken.d_max = broken.d_min;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    broken = cam;
    broken.d_min = -1.0;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("camera fov matches analytic half-angle formula")
{
    CameraModel cam = CameraModel::centred(320, 240, 262.5, 262.5, 0.1, 10.0);
    CHECK(cam.horizontal_fov() == doctest::Approx(2.0 * std::atan2(160.0, 262.5)).epsilon(1e-12));
    CHECK(cam.vertical_fov() == doctest::Approx(2.0 * std::atan2(120.0, 262.5)).epsilon(1e-12));
}

TEST_CASE("project/backproject are mutually inverse on the image interior")
{
    CameraModel cam = CameraModel::centred(320, 240, 262.5, 262.5, 0.1, 10.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ux(0.0, 320.0);
    std::uniform_real_distribution<double> uy(0.0, 240.0);
    std::uniform_real_distribution<double> ud(0.05, 20.0);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector2d px(ux(rng), uy(rng));
        const double d = ud(rng);
        const Eigen::Vector3d p = cam.backproject(px, d);
        CHECK(p.z() == doctest::Approx(d)); // depth is z distance
        auto back = cam.project(p);
        REQUIRE(back.has_value());
        CHECK((*back - px).norm() < 1e-9);

        const Eigen::Vector3d r = cam.ray_direction(px);
        CHECK(r.norm() == doctest::Approx(1.0));
        // ray through the pixel passes through the backprojected point
        CHECK((r.cross(p.normalized())).norm() < 1e-9);
    }
}

TEST_CASE("project rejects points behind the camera and outside the frame")
{
    CameraModel cam = CameraModel::centred(320, 240, 262.5, 262.5, 0.1, 10.0);
    CHECK_FALSE(cam.project(Eigen::Vector3d(0, 0, -1)).has_value());
    CHECK_FALSE(cam.project(Eigen::Vector3d(0, 0, 0)).has_value());
    // point far off to the side projects outside the image
    CHECK_FALSE(cam.project(Eigen::Vector3d(100, 0, 1)).has_value());
    CHECK(cam.project(Eigen::Vector3d(0, 0, 1)).has_value());
    CHECK_THROWS_AS(cam.backproject(Eigen::Vector2d(10, 10), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(cam.backproject(Eigen::Vector2d(10, 10), -2.0), std::invalid_argument);
}

TEST_CASE("backprojected pixel centre spacing matches focal length")
{
    CameraModel cam = CameraModel::centred(320, 240, 262.5, 262.5, 0.1, 10.0);
    const Eigen::Vector3d a = cam.backproject(Eigen::Vector2d(160.0, 120.0), 1.0);
    CHECK(a.x() == doctest::Approx(0.0));
    CHECK(a.y() == doctest::Approx(0.0));
    const Eigen::Vector3d b = cam.backproject(Eigen::Vector2d(161.0, 120.0), 1.0);
    CHECK(b.x() == doctest::Approx(1.0 / 262.5));
}

TEST_CASE("panorama columns wrap azimuth and rows span elevation symmetrically")
{
    PanoramaModel pano{36, 10, 2.0 * (std::atan2(120.0, 262.5) + 15.0 * kPi / 180.0)};
    CHECK_NOTHROW(pano.validate());

    // centre column has azimuth 0, rows are symmetric about the horizon
    CHECK(pano.azimuth_of_column(18.0) == doctest::Approx(0.0));
    CHECK(pano.elevation_of_row(5.0) == doctest::Approx(0.0));
    CHECK(pano.azimuth_step() == doctest::Approx(2.0 * kPi / 36.0));
    CHECK(pano.elevation_step() == doctest::Approx(pano.elevation_span / 10.0));

    // direction() at the centre of the grid looks along +x (azimuth 0 towards +y)
    for (int c = 0; c < 36; ++c) {
        for (int r = 0; r < 10; ++r) {
            const Eigen::Vector3d d = pano.direction(c, r);
            CHECK(d.norm() == doctest::Approx(1.0));
            // analytic reconstruction: directions sample the integer lattice,
            // so the middle column looks exactly along +x
            const double az = pano.azimuth_of_column(c);
            const double el = pano.elevation_of_row(r);
            const Eigen::Vector3d expect(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                         std::sin(el));
            CHECK((d - expect).norm() < 1e-12);

            // project() recovers the pixel
            auto back = pano.project(d);
            REQUIRE(back.has_value());
            CHECK(back->x() == c);
            CHECK(back->y() == r);
        }
    }

    CHECK_THROWS_AS(pano.direction(-1, 0), std::out_of_range);
    CHECK_THROWS_AS(pano.direction(0, 10), std::out_of_range);

    // straight up lies outside the covered elevation span
    CHECK_FALSE(pano.project(Eigen::Vector3d(0, 0, 1)).has_value());
    // azimuth wraps: a direction just past the seam projects to column 0 or w-1
    const Eigen::Vector3d seam =
        Eigen::Vector3d(std::cos(kPi - 1e-6), std::sin(kPi - 1e-6), 0.0);
    auto sp = pano.project(seam);
    REQUIRE(sp.has_value());
    CHECK((sp->x() == 0 || sp->x() == 35));
}

TEST_CASE("camera_pose: optical axis follows yaw, image y points down")
{
    const Eigen::Vector3d pos(1.0, 2.0, 3.0);
    for (double yaw : {0.0, 0.7, -2.1, kPi / 2.0}) {
        RigidTransform T = camera_pose(pos, yaw);
        CHECK(T.is_rigid(1e-9));
        CHECK((T.t - pos).norm() < 1e-12);
        // optical axis (camera z) is horizontal, along the heading
        const Eigen::Vector3d fwd = T.R.col(2);
        CHECK(fwd.z() == doctest::Approx(0.0));
        CHECK(fwd.x() == doctest::Approx(std::cos(yaw)));
        CHECK(fwd.y() == doctest::Approx(std::sin(yaw)));
        // camera y (image down) maps to world -z
        CHECK((T.R.col(1) - Eigen::Vector3d(0, 0, -1)).norm() < 1e-9);
        // right-handed basis: forward x right = image down = world -z
        const Eigen::Vector3d right = T.R.col(0);
        CHECK(right.z() == doctest::Approx(0.0));
        CHECK((fwd.cross(right) - Eigen::Vector3d(0, 0, -1)).norm() < 1e-9);
    }
}
