// SPDX-License-Identifier: BSD-3-Clause

#include "scout/depth_history.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace scout;

namespace {

PanoramaModel test_pano()
{
    PanoramaModel p;
    p.width = 36;
    p.height = 10;
    p.elevation_span = 2.0; // radians, generous enough for the test rays
    return p;
}

Eigen::AlignedBox3d unit_bounds()
{
    return {Eigen::Vector3d::Zero(), Eigen::Vector3d(4.0, 4.0, 2.0)};
}

CameraModel small_cam() { return CameraModel::centred(8, 6, 10.0, 10.0, 0.1, 10.0); }

/** The panorama bin an image pixel's world ray falls into, computed the same
 *  way a caller would: unposed pixel ray, rotate to world, project. */
std::optional<Eigen::Vector2i> bin_of_pixel(const CameraModel& cam, const RigidTransform& T_WC,
                                            const PanoramaModel& pano, int x, int y)
{
    const Eigen::Vector3d dir_w =
        T_WC.R * cam.ray_direction(Eigen::Vector2d(x + 0.5, y + 0.5));
    return pano.project(dir_w);
}

} // namespace

TEST_CASE("history validates construction and starts empty")
{
    CHECK_THROWS_AS(DepthHistory(unit_bounds(), 0.0, test_pano()), std::invalid_argument);
    CHECK_THROWS_AS(DepthHistory(unit_bounds(), -1.0, test_pano()), std::invalid_argument);

    DepthHistory h(unit_bounds(), 0.5, test_pano());
    CHECK(h.cell_size() == doctest::Approx(0.5));
    CHECK(h.cell_count() == 0);
    CHECK(h.warning_count() == 0);
    CHECK(!h.has_record(Eigen::Vector3d(1.0, 1.0, 1.0)));

    // no record: fail-open all-ones mask
    const BinaryImage& m = h.mask_at(Eigen::Vector3d(1.0, 1.0, 1.0));
    CHECK(m.width() == 36);
    CHECK(m.height() == 10);
    CHECK(count_nonzero(m) == 36u * 10u);
}

TEST_CASE("recording clears exactly the bins of invalid pixels")
{
    const PanoramaModel pano = test_pano();
    const CameraModel cam = small_cam();
    DepthHistory h(unit_bounds(), 0.5, pano);

    const Eigen::Vector3d pos(1.0, 1.0, 1.0);
    const RigidTransform T_WC = camera_pose(pos, 0.3);

    DepthImage depth(cam.width, cam.height, 2.0f);
    depth(3, 2) = 0.0f;                                      // invalid: no return
    depth(5, 4) = std::numeric_limits<float>::quiet_NaN();   // invalid: not finite
    depth(0, 0) = -3.0f;                                     // invalid: negative
    depth(7, 5) = 20.0f; // far beyond d_max is still a return, so NOT recorded

    const std::size_t flips = h.record(depth, T_WC, cam);
    CHECK(h.has_record(pos));
    CHECK(h.cell_count() == 1);

    // oracle: project each invalid pixel's ray into the panorama
    std::set<std::pair<int, int>> expected;
    for (const auto& px : {std::pair{3, 2}, std::pair{5, 4}, std::pair{0, 0}}) {
        const auto bin = bin_of_pixel(cam, T_WC, pano, px.first, px.second);
        REQUIRE(bin.has_value());
        expected.insert({bin->x(), bin->y()});
    }
    CHECK(flips == expected.size());

    const BinaryImage& mask = h.mask_at(pos);
    std::size_t zeros = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask(x, y) == 0) {
                ++zeros;
                CHECK(expected.count({x, y}) == 1);
            }
        }
    }
    CHECK(zeros == expected.size());

    // recording the same frame again flips nothing new
    CHECK(h.record(depth, T_WC, cam) == 0);

    // a frame with only valid depth flips nothing
    DepthImage clean(cam.width, cam.height, 2.0f);
    CHECK(h.record(clean, T_WC, cam) == 0);
}

TEST_CASE("bins never recover and cells are independent")
{
    const PanoramaModel pano = test_pano();
    const CameraModel cam = small_cam();
    DepthHistory h(unit_bounds(), 0.5, pano);

    const Eigen::Vector3d a(0.6, 0.6, 0.6);
    const Eigen::Vector3d b(3.4, 3.4, 1.4); // different cell
    DepthImage depth(cam.width, cam.height, 2.0f);
    depth(4, 3) = 0.0f;

    h.record(depth, camera_pose(a, 0.0), cam);
    const std::size_t zeros_a = 36u * 10u - count_nonzero(h.mask_at(a));
    CHECK(zeros_a > 0);

    // valid-only frames afterwards leave the record untouched
    DepthImage clean(cam.width, cam.height, 2.0f);
    h.record(clean, camera_pose(a, 0.0), cam);
    CHECK(36u * 10u - count_nonzero(h.mask_at(a)) == zeros_a);

    // the other cell is unaffected until it records something
    CHECK(count_nonzero(h.mask_at(b)) == 36u * 10u);
    h.record(depth, camera_pose(b, 1.0), cam);
    CHECK(h.cell_count() == 2);
    CHECK(count_nonzero(h.mask_at(b)) < 36u * 10u);
    CHECK(36u * 10u - count_nonzero(h.mask_at(a)) == zeros_a);

    // positions in the same cell share one record
    const Eigen::Vector3d a2 = a + Eigen::Vector3d(0.1, 0.1, 0.1); // still cell (1,1,1)
    CHECK(&h.mask_at(a2) == &h.mask_at(a));
}

TEST_CASE("dilation additionally clears the neighbouring bins")
{
    const PanoramaModel pano = test_pano();
    const CameraModel cam = small_cam();
    const Eigen::Vector3d pos(2.0, 2.0, 1.0);
    const RigidTransform T_WC = camera_pose(pos, -0.7);

    DepthImage depth(cam.width, cam.height, 2.0f);
    depth(4, 3) = 0.0f;

    DepthHistory plain(unit_bounds(), 0.5, pano, /*dilate=*/false);
    DepthHistory fat(unit_bounds(), 0.5, pano, /*dilate=*/true);
    plain.record(depth, T_WC, cam);
    fat.record(depth, T_WC, cam);

    const auto bin = bin_of_pixel(cam, T_WC, pano, 4, 3);
    REQUIRE(bin.has_value());

    const BinaryImage& pm = plain.mask_at(pos);
    const BinaryImage& fm = fat.mask_at(pos);
    CHECK(count_nonzero(pm) == 36u * 10u - 1u);

    // the dilated record covers the 3x3 neighbourhood, azimuth wrapping
    std::size_t fat_zeros = 0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            const int yy = bin->y() + dy;
            if (yy < 0 || yy >= pano.height) {
                continue;
            }
            const int xx = ((bin->x() + dx) % pano.width + pano.width) % pano.width;
            CHECK(fm(xx, yy) == 0);
            ++fat_zeros;
        }
    }
    CHECK(count_nonzero(fm) == 36u * 10u - fat_zeros);
    // every bin cleared in the plain record is cleared in the dilated one
    for (int y = 0; y < pano.height; ++y) {
        for (int x = 0; x < pano.width; ++x) {
            if (pm(x, y) == 0) {
                CHECK(fm(x, y) == 0);
            }
        }
    }
}

TEST_CASE("out-of-bounds poses fail open and bump the warning counter")
{
    const CameraModel cam = small_cam();
    DepthHistory h(unit_bounds(), 0.5, test_pano());

    DepthImage depth(cam.width, cam.height, 2.0f);
    depth(1, 1) = 0.0f;

    const Eigen::Vector3d outside(9.0, 9.0, 9.0);
    CHECK(h.record(depth, camera_pose(outside, 0.0), cam) == 0);
    CHECK(h.warning_count() == 1);
    CHECK(h.cell_count() == 0);

    const BinaryImage& m = h.mask_at(outside);
    CHECK(count_nonzero(m) == 36u * 10u);
    CHECK(h.warning_count() == 2);
}

TEST_CASE("record validates image dimensions")
{
    const CameraModel cam = small_cam();
    DepthHistory h(unit_bounds(), 0.5, test_pano());
    DepthImage wrong(3, 3, 1.0f);
    CHECK_THROWS_AS(h.record(wrong, camera_pose(Eigen::Vector3d(1, 1, 1), 0.0), cam),
                    std::invalid_argument);
}

TEST_CASE("pgm dump writes one image per recorded cell")
{
    const CameraModel cam = small_cam();
    const PanoramaModel pano = test_pano();
    DepthHistory h(unit_bounds(), 0.5, pano);

    DepthImage depth(cam.width, cam.height, 2.0f);
    depth(2, 2) = 0.0f;
    h.record(depth, camera_pose(Eigen::Vector3d(1.0, 1.0, 1.0), 0.0), cam);

    const auto dir = std::filesystem::temp_directory_path() / "scout_history_dump";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    h.dump_pgm(dir.string());

    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        ++files;
        std::ifstream in(e.path(), std::ios::binary);
        std::string magic;
        in >> magic;
        CHECK(magic == "P2");
        int w = 0;
        int hh = 0;
        int maxval = 0;
        in >> w >> hh >> maxval;
        CHECK(w == pano.width);
        CHECK(hh == pano.height);
        CHECK(maxval == 255);
    }
    CHECK(files == h.cell_count());
    std::filesystem::remove_all(dir);
}
