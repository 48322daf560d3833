// SPDX-License-Identifier: BSD-3-Clause

#include "scout/object_map.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>

using namespace scout;

namespace {

ClassTable two_classes()
{
    ClassTable t;
    t.add("chair", 0.02);
    t.add("plant", 0.02);
    return t;
}

/** Author a horizontal slab whose zero level set is the plane z = plane_z.
 *  Voxels within the truncation band get tsdf = (plane_z - centre_z) / trunc,
 *  foreground fg and the given weight / observation distance. */
void write_plane_slab(ObjectSubmap& s, double plane_z, int xy_lo, int xy_hi, double fg,
                      int weight, float min_obs)
{
    const double res = s.resolution();
    const double trunc = s.truncation();
    const int z_lo = static_cast<int>(std::floor((plane_z - trunc) / res)) - 1;
    const int z_hi = static_cast<int>(std::ceil((plane_z + trunc) / res)) + 1;
    for (int z = z_lo; z <= z_hi; ++z) {
        for (int y = xy_lo; y <= xy_hi; ++y) {
            for (int x = xy_lo; x <= xy_hi; ++x) {
                const double cz = (z + 0.5) * res;
                const double tsdf = std::clamp((plane_z - cz) / trunc, -1.0, 1.0);
                s.write_voxel({x, y, z}, tsdf, fg, weight, {10, 200, 30}, min_obs);
            }
        }
    }
}

double iou_by_counting(const BinaryImage& a, const BinaryImage& b)
{
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            const bool pa = a(x, y) != 0;
            const bool pb = b(x, y) != 0;
            inter += (pa && pb) ? 1 : 0;
            uni += (pa || pb) ? 1 : 0;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/** Paint a filled rectangle [x0, x1) x [y0, y1) into a fresh mask. */
BinaryImage rect_mask(int w, int h, int x0, int y0, int x1, int y1)
{
    BinaryImage m(w, h, std::uint8_t{0});
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            m(x, y) = 1;
        }
    }
    return m;
}

} // namespace

TEST_CASE("tsdf quantization: code identity, bounded decode error, clamping")
{
    // every 16-bit code survives a decode/encode roundtrip
    for (int q = -32767; q <= 32767; ++q) {
        const auto code = static_cast<std::int16_t>(q);
        CHECK(encode_tsdf(decode_tsdf(code)) == code);
    }
    // random values decode back within half a bin of 2/65534 = 1/32767
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100000; ++i) {
        const double v = u(rng);
        CHECK(std::abs(decode_tsdf(encode_tsdf(v)) - v) <= 1.0 / 32767.0);
    }
    // clamping outside [-1, 1]
    CHECK(decode_tsdf(encode_tsdf(4.2)) == doctest::Approx(1.0));
    CHECK(decode_tsdf(encode_tsdf(-4.2)) == doctest::Approx(-1.0));
    CHECK(encode_tsdf(1.0) == 32767);
    CHECK(encode_tsdf(-1.0) == -32767);
    CHECK(encode_tsdf(0.0) == 0);
}

TEST_CASE("foreground quantization: code identity and bounded decode error")
{
    for (int q = 0; q <= 255; ++q) {
        const auto code = static_cast<std::uint8_t>(q);
        CHECK(encode_fg(decode_fg(code)) == code);
    }
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100000; ++i) {
        const double p = u(rng);
        CHECK(std::abs(decode_fg(encode_fg(p)) - p) <= 1.0 / 255.0);
    }
    CHECK(decode_fg(encode_fg(-0.5)) == doctest::Approx(0.0));
    CHECK(decode_fg(encode_fg(1.5)) == doctest::Approx(1.0));
}

TEST_CASE("payload layout stays compact")
{
    CHECK(sizeof(TsdfPayload) == 7);
    CHECK(sizeof(TsdfPayloadFloatBaseline) == 12);
    // at least 39% smaller than the float layout
    CHECK(100 * (sizeof(TsdfPayloadFloatBaseline) - sizeof(TsdfPayload))
          >= 39 * sizeof(TsdfPayloadFloatBaseline));
}

TEST_CASE("write_voxel then voxel round-trips quantized payloads")
{
    ObjectSubmap s(3, "chair", 0.02, 10);
    CHECK(s.empty());
    CHECK(s.extent().isEmpty());
    CHECK(s.id() == 3);
    CHECK(s.label() == "chair");
    CHECK(s.resolution() == doctest::Approx(0.02));
    CHECK(s.truncation() == doctest::Approx(4.0 * 0.02));

    s.write_voxel({4, -2, 7}, 0.375, 0.8, 5, {1, 2, 3}, 1.25f);
    CHECK(!s.empty());
    auto v = s.voxel({4, -2, 7});
    REQUIRE(v.has_value());
    CHECK(v->index == Eigen::Vector3i(4, -2, 7));
    CHECK(v->tsdf == doctest::Approx(decode_tsdf(encode_tsdf(0.375))));
    CHECK(std::abs(v->tsdf - 0.375) <= 1.0 / 32767.0);
    CHECK(std::abs(v->fg - 0.8) <= 1.0 / 255.0);
    CHECK(v->weight == 5);
    CHECK(v->colour.r == 1);
    CHECK(v->colour.g == 2);
    CHECK(v->colour.b == 3);
    CHECK(v->min_obs_dist == doctest::Approx(1.25f));

    // weight clamps at the saturation limit
    s.write_voxel({0, 0, 0}, -0.25, 0.2, 99, {0, 0, 0}, 2.0f);
    CHECK(s.voxel({0, 0, 0})->weight == 10);

    // voxels in unallocated blocks read back as nothing; a never-written
    // voxel of an allocated block reads back with zero weight
    CHECK(!s.voxel({100, 100, 100}).has_value());
    const auto untouched = s.voxel({5, -2, 7}); // same block, never written
    REQUIRE(untouched.has_value());
    CHECK(untouched->weight == 0);

    // extent encloses exactly the written voxel centres
    const Eigen::AlignedBox3d box = s.extent();
    CHECK(box.contains(s.voxel_centre({4, -2, 7})));
    CHECK(box.contains(s.voxel_centre({0, 0, 0})));

    // deterministic traversal sees both voxels exactly once
    std::set<std::array<int, 3>> seen;
    s.for_each_weighted([&](const ObjectSubmap::VoxelView& vv) {
        seen.insert({vv.index.x(), vv.index.y(), vv.index.z()});
    });
    CHECK(seen.size() == 2);
    CHECK(seen.count({4, -2, 7}) == 1);
    CHECK(seen.count({0, 0, 0}) == 1);
}

TEST_CASE("ray zero crossing hits an authored plane where expected")
{
    ObjectSubmap s(0, "chair", 0.02);
    write_plane_slab(s, 0.5, 0, 40, 1.0, 5, 0.9f);

    const Eigen::Vector3d origin(0.4, 0.4, 0.1);
    const Eigen::Vector3d dir(0.0, 0.0, 1.0);

    auto hit = s.ray_zero_crossing(origin, dir, 0.0, 2.0);
    REQUIRE(hit.has_value());
    // sampling walks half-voxel steps, so the crossing lands within one voxel
    CHECK(std::abs(hit->distance - 0.4) <= 0.02);
    CHECK((hit->point - (origin + dir * hit->distance)).norm() <= 1e-12);
    CHECK(hit->min_obs_dist == doctest::Approx(0.9f));

    // an oblique ray still finds the plane at the right depth
    const Eigen::Vector3d d2 = Eigen::Vector3d(0.2, 0.1, 1.0).normalized();
    auto hit2 = s.ray_zero_crossing(Eigen::Vector3d(0.3, 0.3, 0.1), d2, 0.0, 2.0);
    REQUIRE(hit2.has_value());
    const double expected_t = (0.5 - 0.1) / d2.z();
    CHECK(std::abs(hit2->distance - expected_t) <= 0.03);

    // the window must straddle the surface
    CHECK(!s.ray_zero_crossing(origin, dir, 0.0, 0.2).has_value());
    CHECK(!s.ray_zero_crossing(origin, dir, 0.0, 0.0).has_value());
    // a ray pointing away never crosses
    CHECK(!s.ray_zero_crossing(origin, -dir, 0.0, 2.0).has_value());
}

TEST_CASE("zero crossing ignores voxels at or below the foreground threshold")
{
    ObjectSubmap bg_only(0, "chair", 0.02);
    write_plane_slab(bg_only, 0.5, 0, 40, 0.4, 5, 1.0f);
    CHECK(!bg_only
               .ray_zero_crossing(Eigen::Vector3d(0.4, 0.4, 0.1), Eigen::Vector3d(0, 0, 1), 0.0,
                                  2.0)
               .has_value());

    ObjectSubmap empty(1, "chair", 0.02);
    CHECK(!empty
               .ray_zero_crossing(Eigen::Vector3d(0.4, 0.4, 0.1), Eigen::Vector3d(0, 0, 1), 0.0,
                                  2.0)
               .has_value());
}

TEST_CASE("extract_surface meshes the authored plane")
{
    ObjectSubmap s(0, "plant", 0.02);
    write_plane_slab(s, 0.5, 0, 30, 1.0, 4, 0.5f);

    const TriangleMesh mesh = s.extract_surface();
    REQUIRE(!mesh.empty());
    REQUIRE(!mesh.vertices.empty());
    double worst = 0.0;
    for (const Eigen::Vector3d& v : mesh.vertices) {
        worst = std::max(worst, std::abs(v.z() - 0.5));
    }
    // quantized linear interpolation keeps vertices well inside one voxel
    CHECK(worst <= 0.01);
    for (const auto& t : mesh.triangles) {
        for (const std::uint32_t i : t) {
            CHECK(i < mesh.vertices.size());
        }
    }

    ObjectSubmap fresh(1, "plant", 0.02);
    CHECK(fresh.extract_surface().empty());
}

TEST_CASE("surface_voxels and observation-distance accounting")
{
    ObjectSubmap s(0, "chair", 0.02);
    write_plane_slab(s, 0.5, 0, 10, 1.0, 3, 0.7f);

    const auto surf = s.surface_voxels();
    REQUIRE(!surf.empty());
    for (const Eigen::Vector3i& v : surf) {
        const auto view = s.voxel(v);
        REQUIRE(view.has_value());
        CHECK(view->fg > 0.5);
        // |tsdf| under one voxel, in metres
        CHECK(std::abs(view->tsdf) * s.truncation() < s.resolution());
    }
    CHECK(s.all_surface_within(0.7 + 1e-6));
    CHECK(!s.all_surface_within(0.5));
}

TEST_CASE("projective fusion writes the truncation band of a flat wall")
{
    ObjectSubmap s(0, "chair", 0.02, 100);
    const CameraModel cam = CameraModel::centred(64, 48, 80.0, 80.0, 0.1, 5.0);
    const RigidTransform T; // camera at the origin looking along +z (camera frame)

    DepthImage depth(cam.width, cam.height, 1.0f);
    ColourImage colour(cam.width, cam.height, Rgb8{200, 100, 50});
    const BinaryImage all(cam.width, cam.height, std::uint8_t{1});
    const BinaryImage none(cam.width, cam.height, std::uint8_t{0});

    s.integrate(depth, colour, all, none, T, cam, /*detected=*/true);
    CHECK(!s.empty());

    // sample the voxel column along the optical axis
    auto probe = [&](double z) { return s.voxel({0, 0, static_cast<int>(std::floor(z / 0.02))}); };

    const auto front = probe(0.95); // 5 cm in front of the wall
    REQUIRE(front.has_value());
    CHECK(front->weight == 1);
    CHECK(front->fg > 0.9);
    CHECK(front->tsdf == doctest::Approx((1.0 - 0.95) / s.truncation()).epsilon(0.2));
    CHECK(front->colour.r == 200);

    const auto behind = probe(1.03); // 3 cm behind the wall
    REQUIRE(behind.has_value());
    CHECK(behind->tsdf < 0.0);

    // min observation distance equals the camera-to-voxel distance
    CHECK(front->min_obs_dist
          == doctest::Approx((s.voxel_centre(front->index)).norm()).epsilon(1e-6));

    // a second identical frame doubles the weight and keeps the estimate
    s.integrate(depth, colour, all, none, T, cam, /*detected=*/true);
    CHECK(probe(0.95)->weight == 2);
    CHECK(probe(0.95)->tsdf == doctest::Approx(front->tsdf).epsilon(1e-6));

    // the crossing sits at the measured depth
    auto hit = s.ray_zero_crossing(Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 0, 1), 0.1, 5.0);
    REQUIRE(hit.has_value());
    CHECK(std::abs(hit->distance - 1.0) <= 0.02);
}

TEST_CASE("undetected updates refine geometry but never touch foreground")
{
    ObjectSubmap s(0, "chair", 0.02, 100);
    const CameraModel cam = CameraModel::centred(64, 48, 80.0, 80.0, 0.1, 5.0);
    const RigidTransform T;
    DepthImage depth(cam.width, cam.height, 1.0f);
    ColourImage colour(cam.width, cam.height, Rgb8{90, 90, 90});
    const BinaryImage all(cam.width, cam.height, std::uint8_t{1});
    const BinaryImage none(cam.width, cam.height, std::uint8_t{0});

    s.integrate(depth, colour, all, none, T, cam, /*detected=*/true);
    const double fg_before = s.voxel({0, 0, 49})->fg;
    const int w_before = s.voxel({0, 0, 49})->weight;
    CHECK(fg_before > 0.9);

    // visible (rendered) but not detected: weights grow, foreground is frozen
    s.integrate(depth, colour, none, all, T, cam, /*detected=*/false);
    CHECK(s.voxel({0, 0, 49})->weight == w_before + 1);
    CHECK(s.voxel({0, 0, 49})->fg == doctest::Approx(fg_before));
}

TEST_CASE("detected frames push foreground towards zero outside the detection")
{
    ObjectSubmap s(0, "chair", 0.02, 100);
    const CameraModel cam = CameraModel::centred(64, 48, 80.0, 80.0, 0.1, 5.0);
    const RigidTransform T;
    DepthImage depth(cam.width, cam.height, 1.0f);
    ColourImage colour(cam.width, cam.height, Rgb8{90, 90, 90});
    const BinaryImage all(cam.width, cam.height, std::uint8_t{1});
    const BinaryImage none(cam.width, cam.height, std::uint8_t{0});

    s.integrate(depth, colour, all, none, T, cam, /*detected=*/true);
    const auto before = s.voxel({0, 0, 49});
    REQUIRE(before.has_value());

    // detected elsewhere, this area only in the rendered mask: fg observation 0
    s.integrate(depth, colour, none, all, T, cam, /*detected=*/true, /*fuse_fg_zero=*/true);
    const auto after = s.voxel({0, 0, 49});
    CHECK(after->fg < before->fg);
    CHECK(after->fg == doctest::Approx(before->fg / 2.0).epsilon(0.02));
    CHECK(after->weight == before->weight); // geometry was not re-observed

    // with the flag off the same frame leaves foreground alone
    ObjectSubmap s2(1, "chair", 0.02, 100);
    s2.integrate(depth, colour, all, none, T, cam, true);
    const double fg0 = s2.voxel({0, 0, 49})->fg;
    s2.integrate(depth, colour, none, all, T, cam, true, /*fuse_fg_zero=*/false);
    CHECK(s2.voxel({0, 0, 49})->fg == doctest::Approx(fg0));
}

TEST_CASE("integrate validates image sizes and pose rigidity")
{
    ObjectSubmap s(0, "chair", 0.02);
    const CameraModel cam = CameraModel::centred(64, 48, 80.0, 80.0, 0.1, 5.0);
    DepthImage depth(cam.width, cam.height, 1.0f);
    ColourImage colour(cam.width, cam.height, Rgb8{0, 0, 0});
    BinaryImage mask(cam.width, cam.height, std::uint8_t{1});

    DepthImage bad_depth(10, 10, 1.0f);
    CHECK_THROWS_AS(s.integrate(bad_depth, colour, mask, mask, RigidTransform{}, cam, true),
                    std::invalid_argument);

    RigidTransform bent;
    bent.R(0, 0) = 2.0;
    CHECK_THROWS_AS(s.integrate(depth, colour, mask, mask, bent, cam, true),
                    std::invalid_argument);
}

TEST_CASE("class table and object store bookkeeping")
{
    ObjectStore store(two_classes(), 50);
    CHECK(store.classes().contains("chair"));
    CHECK(!store.classes().contains("sofa"));
    CHECK_THROWS_AS(store.classes().resolution("sofa"), std::invalid_argument);
    CHECK_THROWS_AS(store.create("sofa"), std::invalid_argument);

    ObjectSubmap& a = store.create("chair");
    ObjectSubmap& b = store.create("plant");
    CHECK(store.size() == 2);
    CHECK(a.id() == 0);
    CHECK(b.id() == 1);
    CHECK(store.at(0).label() == "chair");
    CHECK(store.at(1).label() == "plant");

    // no surfaces yet: the within-distance conventions are vacuous truths
    CHECK(store.all_surface_within(0.0));
    CHECK(store.fraction_surface_within(0.0) == doctest::Approx(1.0));

    write_plane_slab(a, 0.5, 0, 10, 1.0, 3, 2.0f);
    write_plane_slab(b, 0.9, 0, 10, 1.0, 3, 0.4f);
    CHECK(!store.all_surface_within(1.0));
    CHECK(store.all_surface_within(2.0 + 1e-6));
    const double frac = store.fraction_surface_within(1.0);
    CHECK(frac > 0.0);
    CHECK(frac < 1.0);

    // the nearest crossing over the store picks the nearer slab
    auto hit = store.nearest_crossing(Eigen::Vector3d(0.1, 0.1, 0.0), Eigen::Vector3d(0, 0, 1),
                                      0.0, 2.0);
    REQUIRE(hit.has_value());
    CHECK(hit->first == 0);
    CHECK(std::abs(hit->second.distance - 0.5) <= 0.02);
}

TEST_CASE("mask_iou equals a pixel-count oracle and validates sizes")
{
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> coin(0, 3);
    for (int trial = 0; trial < 50; ++trial) {
        BinaryImage a(17, 11, std::uint8_t{0});
        BinaryImage b(17, 11, std::uint8_t{0});
        for (int y = 0; y < 11; ++y) {
            for (int x = 0; x < 17; ++x) {
                a(x, y) = coin(rng) == 0 ? 1 : 0;
                b(x, y) = coin(rng) == 0 ? 1 : 0;
            }
        }
        CHECK(mask_iou(a, b) == doctest::Approx(iou_by_counting(a, b)).epsilon(1e-12));
    }
    const BinaryImage empty(17, 11, std::uint8_t{0});
    CHECK(mask_iou(empty, empty) == 0.0);
    BinaryImage other(4, 4, std::uint8_t{0});
    CHECK_THROWS_AS(mask_iou(empty, other), std::invalid_argument);
}

TEST_CASE("greedy matching pairs by descending overlap with stable ties")
{
    const int W = 16;
    const int H = 16;
    // two rendered objects: left block (id 7) and right block (id 9)
    std::vector<BinaryImage> rendered;
    rendered.push_back(rect_mask(W, H, 0, 0, 8, 16));
    rendered.push_back(rect_mask(W, H, 8, 0, 16, 16));
    const std::vector<int> ids{7, 9};

    // detection 0 overlaps the right block fully, detection 1 the left block
    // at IoU 0.6, detection 2 overlaps nothing
    std::vector<Detection> dets;
    dets.push_back({rect_mask(W, H, 8, 0, 16, 16), "chair"});
    dets.push_back({rect_mask(W, H, 0, 0, 6, 16), "chair"}); // IoU vs left = 6/8
    dets.push_back({rect_mask(W, H, 0, 0, 0, 0), "chair"});

    const MatchResult m = match_detections(dets, rendered, ids, 0.5);
    REQUIRE(m.detection_to_object.size() == 3);
    CHECK(m.detection_to_object[0] == 9);
    CHECK(m.detection_to_object[1] == 7);
    CHECK(m.detection_to_object[2] == -1);
    REQUIRE(m.unmatched_detections.size() == 1);
    CHECK(m.unmatched_detections[0] == 2);
}

TEST_CASE("matching is exclusive and respects the threshold")
{
    const int W = 12;
    const int H = 12;
    std::vector<BinaryImage> rendered;
    rendered.push_back(rect_mask(W, H, 0, 0, 6, 12)); // object 0
    const std::vector<int> ids{0};

    // both detections overlap object 0; the better one wins, the other stays
    // unmatched even though it clears the threshold
    std::vector<Detection> dets;
    dets.push_back({rect_mask(W, H, 0, 0, 5, 12), "chair"}); // IoU 5/6
    dets.push_back({rect_mask(W, H, 0, 0, 4, 12), "chair"}); // IoU 4/6
    MatchResult m = match_detections(dets, rendered, ids, 0.5);
    CHECK(m.detection_to_object[0] == 0);
    CHECK(m.detection_to_object[1] == -1);
    REQUIRE(m.unmatched_detections.size() == 1);
    CHECK(m.unmatched_detections[0] == 1);

    // below the threshold nothing matches
    std::vector<Detection> weak;
    weak.push_back({rect_mask(W, H, 0, 0, 2, 12), "chair"}); // IoU 2/6
    m = match_detections(weak, rendered, ids, 0.5);
    CHECK(m.detection_to_object[0] == -1);
    CHECK(m.unmatched_detections == std::vector<int>{0});

    // exact threshold does not match (strictly greater required)
    std::vector<Detection> edge;
    edge.push_back({rect_mask(W, H, 0, 0, 3, 12), "chair"}); // IoU 3/6 = 0.5
    m = match_detections(edge, rendered, ids, 0.5);
    CHECK(m.detection_to_object[0] == -1);
}

TEST_CASE("ply export/import of a submap mesh round-trips")
{
    ObjectSubmap s(0, "plant", 0.02);
    write_plane_slab(s, 0.3, 0, 12, 1.0, 3, 0.5f);
    const TriangleMesh mesh = s.extract_surface();
    REQUIRE(!mesh.empty());

    const std::string path =
        (std::filesystem::temp_directory_path() / "scout_test_mesh.ply").string();
    write_ply(mesh, path);
    const TriangleMesh back = read_ply(path);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    REQUIRE(back.triangles.size() == mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        CHECK((back.vertices[i] - mesh.vertices[i]).norm() <= 1e-4);
    }
    CHECK(back.triangles == mesh.triangles);
    std::remove(path.c_str());
}
