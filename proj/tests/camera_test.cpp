#include "dualscore/camera.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dualscore;
using namespace dualscore::camera;

namespace {

Mat3 rot_z(double deg) {
    return Eigen::AngleAxisd(deg_to_rad(deg), Vec3::UnitZ()).toRotationMatrix();
}

double wrap360(double deg) {
    double w = std::fmod(deg, 360.0);
    return w < 0.0 ? w + 360.0 : w;
}

void expect_mat_near(const Mat3& a, const Mat3& b, double tol) {
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), tol) << "a=\n" << a << "\nb=\n" << b;
}

ViewSamplingConfig fixed_views(double azimuth, double elevation, double fov, double scale) {
    ViewSamplingConfig c;
    c.azimuth_deg = {azimuth, azimuth};
    c.elevation_deg = {elevation, elevation};
    c.fov_deg = {fov, fov};
    c.distance_scale = {scale, scale};
    return c;
}

}  // namespace

TEST(CameraDistance, Fov60ScaleOne) {
    EXPECT_NEAR(camera_distance(60.0, 0.5, 1.0), 0.5 / std::tan(deg_to_rad(30.0)), 1e-12);
    EXPECT_NEAR(camera_distance(60.0, 0.5, 1.0), 0.8660254037844386, 1e-12);
}

TEST(ReferenceViews, FourViewsAreOrthogonal) {
    std::mt19937_64 rng(1);
    const auto poses = sample_reference_views(rng, 4, fixed_views(0.0, 0.0, 40.0, 1.0));
    ASSERT_EQ(poses.size(), 4u);
    const double expected[] = {0.0, 90.0, 180.0, 270.0};
    for (int k = 0; k < 4; ++k) {
        const Orbit o = orbit_of(poses[k]);
        EXPECT_NEAR(std::remainder(o.azimuth_deg - expected[k], 360.0), 0.0, 1e-9);
        EXPECT_NEAR(o.elevation_deg, 0.0, 1e-9);
    }
}

TEST(ReferenceViews, SingleViewLooksAtOrigin) {
    std::mt19937_64 rng(7);
    const auto poses = sample_reference_views(rng, 1, ViewSamplingConfig{});
    ASSERT_EQ(poses.size(), 1u);
    const CameraPose& p = poses[0];
    const Vec3 cam = p.rotation * (-p.position).normalized();
    EXPECT_NEAR(cam.x(), 0.0, 1e-12);
    EXPECT_NEAR(cam.y(), 0.0, 1e-12);
    EXPECT_NEAR(cam.z(), 1.0, 1e-12);
    EXPECT_NO_THROW(p.validate());
}

TEST(ReferenceViews, SharedDrawsAndDistanceBounds) {
    std::mt19937_64 rng(11);
    const ViewSamplingConfig config;
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + trial % 6;
        const auto poses = sample_reference_views(rng, n, config);
        ASSERT_EQ(static_cast<int>(poses.size()), n);
        const Orbit first = orbit_of(poses[0]);
        for (int k = 0; k < n; ++k) {
            const Orbit o = orbit_of(poses[k]);
            EXPECT_EQ(poses[k].fov_deg, poses[0].fov_deg);
            EXPECT_NEAR(o.elevation_deg, first.elevation_deg, 1e-9);
            EXPECT_NEAR(o.distance, first.distance, 1e-9);
            EXPECT_NEAR(wrap360(o.azimuth_deg - first.azimuth_deg + 1e-7), wrap360(k * 360.0 / n + 1e-7), 1e-6);
            const double ratio = o.distance / (0.5 / std::tan(0.5 * deg_to_rad(poses[k].fov_deg)));
            EXPECT_GE(ratio, 0.8 - 1e-12);
            EXPECT_LE(ratio, 1.0 + 1e-12);
            EXPECT_GE(poses[k].fov_deg, 15.0);
            EXPECT_LE(poses[k].fov_deg, 60.0);
            EXPECT_GE(o.elevation_deg, -1e-9);
            EXPECT_LE(o.elevation_deg, 30.0 + 1e-9);
        }
    }
}

TEST(ReferenceViews, SeededDeterminism) {
    std::mt19937_64 a(99), b(99);
    for (int i = 0; i < 20; ++i) {
        const auto pa = sample_reference_views(a, 4, ViewSamplingConfig{});
        const auto pb = sample_reference_views(b, 4, ViewSamplingConfig{});
        for (std::size_t k = 0; k < pa.size(); ++k) {
            EXPECT_EQ(pa[k].rotation, pb[k].rotation);
            EXPECT_EQ(pa[k].position, pb[k].position);
            EXPECT_EQ(pa[k].fov_deg, pb[k].fov_deg);
        }
    }
}

TEST(ReferenceViews, InvalidBoundsAreConfigErrors) {
    std::mt19937_64 rng(0);
    ViewSamplingConfig c;
    c.fov_deg = {60.0, 15.0};
    EXPECT_THROW((void)sample_reference_views(rng, 4, c), ConfigError);
    c = ViewSamplingConfig{};
    c.elevation_deg = {10.0, -10.0};
    EXPECT_THROW((void)sample_reference_views(rng, 4, c), ConfigError);
    EXPECT_THROW((void)sample_reference_views(rng, 0, ViewSamplingConfig{}), ConfigError);
}

TEST(NovelViews, ElevationStaysInRange) {
    std::mt19937_64 rng(5);
    const CameraPose ref = orbit_pose({30.0, 10.0, 1.2}, 35.0, {16, 16});
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 10000; ++i) {
        const NovelViewPair pair = sample_novel_view_pair(rng, ref, ViewSamplingConfig{});
        const Orbit o = orbit_of(pair.target);
        lo = std::min(lo, o.elevation_deg);
        hi = std::max(hi, o.elevation_deg);
        ASSERT_EQ(pair.target.fov_deg, ref.fov_deg);
    }
    EXPECT_GE(lo, -30.0 - 1e-9);
    EXPECT_LE(hi, 80.0 + 1e-9);
    EXPECT_LT(lo, -25.0);
    EXPECT_GT(hi, 75.0);
}

TEST(NovelViews, RelativeExtrinsicMapsReferenceToTarget) {
    std::mt19937_64 rng(8);
    const CameraPose ref = orbit_pose({-70.0, 20.0, 1.1}, 45.0, {16, 16});
    for (int i = 0; i < 50; ++i) {
        const NovelViewPair pair = sample_novel_view_pair(rng, ref, ViewSamplingConfig{});
        expect_mat_near(pair.relative.rotation * ref.rotation, pair.target.rotation, 1e-9);
        EXPECT_LE((pair.relative.rotation * ref.translation() + pair.relative.translation - pair.target.translation())
                      .norm(),
                  1e-9);
    }
}

TEST(RelativeExtrinsic, SelfIsIdentity) {
    const CameraPose p = orbit_pose({12.0, 25.0, 1.4}, 40.0, {8, 8});
    const RelativeExtrinsic rel = relative_extrinsic(p, p);
    expect_mat_near(rel.rotation, Mat3::Identity(), 1e-12);
    EXPECT_LE(rel.translation.norm(), 1e-12);
}

TEST(RelativeExtrinsic, RoundTripIsIdentity) {
    const CameraPose a = orbit_pose({12.0, 25.0, 1.4}, 40.0, {8, 8});
    const CameraPose b = orbit_pose({-140.0, -20.0, 0.9}, 40.0, {8, 8});
    const RelativeExtrinsic ab = relative_extrinsic(a, b);
    const RelativeExtrinsic ba = relative_extrinsic(b, a);
    const RelativeExtrinsic loop = ba.compose(ab);
    expect_mat_near(loop.rotation, Mat3::Identity(), 1e-5);
    EXPECT_LE(loop.translation.norm(), 1e-5);
    const RelativeExtrinsic inv = inverse(ab);
    expect_mat_near(inv.rotation, ba.rotation, 1e-9);
    EXPECT_LE((inv.translation - ba.translation).norm(), 1e-9);
}

TEST(RelativeExtrinsic, NinetyDegreeAzimuthStep) {
    for (double el : {0.0, 20.0}) {
        const CameraPose a = orbit_pose({10.0, el, 1.3}, 40.0, {8, 8});
        const CameraPose b = orbit_pose({100.0, el, 1.3}, 40.0, {8, 8});
        const RelativeExtrinsic rel = relative_extrinsic(a, b);
        // b is a rotated by +90 degrees about world up: R_b = R_a * Rz(90)^T.
        const Mat3 expected = a.rotation * rot_z(90.0).transpose() * a.rotation.transpose();
        expect_mat_near(rel.rotation, expected, 1e-9);
        const Vec3 world_pt(0.3, -0.2, 0.1);
        const Vec3 in_a = a.rotation * (world_pt - a.position);
        const Vec3 in_b = b.rotation * (world_pt - b.position);
        EXPECT_LE((rel.rotation * in_a + rel.translation - in_b).norm(), 1e-9);
    }
}

TEST(Rays, CenterPixelIsForward) {
    const CameraPose p = orbit_pose({33.0, 12.0, 2.0}, 50.0, {65, 65});
    const RayGrid grid = generate_rays(p);
    const Ray& center = grid.at(32, 32);
    EXPECT_LE((center.direction - p.forward()).norm(), 1e-6);
}

TEST(Rays, CountAndUnitDirections) {
    const CameraPose p = orbit_pose({0.0, 0.0, 2.2}, 40.0, {64, 64});
    const RayGrid grid = generate_rays(p);
    EXPECT_EQ(grid.rays.size(), 4096u);
    for (const Ray& r : grid.rays) {
        EXPECT_NEAR(r.direction.norm(), 1.0, 1e-6);
        if (r.hits_bounds) {
            EXPECT_GE(r.t_near, 0.0);
            EXPECT_LT(r.t_near, r.t_far);
        }
    }
}

TEST(Rays, NearBoundFromDistance) {
    const CameraPose p = orbit_pose({70.0, 10.0, 2.2}, 60.0, {64, 64});
    const RayGrid grid = generate_rays(p, {1.0});
    int hits = 0, misses = 0;
    for (const Ray& r : grid.rays) {
        if (r.hits_bounds) {
            ++hits;
            EXPECT_GE(r.t_near, 1.2 - 1e-9);
        } else {
            ++misses;
        }
    }
    EXPECT_GT(hits, 0);
    EXPECT_GT(misses, 0);
}

TEST(Rays, DegeneratePoseThrows) {
    CameraPose p;
    p.position = Vec3::Zero();
    EXPECT_THROW((void)generate_rays(p), Error);
    EXPECT_THROW((void)look_at(Vec3::Zero(), Vec3::Zero(), 40.0, {8, 8}), Error);
}

TEST(LookAt, VerticalViewFallsBackToXUp) {
    const CameraPose p = look_at(Vec3(0.0, 0.0, 2.0), Vec3::Zero(), 40.0, {8, 8});
    EXPECT_NO_THROW(p.validate());
    EXPECT_LE((p.forward() - Vec3(0.0, 0.0, -1.0)).norm(), 1e-12);
}

TEST(Project, InvertsPixelDirection) {
    const CameraPose p = orbit_pose({-20.0, 15.0, 1.5}, 40.0, {32, 24});
    const Vec3 d = pixel_direction(p, 7.5, 19.5);
    double px = 0, py = 0, z = 0;
    ASSERT_TRUE(project(p, p.position + 1.3 * d, px, py, z));
    EXPECT_NEAR(px, 7.5, 1e-9);
    EXPECT_NEAR(py, 19.5, 1e-9);
    EXPECT_FALSE(project(p, p.position - d, px, py, z));
}
