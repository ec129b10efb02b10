#include "dualscore/camera.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dualscore::camera {

namespace {

void check_range(const Range& r, const char* name) {
    if (!(r.min <= r.max) || !std::isfinite(r.min) || !std::isfinite(r.max)) {
        std::ostringstream os;
        os << "view sampling: invalid " << name << " range [" << r.min << ", " << r.max << "]";
        throw ConfigError(os.str());
    }
}

double draw(std::mt19937_64& rng, const Range& r) {
    if (r.min == r.max) return r.min;
    return std::uniform_real_distribution<double>(r.min, r.max)(rng);
}

double wrap_degrees(double deg) {
    double w = std::fmod(deg + 180.0, 360.0);
    if (w < 0.0) w += 360.0;
    return w - 180.0;
}

}  // namespace

void CameraPose::validate() const {
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) throw Error("camera pose: rotation is not orthonormal");
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw Error("camera pose: fov must lie in (0, 180) degrees");
    if (!position.allFinite()) throw Error("camera pose: position is not finite");
    if (resolution.width < 1 || resolution.height < 1) throw Error("camera pose: resolution must be at least 1x1");
}

double CameraPose::focal_pixels() const {
    return 0.5 * resolution.height / std::tan(0.5 * deg_to_rad(fov_deg));
}

RelativeExtrinsic RelativeExtrinsic::compose(const RelativeExtrinsic& first) const {
    return {rotation * first.rotation, rotation * first.translation + translation};
}

void ViewSamplingConfig::validate() const {
    check_range(fov_deg, "fov");
    check_range(elevation_deg, "elevation");
    check_range(novel_elevation_deg, "novel-view elevation");
    check_range(azimuth_deg, "azimuth");
    check_range(distance_scale, "distance scale");
    if (fov_deg.min <= 0.0 || fov_deg.max >= 180.0) throw ConfigError("view sampling: fov must lie in (0, 180)");
    if (distance_scale.min <= 0.0) throw ConfigError("view sampling: distance scale must be positive");
    if (!(object_size > 0.0)) throw ConfigError("view sampling: object size must be positive");
    if (resolution.width < 1 || resolution.height < 1) throw ConfigError("view sampling: resolution must be at least 1x1");
}

Vec3 orbit_position(const Orbit& orbit) {
    const double az = deg_to_rad(orbit.azimuth_deg);
    const double el = deg_to_rad(orbit.elevation_deg);
    return orbit.distance * Vec3(std::cos(el) * std::sin(az), -std::cos(el) * std::cos(az), std::sin(el));
}

Orbit orbit_of(const CameraPose& pose) {
    const Vec3& p = pose.position;
    const double dist = p.norm();
    Orbit o;
    o.distance = dist;
    if (dist == 0.0) return o;
    o.elevation_deg = rad_to_deg(std::asin(std::clamp(p.z() / dist, -1.0, 1.0)));
    o.azimuth_deg = rad_to_deg(std::atan2(p.x(), -p.y()));
    return o;
}

CameraPose look_at(const Vec3& position, const Vec3& target, double fov_deg, Resolution resolution) {
    const Vec3 delta = target - position;
    if (delta.norm() < 1e-12) throw Error("look_at: camera position coincides with the target");
    const Vec3 forward = delta.normalized();
    Vec3 up = Vec3::UnitZ();
    if (forward.cross(up).norm() < 1e-9) up = Vec3::UnitX();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);

    CameraPose pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.position = position;
    pose.fov_deg = fov_deg;
    pose.resolution = resolution;
    return pose;
}

CameraPose orbit_pose(const Orbit& orbit, double fov_deg, Resolution resolution) {
    return look_at(orbit_position(orbit), Vec3::Zero(), fov_deg, resolution);
}

double camera_distance(double fov_deg, double object_size, double scale) {
    const double ndc_focal = 1.0 / std::tan(0.5 * deg_to_rad(fov_deg));
    return object_size * ndc_focal * scale;
}

RelativeExtrinsic relative_extrinsic(const CameraPose& from, const CameraPose& to) {
    RelativeExtrinsic rel;
    rel.rotation = to.rotation * from.rotation.transpose();
    rel.translation = to.translation() - rel.rotation * from.translation();
    return rel;
}

RelativeExtrinsic inverse(const RelativeExtrinsic& rel) {
    const Mat3 rt = rel.rotation.transpose();
    return {rt, -rt * rel.translation};
}

std::vector<CameraPose> sample_reference_views(std::mt19937_64& rng, int n, const ViewSamplingConfig& config) {
    if (n < 1) throw ConfigError("sample_reference_views: need at least one view");
    config.validate();

    const double fov = draw(rng, config.fov_deg);
    const double elevation = draw(rng, config.elevation_deg);
    const double scale = draw(rng, config.distance_scale);
    const double base_azimuth = draw(rng, config.azimuth_deg);
    const double distance = camera_distance(fov, config.object_size, scale);

    std::vector<CameraPose> poses;
    poses.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double az = wrap_degrees(base_azimuth + k * (360.0 / n));
        poses.push_back(orbit_pose({az, elevation, distance}, fov, config.resolution));
    }
    return poses;
}

NovelViewPair sample_novel_view_pair(std::mt19937_64& rng, const CameraPose& reference,
                                     const ViewSamplingConfig& config) {
    config.validate();
    reference.validate();
    const double azimuth = draw(rng, config.azimuth_deg);
    const double elevation = draw(rng, config.novel_elevation_deg);
    const double scale = draw(rng, config.distance_scale);
    const double distance = camera_distance(reference.fov_deg, config.object_size, scale);

    NovelViewPair pair;
    pair.target = orbit_pose({azimuth, elevation, distance}, reference.fov_deg, reference.resolution);
    pair.relative = relative_extrinsic(reference, pair.target);
    return pair;
}

Vec3 pixel_direction(const CameraPose& pose, double px, double py) {
    const double f = pose.focal_pixels();
    const Vec3 cam((px - 0.5 * pose.resolution.width) / f, (py - 0.5 * pose.resolution.height) / f, 1.0);
    return (pose.rotation.transpose() * cam).normalized();
}

bool project(const CameraPose& pose, const Vec3& world, double& px, double& py, double& depth_z) {
    const Vec3 cam = pose.rotation * (world - pose.position);
    depth_z = cam.z();
    if (cam.z() <= 1e-12) return false;
    const double f = pose.focal_pixels();
    px = f * cam.x() / cam.z() + 0.5 * pose.resolution.width;
    py = f * cam.y() / cam.z() + 0.5 * pose.resolution.height;
    return true;
}

RayGrid generate_rays(const CameraPose& pose, const SceneBounds& bounds) {
    pose.validate();
    if (pose.position.norm() < 1e-9) throw Error("generate_rays: degenerate pose at the scene origin");

    RayGrid grid;
    grid.resolution = pose.resolution;
    grid.rays.resize(static_cast<std::size_t>(pose.resolution.width) * pose.resolution.height);

    const Vec3& o = pose.position;
    const double c = o.squaredNorm() - bounds.radius * bounds.radius;
    for (int y = 0; y < pose.resolution.height; ++y) {
        for (int x = 0; x < pose.resolution.width; ++x) {
            Ray& ray = grid.rays[static_cast<std::size_t>(y) * pose.resolution.width + x];
            ray.origin = o;
            ray.direction = pixel_direction(pose, x + 0.5, y + 0.5);
            const double b = o.dot(ray.direction);
            const double disc = b * b - c;
            if (disc <= 0.0) continue;
            const double root = std::sqrt(disc);
            const double t1 = -b + root;
            if (t1 <= 0.0) continue;
            ray.t_near = std::max(-b - root, 0.0);
            ray.t_far = t1;
            ray.hits_bounds = ray.t_far > ray.t_near;
        }
    }
    return grid;
}

}  // namespace dualscore::camera
