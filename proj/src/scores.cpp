#include "dualscore/scores.hpp"

#include "dualscore/kvdoc.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

namespace dualscore::scores {

namespace {

std::string pose_key(const camera::CameraPose& pose) {
    std::string key(sizeof(double) * 13 + sizeof(int) * 2, '\0');
    char* out = key.data();
    const auto put = [&](const void* src, std::size_t n) {
        std::memcpy(out, src, n);
        out += n;
    };
    put(pose.rotation.data(), sizeof(double) * 9);
    put(pose.position.data(), sizeof(double) * 3);
    put(&pose.fov_deg, sizeof(double));
    put(&pose.resolution.width, sizeof(int));
    put(&pose.resolution.height, sizeof(int));
    return key;
}

void check_inputs(std::span<const Image> z_t, const TextCondition& condition) {
    if (z_t.size() != condition.poses.size()) throw Error("multiview oracle: need one z_t per pose");
    for (std::size_t i = 0; i < z_t.size(); ++i) {
        const auto& res = condition.poses[i].resolution;
        if (z_t[i].width != res.width || z_t[i].height != res.height || z_t[i].channels != 3)
            throw Error("multiview oracle: z_t shape does not match the pose resolution");
    }
}

double wrapped_azimuth(const camera::CameraPose& pose) { return camera::orbit_of(pose).azimuth_deg; }

}  // namespace

bool Primitive::contains(const Vec3& p) const {
    if (shape == Shape::sphere) {
        const double d = (p - center).norm();
        return d <= radius && d >= inner_radius;
    }
    const Vec3 d = (p - center).cwiseAbs();
    return d.x() <= half_extents.x() && d.y() <= half_extents.y() && d.z() <= half_extents.z();
}

SyntheticScene::SyntheticScene(std::vector<Primitive> primitives, std::string name)
    : primitives_(std::move(primitives)), name_(std::move(name)) {
    validate();
}

void SyntheticScene::validate() const {
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        const Primitive& p = primitives_[i];
        const std::string tag = "scene primitive " + std::to_string(i) + ": ";
        if (!(p.density > 0.0)) throw ConfigError(tag + "density must be positive");
        if ((p.color.array() < 0.0).any() || (p.color.array() > 1.0).any())
            throw ConfigError(tag + "color components must lie in [0, 1]");
        Vec3 extent;
        if (p.shape == Shape::sphere) {
            if (!(p.radius > 0.0) || p.inner_radius < 0.0 || p.inner_radius >= p.radius)
                throw ConfigError(tag + "sphere needs 0 <= inner_radius < radius");
            extent = Vec3::Constant(p.radius);
        } else {
            if ((p.half_extents.array() <= 0.0).any()) throw ConfigError(tag + "box half extents must be positive");
            extent = p.half_extents;
        }
        if (((p.center - extent).array() < -1.0).any() || ((p.center + extent).array() > 1.0).any())
            throw ConfigError(tag + "primitive leaves the [-1, 1]^3 bounds");
    }
}

double SyntheticScene::density(const Vec3& p) const {
    double s = 0.0;
    for (const Primitive& prim : primitives_)
        if (prim.contains(p)) s += prim.density;
    return s;
}

void SyntheticScene::evaluate(std::span<const Vec3> points, std::span<const Vec3>, std::span<double> density,
                              std::span<Vec3> color) const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        double s = 0.0;
        Vec3 c = Vec3::Zero();
        for (const Primitive& prim : primitives_) {
            if (!prim.contains(points[i])) continue;
            s += prim.density;
            c += prim.density * prim.color;
        }
        density[i] = s;
        color[i] = s > 0.0 ? Vec3(c / s) : Vec3::Zero();
    }
}

SyntheticScene SyntheticScene::parse(const std::string& text, const std::string& source) {
    const kvdoc::Document doc = kvdoc::parse(text, source);
    std::vector<Primitive> prims;
    std::string name;
    for (const kvdoc::Section& sec : doc.sections) {
        if (sec.name == "scene") {
            for (const kvdoc::Entry& e : sec.entries) {
                if (e.key == "name")
                    name = e.value;
                else
                    kvdoc::fail(doc, e.line, "unknown key '" + e.key + "' in [scene]");
            }
            continue;
        }
        if (sec.name != "primitive") kvdoc::fail(doc, sec.line, "unknown section [" + sec.name + "]");
        Primitive p;
        bool has_shape = false, has_size = false, has_color = false, has_density = false;
        for (const kvdoc::Entry& e : sec.entries) {
            if (e.key == "shape") {
                if (e.value == "sphere")
                    p.shape = Shape::sphere;
                else if (e.value == "box")
                    p.shape = Shape::box;
                else
                    kvdoc::fail(doc, e.line, "shape must be 'sphere' or 'box'");
                has_shape = true;
            } else if (e.key == "center") {
                const auto v = kvdoc::as_doubles(doc, e, 3);
                p.center = Vec3(v[0], v[1], v[2]);
            } else if (e.key == "radius") {
                p.radius = kvdoc::as_double(doc, e);
                has_size = true;
            } else if (e.key == "inner_radius") {
                p.inner_radius = kvdoc::as_double(doc, e);
            } else if (e.key == "half_extents") {
                const auto v = kvdoc::as_doubles(doc, e, 3);
                p.half_extents = Vec3(v[0], v[1], v[2]);
                has_size = true;
            } else if (e.key == "color") {
                const auto v = kvdoc::as_doubles(doc, e, 3);
                p.color = Vec3(v[0], v[1], v[2]);
                has_color = true;
            } else if (e.key == "density") {
                p.density = kvdoc::as_double(doc, e);
                has_density = true;
            } else {
                kvdoc::fail(doc, e.line, "unknown key '" + e.key + "' in [primitive]");
            }
        }
        if (!has_shape || !has_size || !has_color || !has_density)
            kvdoc::fail(doc, sec.line, "primitive needs shape, a size (radius or half_extents), color and density");
        prims.push_back(p);
    }
    if (prims.empty()) throw ConfigError(source + ": scene lists no primitives");
    SyntheticScene scene;
    scene.primitives_ = std::move(prims);
    scene.name_ = std::move(name);
    try {
        scene.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return scene;
}

SyntheticScene SyntheticScene::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("scene file not found: " + path.string());
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read file: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    SyntheticScene scene = parse(ss.str(), path.string());
    if (scene.name_.empty()) scene.name_ = path.stem().string();
    return scene;
}

GroundTruth::GroundTruth(const SyntheticScene& scene, renderer::QuadratureConfig quadrature, std::size_t capacity)
    : scene_(scene), quadrature_(quadrature), capacity_(capacity) {
    quadrature_.jitter = false;
}

std::shared_ptr<const renderer::RenderedView> GroundTruth::render(const camera::CameraPose& pose) const {
    const std::string key = pose_key(pose);
    {
        std::shared_lock lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    auto view = std::make_shared<const renderer::RenderedView>(renderer::render(scene_, pose, quadrature_));
    std::unique_lock lock(mutex_);
    if (cache_.size() >= capacity_) cache_.clear();
    cache_.emplace(key, view);
    return view;
}

Image channel_mean_image(const Image& image) {
    Image out(image.width, image.height, image.channels);
    const std::size_t n = image.pixel_count();
    for (int c = 0; c < image.channels; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += image.data[i * image.channels + c];
        const double m = n ? s / static_cast<double>(n) : 0.0;
        for (std::size_t i = 0; i < n; ++i) out.data[i * image.channels + c] = m;
    }
    return out;
}

std::vector<Image> GtMultiviewOracle::denoise(std::span<const Image> z_t, int, const TextCondition& condition) const {
    check_inputs(z_t, condition);
    std::vector<Image> out;
    out.reserve(condition.poses.size());
    for (const auto& pose : condition.poses) out.push_back(gt_.render(pose)->rgb);
    return out;
}

std::vector<Image> GtMultiviewOracle::denoise_unconditional(std::span<const Image> z_t, int t,
                                                            const TextCondition& condition) const {
    std::vector<Image> out = denoise(z_t, t, condition);
    for (Image& img : out) img = channel_mean_image(img);
    return out;
}

Pathology parse_pathology(const std::string& name) {
    if (name == "hue_drift") return Pathology::hue_drift;
    if (name == "ghost_content") return Pathology::ghost_content;
    if (name == "attenuation") return Pathology::attenuation;
    throw ConfigError("unknown pathology '" + name + "' (expected hue_drift, ghost_content or attenuation)");
}

std::string to_string(Pathology p) {
    switch (p) {
        case Pathology::hue_drift: return "hue_drift";
        case Pathology::ghost_content: return "ghost_content";
        case Pathology::attenuation: return "attenuation";
    }
    return "unknown";
}

Vec3 rgb_to_hsv(const Vec3& rgb) {
    const double mx = rgb.maxCoeff();
    const double mn = rgb.minCoeff();
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0.0) {
        if (mx == rgb.x())
            h = 60.0 * std::fmod((rgb.y() - rgb.z()) / delta, 6.0);
        else if (mx == rgb.y())
            h = 60.0 * ((rgb.z() - rgb.x()) / delta + 2.0);
        else
            h = 60.0 * ((rgb.x() - rgb.y()) / delta + 4.0);
    }
    if (h < 0.0) h += 360.0;
    const double s = mx > 0.0 ? delta / mx : 0.0;
    return {h, s, mx};
}

Vec3 hsv_to_rgb(const Vec3& hsv) {
    const double h = hsv.x(), s = hsv.y(), v = hsv.z();
    const double c = v * s;
    const double hp = std::fmod(h, 360.0) / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    Vec3 rgb;
    if (hp < 1.0)
        rgb = {c, x, 0.0};
    else if (hp < 2.0)
        rgb = {x, c, 0.0};
    else if (hp < 3.0)
        rgb = {0.0, c, x};
    else if (hp < 4.0)
        rgb = {0.0, x, c};
    else if (hp < 5.0)
        rgb = {x, 0.0, c};
    else
        rgb = {c, 0.0, x};
    return rgb.array() + (v - c);
}

Vec3 rotate_hue(const Vec3& rgb, double degrees) {
    Vec3 hsv = rgb_to_hsv(rgb);
    if (hsv.y() == 0.0) return rgb;
    double h = std::fmod(hsv.x() + degrees, 360.0);
    if (h < 0.0) h += 360.0;
    hsv.x() = h;
    return hsv_to_rgb(hsv);
}

Image mirror_horizontal(const Image& image) {
    Image out(image.width, image.height, image.channels);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(image.width - 1 - x, y, c);
    return out;
}

Image apply_pathology(const Image& gt, const camera::CameraPose& pose, const PathologyConfig& config,
                      const Vec3& background) {
    if (config.amplitude == 0.0) return gt;
    const double az = wrapped_azimuth(pose);
    Image out = gt;
    switch (config.kind) {
        case Pathology::hue_drift: {
            const double shift = config.amplitude * std::abs(az);
            for (int y = 0; y < gt.height; ++y)
                for (int x = 0; x < gt.width; ++x) out.set_rgb(x, y, rotate_hue(gt.rgb(x, y), shift));
            break;
        }
        case Pathology::ghost_content: {
            const double w = config.amplitude * 0.5 * (1.0 - std::cos(deg_to_rad(az)));
            const Image mirrored = mirror_horizontal(gt);
            for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = (1.0 - w) * gt.data[i] + w * mirrored.data[i];
            break;
        }
        case Pathology::attenuation: {
            if (!(az > 0.0 && az < 180.0)) break;
            const double keep = 1.0 - config.amplitude;
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double bg = background[static_cast<Eigen::Index>(i % 3)];
                out.data[i] = bg + keep * (gt.data[i] - bg);
            }
            break;
        }
    }
    return out;
}

std::vector<Image> PerturbedMultiviewOracle::denoise(std::span<const Image> z_t, int,
                                                     const TextCondition& condition) const {
    check_inputs(z_t, condition);
    std::vector<Image> out;
    out.reserve(condition.poses.size());
    for (const auto& pose : condition.poses)
        out.push_back(apply_pathology(gt_.render(pose)->rgb, pose, pathology_, gt_.quadrature().background));
    return out;
}

std::vector<Image> PerturbedMultiviewOracle::denoise_unconditional(std::span<const Image> z_t, int t,
                                                                   const TextCondition& condition) const {
    std::vector<Image> out = denoise(z_t, t, condition);
    for (Image& img : out) img = channel_mean_image(img);
    return out;
}

WarpResult warp_view(const GroundTruth& gt, const Image& source, const camera::CameraPose& source_pose,
                     const camera::CameraPose& target_pose, const WarpConfig& config) {
    const auto src_gt = gt.render(source_pose);
    const auto dst_gt = gt.render(target_pose);
    if (source.width != source_pose.resolution.width || source.height != source_pose.resolution.height ||
        source.channels != 3)
        throw Error("warp_view: source image does not match the source pose resolution");

    const int tw = target_pose.resolution.width;
    const int th = target_pose.resolution.height;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> zbuf(static_cast<std::size_t>(tw) * th, inf);
    std::vector<int> from(static_cast<std::size_t>(tw) * th, -1);
    std::vector<int> from_far(static_cast<std::size_t>(tw) * th, -1);

    for (int y = 0; y < source.height; ++y) {
        for (int x = 0; x < source.width; ++x) {
            const int src_idx = y * source.width + x;
            const Vec3 dir = camera::pixel_direction(source_pose, x + 0.5, y + 0.5);
            double u = 0.0, v = 0.0, z = 0.0;
            if (src_gt->opacity.data[static_cast<std::size_t>(src_idx)] > config.surface_opacity) {
                const Vec3 p = source_pose.position + src_gt->depth.data[static_cast<std::size_t>(src_idx)] * dir;
                if (!camera::project(target_pose, p, u, v, z)) continue;
                const int px = static_cast<int>(std::floor(u));
                const int py = static_cast<int>(std::floor(v));
                if (px < 0 || py < 0 || px >= tw || py >= th) continue;
                const std::size_t k = static_cast<std::size_t>(py) * tw + px;
                const double dist = (p - target_pose.position).norm();
                if (dist < zbuf[k]) {
                    zbuf[k] = dist;
                    from[k] = src_idx;
                }
            } else {
                // Background: reproject the viewing direction at infinity.
                const Vec3 cam = target_pose.rotation * dir;
                if (cam.z() <= 1e-12) continue;
                const double f = target_pose.focal_pixels();
                u = f * cam.x() / cam.z() + 0.5 * tw;
                v = f * cam.y() / cam.z() + 0.5 * th;
                const int px = static_cast<int>(std::floor(u));
                const int py = static_cast<int>(std::floor(v));
                if (px < 0 || py < 0 || px >= tw || py >= th) continue;
                const std::size_t k = static_cast<std::size_t>(py) * tw + px;
                if (from_far[k] < 0) from_far[k] = src_idx;
            }
        }
    }

    WarpResult result;
    result.image = dst_gt->rgb;
    result.mask = Image(tw, th, 1);
    for (std::size_t k = 0; k < zbuf.size(); ++k) {
        const bool dst_surface = dst_gt->opacity.data[k] > config.surface_opacity;
        int src_idx = -1;
        if (from[k] >= 0) {
            const bool occluded = dst_surface && zbuf[k] > dst_gt->depth.data[k] + config.occlusion_tolerance;
            if (!occluded) {
                src_idx = from[k];
                result.mask.data[k] = 1.0;
            }
        } else if (from_far[k] >= 0 && !dst_surface) {
            src_idx = from_far[k];
        }
        if (src_idx < 0) continue;
        const std::size_t s = static_cast<std::size_t>(src_idx) * 3;
        result.image.data[3 * k] = source.data[s];
        result.image.data[3 * k + 1] = source.data[s + 1];
        result.image.data[3 * k + 2] = source.data[s + 2];
    }
    return result;
}

Image NovelViewOracle::denoise(const Image& z_t, int, const ImageCondition& condition,
                               const camera::CameraPose& target) const {
    if (!condition.reference_view) throw Error("novel-view oracle: missing reference view");
    if (z_t.width != target.resolution.width || z_t.height != target.resolution.height || z_t.channels != 3)
        throw Error("novel-view oracle: z_t shape does not match the target resolution");
    return warp_view(gt_, *condition.reference_view, condition.reference_pose, target, config_).image;
}

Image NovelViewOracle::denoise_unconditional(const Image& z_t, int t, const ImageCondition& condition,
                                             const camera::CameraPose& target) const {
    return channel_mean_image(denoise(z_t, t, condition, target));
}

}  // namespace dualscore::scores
