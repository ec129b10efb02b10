#include "dualscore/metrics.hpp"

#include "dualscore/renderer.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace dualscore::metrics {

namespace {

constexpr double kEvalElevation = 15.0;
constexpr double kEvalFov = 40.0;
constexpr double kEvalScale = 0.9;

camera::CameraPose eval_pose(double azimuth, camera::Resolution resolution) {
    const double d = camera::camera_distance(kEvalFov, 0.5, kEvalScale);
    return camera::orbit_pose({azimuth, kEvalElevation, d}, kEvalFov, resolution);
}

}  // namespace

PsnrResult psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b) || a.size() == 0) throw Error("psnr: images must be non-empty and share a shape");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    PsnrResult r;
    r.mse = sum / static_cast<double>(a.size());
    if (r.mse == 0.0) {
        r.infinite = true;
        r.db = std::numeric_limits<double>::infinity();
    } else {
        r.db = 10.0 * std::log10(1.0 / r.mse);
    }
    return r;
}

std::vector<camera::CameraPose> held_out_poses(camera::Resolution resolution) {
    std::vector<camera::CameraPose> poses;
    for (double az : {45.0, 135.0, 225.0, 315.0}) poses.push_back(eval_pose(az, resolution));
    return poses;
}

std::vector<std::pair<camera::CameraPose, camera::CameraPose>> consistency_pairs(camera::Resolution resolution) {
    std::vector<std::pair<camera::CameraPose, camera::CameraPose>> pairs;
    for (int k = 0; k < 8; ++k)
        pairs.emplace_back(eval_pose(-180.0 + 45.0 * k, resolution), eval_pose(-180.0 + 45.0 * (k + 1), resolution));
    return pairs;
}

std::vector<PsnrResult> eval_psnr(const field::RadianceField& field, const scores::GroundTruth& gt,
                                  const std::vector<camera::CameraPose>& poses) {
    if (poses.empty()) throw Error("eval_psnr: no poses given");
    std::vector<PsnrResult> out;
    const renderer::FieldMedium medium(field);
    for (const auto& pose : poses) {
        const renderer::RenderedView view =
            renderer::render(medium, pose, renderer::QuadratureConfig::evaluation());
        out.push_back(psnr(view.rgb, gt.render(pose)->rgb));
    }
    return out;
}

double mean_psnr(const std::vector<PsnrResult>& results) {
    double s = 0.0;
    for (const PsnrResult& r : results) {
        if (r.infinite) return std::numeric_limits<double>::infinity();
        s += r.db;
    }
    return results.empty() ? 0.0 : s / static_cast<double>(results.size());
}

double eval_density_iou(const field::RadianceField& field, const scores::SyntheticScene& scene, int resolution,
                        double threshold) {
    if (resolution < 16) throw ConfigError("eval_density_iou: resolution must be >= 16");
    const int n = resolution;
    const std::size_t slice = static_cast<std::size_t>(n) * n;
    std::vector<Vec3> points(slice), dirs(slice, Vec3::UnitY()), colors(slice);
    std::vector<double> density(slice);
    long inter = 0, uni = 0, gt_count = 0;
    const auto coord = [n](int i) { return -1.0 + (2.0 * i + 1.0) / n; };
    for (int k = 0; k < n; ++k) {
        std::size_t p = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) points[p++] = Vec3(coord(i), coord(j), coord(k));
        field.forward(points, dirs, density, colors);
        for (std::size_t q = 0; q < slice; ++q) {
            const bool a = density[q] > threshold;
            const bool b = scene.occupied(points[q]);
            gt_count += b;
            inter += a && b;
            uni += a || b;
        }
    }
    if (gt_count == 0) throw Error("eval_density_iou: scene occupies no lattice cell");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

ConsistencyResult eval_cross_view_consistency(
    const renderer::Medium& medium, const scores::GroundTruth& gt,
    const std::vector<std::pair<camera::CameraPose, camera::CameraPose>>& pairs) {
    if (pairs.empty()) throw Error("eval_cross_view_consistency: no pose pairs given");
    const renderer::QuadratureConfig q = renderer::QuadratureConfig::evaluation();
    ConsistencyResult result;
    double total = 0.0;
    for (const auto& [a, b] : pairs) {
        const Image render_a = renderer::render(medium, a, q).rgb;
        const Image render_b = renderer::render(medium, b, q).rgb;
        const scores::WarpResult warped = scores::warp_view(gt, render_a, a, b);
        const Image& opacity_b = gt.render(b)->opacity;
        const double surface = scores::WarpConfig{}.surface_opacity;
        double sum = 0.0;
        long count = 0;
        for (std::size_t p = 0; p < warped.mask.size(); ++p) {
            if (warped.mask.data[p] == 0.0 || opacity_b.data[p] <= surface) continue;
            for (std::size_t c = 0; c < 3; ++c) sum += std::abs(warped.image.data[3 * p + c] - render_b.data[3 * p + c]);
            count += 3;
        }
        if (count == 0) {
            std::cerr << "warning: consistency pair skipped, no mutually visible pixels\n";
            ++result.pairs_skipped;
            continue;
        }
        total += sum / static_cast<double>(count);
        ++result.pairs_used;
    }
    result.score = result.pairs_used ? total / result.pairs_used : 0.0;
    return result;
}

ConsistencyResult eval_cross_view_consistency(
    const field::RadianceField& field, const scores::GroundTruth& gt,
    const std::vector<std::pair<camera::CameraPose, camera::CameraPose>>& pairs) {
    return eval_cross_view_consistency(renderer::FieldMedium(field), gt, pairs);
}

}  // namespace dualscore::metrics
