#pragma once

#include "dualscore/camera.hpp"
#include "dualscore/common.hpp"
#include "dualscore/field.hpp"
#include "dualscore/scores.hpp"

#include <utility>
#include <vector>

namespace dualscore::metrics {

struct PsnrResult {
    double db = 0.0;  // +inf when the images match exactly
    double mse = 0.0;
    bool infinite = false;
};

/// 10 log10(1 / MSE) over every channel value. Shapes must agree.
[[nodiscard]] PsnrResult psnr(const Image& a, const Image& b);

/// Fixed evaluation cameras: azimuths 45/135/225/315, elevation 15, fov 40,
/// distance scale 0.9.
[[nodiscard]] std::vector<camera::CameraPose> held_out_poses(camera::Resolution resolution);

/// Pairs of cameras 45 degrees apart in azimuth around the object at
/// elevation 15, fov 40, distance scale 0.9.
[[nodiscard]] std::vector<std::pair<camera::CameraPose, camera::CameraPose>> consistency_pairs(
    camera::Resolution resolution);

/// Field render (evaluation quadrature) against the ground truth per pose.
[[nodiscard]] std::vector<PsnrResult> eval_psnr(const field::RadianceField& field, const scores::GroundTruth& gt,
                                                const std::vector<camera::CameraPose>& poses);

/// Mean of finite PSNR values; +inf if any pose matched exactly.
[[nodiscard]] double mean_psnr(const std::vector<PsnrResult>& results);

/// IoU between {field density > threshold} and scene occupancy sampled at the
/// centers of a resolution^3 lattice over [-1, 1]^3.
[[nodiscard]] double eval_density_iou(const field::RadianceField& field, const scores::SyntheticScene& scene,
                                      int resolution, double threshold);

struct ConsistencyResult {
    double score = 0.0;    // mean over used pairs of the masked mean absolute error
    int pairs_used = 0;
    int pairs_skipped = 0;  // empty visibility mask
};

/// Warps the render at the first pose into the second through ground-truth
/// depth and compares it to the render at the second pose on the pixels
/// where visible surface landed and the second view also sees surface.
[[nodiscard]] ConsistencyResult eval_cross_view_consistency(
    const renderer::Medium& medium, const scores::GroundTruth& gt,
    const std::vector<std::pair<camera::CameraPose, camera::CameraPose>>& pairs);

[[nodiscard]] ConsistencyResult eval_cross_view_consistency(
    const field::RadianceField& field, const scores::GroundTruth& gt,
    const std::vector<std::pair<camera::CameraPose, camera::CameraPose>>& pairs);

}  // namespace dualscore::metrics
