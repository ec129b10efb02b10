#pragma once

#include "dualscore/camera.hpp"
#include "dualscore/common.hpp"
#include "dualscore/field.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>

namespace dualscore::renderer {

/// Anything that can report density and emitted color along rays.
class Medium {
public:
    virtual ~Medium() = default;
    virtual void evaluate(std::span<const Vec3> points, std::span<const Vec3> directions, std::span<double> density,
                          std::span<Vec3> color) const = 0;
};

class FieldMedium final : public Medium {
public:
    explicit FieldMedium(const field::RadianceField& f) : field_(f) {}
    void evaluate(std::span<const Vec3> points, std::span<const Vec3> directions, std::span<double> density,
                  std::span<Vec3> color) const override {
        field_.forward(points, directions, density, color);
    }

private:
    const field::RadianceField& field_;
};

struct QuadratureConfig {
    int samples = 64;
    bool jitter = true;  // stratified jitter; false places samples at stratum midpoints
    std::uint64_t seed = 0;
    Vec3 background = Vec3::Ones();
    double bound_radius = 1.0;
    int chunk_rays = 16;

    static QuadratureConfig evaluation() {
        QuadratureConfig q;
        q.samples = 256;
        q.jitter = false;
        return q;
    }
};

/// Per-ray quadrature records kept for the reverse pass. Sample positions
/// are stored; densities and colors are recomputed from the field.
struct SampleCache {
    const field::RadianceField* field = nullptr;
    std::uint64_t field_generation = 0;
    QuadratureConfig quadrature;
    Vec3 origin = Vec3::Zero();
    std::vector<std::int32_t> pixel;  // pixel index of each ray that hits the bounds
    std::vector<Vec3> direction;
    std::vector<double> t_near;
    std::vector<double> dt;           // stratum width per ray
    std::vector<double> t;            // samples per ray, contiguous
};

struct RenderedView {
    Image rgb;      // 3 channels in [0, 1]
    Image opacity;  // 1 channel
    Image depth;    // 1 channel, expected termination distance
    camera::CameraPose pose;
    std::shared_ptr<const SampleCache> cache;
};

[[nodiscard]] RenderedView render(const Medium& medium, const camera::CameraPose& pose, const QuadratureConfig& q);

/// Renders a radiance field and keeps the sample cache for render_backward.
[[nodiscard]] RenderedView render(const field::RadianceField& field, const camera::CameraPose& pose,
                                  const QuadratureConfig& q);

/// Accumulates d(sum pixel_grad . rgb)/dphi into `grad`. The view must have
/// been rendered from `field` at its current parameters.
void render_backward(const field::RadianceField& field, const RenderedView& view, const Image& pixel_grad,
                     field::ParamGradient& grad);

[[nodiscard]] field::ParamGradient render_backward(const field::RadianceField& field, const RenderedView& view,
                                                   const Image& pixel_grad);

/// 8-bit PNG (RGB for 3 channels, gray for 1). Values are clamped to [0, 1]
/// and scaled by 255 with rounding; no gamma curve is applied.
void write_png(const std::filesystem::path& path, const Image& image);
[[nodiscard]] Image read_png(const std::filesystem::path& path);

[[nodiscard]] inline std::uint8_t to_byte(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(c * 255.0 + 0.5);
}

}  // namespace dualscore::renderer
