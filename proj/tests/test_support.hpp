#pragma once

#include "dualscore/camera.hpp"
#include "dualscore/field.hpp"
#include "dualscore/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dualscore::testutil {

inline std::filesystem::path source_path(const std::string& relative) {
    return std::filesystem::path(DUALSCORE_SOURCE_DIR) / relative;
}

/// Small field with parameters spread out well beyond the initialization
/// scale, so every layer carries signal.
inline field::RadianceField small_field(std::uint64_t seed) {
    field::FieldConfig c;
    c.grid_resolution = 4;
    c.feature_dim = 2;
    c.hidden_width = 8;
    c.seed = seed;
    field::RadianceField f(c);
    std::mt19937_64 rng(seed + 1000);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::span<double> p = f.mutable_params();
    const field::ParamLayout& l = f.layout();
    for (std::size_t i = l.grid; i < l.w1; ++i) p[i] = u(rng);
    for (std::size_t i = l.b1; i < l.w2h; ++i) p[i] = 0.3 * u(rng);
    for (std::size_t i = l.b2; i < l.w_sigma; ++i) p[i] = 0.3 * u(rng);
    p[l.b_sigma] = 0.5;
    return f;
}

struct FdReport {
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_relative = 0.0;
    std::size_t worst_index = 0;
};

/// Central differences of `loss` around the field's parameters against
/// `analytic`. Entries with |analytic| < abs_floor use an absolute bound.
inline FdReport finite_difference_check(field::RadianceField& f, std::span<const double> analytic,
                                        const std::function<double(const field::RadianceField&)>& loss,
                                        double step = 1e-4, double rel_tol = 1e-3, double abs_floor = 1e-6) {
    FdReport r;
    const std::size_t n = f.layout().total;
    for (std::size_t i = 0; i < n; ++i) {
        const double original = f.params()[i];
        f.mutable_params()[i] = original + step;
        const double up = loss(f);
        f.mutable_params()[i] = original - step;
        const double down = loss(f);
        f.mutable_params()[i] = original;
        const double fd = (up - down) / (2.0 * step);
        const double a = analytic[i];
        ++r.checked;
        double rel = 0.0;
        bool ok;
        if (std::abs(a) < abs_floor) {
            ok = std::abs(a - fd) <= abs_floor;
        } else {
            rel = std::abs(a - fd) / std::max(std::abs(a), std::abs(fd));
            ok = rel <= rel_tol;
        }
        if (!ok) ++r.failures;
        if (rel > r.worst_relative) {
            r.worst_relative = rel;
            r.worst_index = i;
        }
    }
    return r;
}

inline double dot(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline Image random_image(int w, int h, int c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(w, h, c);
    for (double& v : img.data) v = u(rng);
    return img;
}

/// Renderer gradient check of sum(pixel_grad . rgb) on an 8x8 view.
inline FdReport render_gradient_check(std::uint64_t seed, int samples = 16) {
    field::RadianceField f = small_field(seed);
    const camera::CameraPose pose = camera::orbit_pose({37.0, 21.0, 1.6}, 60.0, {8, 8});
    renderer::QuadratureConfig q;
    q.samples = samples;
    q.jitter = true;
    q.seed = seed;
    const Image pixel_grad = random_image(8, 8, 3, seed + 7);
    const renderer::RenderedView view = renderer::render(f, pose, q);
    const field::ParamGradient g = renderer::render_backward(f, view, pixel_grad);
    return finite_difference_check(f, g.values, [&](const field::RadianceField& ff) {
        return dot(renderer::render(ff, pose, q).rgb, pixel_grad);
    });
}

}  // namespace dualscore::testutil
