#include "dualscore/renderer.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <random>

namespace dualscore::renderer {

namespace {

struct RayList {
    Vec3 origin;
    std::vector<std::int32_t> pixel;
    std::vector<Vec3> direction;
    std::vector<double> t_near;
    std::vector<double> dt;
};

RayList hitting_rays(const camera::CameraPose& pose, const QuadratureConfig& q) {
    const camera::RayGrid grid = camera::generate_rays(pose, {q.bound_radius});
    RayList list;
    list.origin = pose.position;
    for (std::size_t i = 0; i < grid.rays.size(); ++i) {
        const camera::Ray& r = grid.rays[i];
        if (!r.hits_bounds) continue;
        list.pixel.push_back(static_cast<std::int32_t>(i));
        list.direction.push_back(r.direction);
        list.t_near.push_back(r.t_near);
        list.dt.push_back((r.t_far - r.t_near) / q.samples);
    }
    return list;
}

RenderedView blank_view(const camera::CameraPose& pose, const QuadratureConfig& q) {
    RenderedView view;
    const int w = pose.resolution.width;
    const int h = pose.resolution.height;
    view.rgb = Image(w, h, 3);
    for (std::size_t i = 0; i < view.rgb.pixel_count(); ++i) {
        view.rgb.data[3 * i] = q.background.x();
        view.rgb.data[3 * i + 1] = q.background.y();
        view.rgb.data[3 * i + 2] = q.background.z();
    }
    view.opacity = Image(w, h, 1);
    view.depth = Image(w, h, 1);
    view.pose = pose;
    return view;
}

/// Fills sample distances for every ray, in ray order.
std::vector<double> place_samples(const RayList& rays, const QuadratureConfig& q) {
    const std::size_t ns = static_cast<std::size_t>(q.samples);
    std::vector<double> t(rays.pixel.size() * ns);
    std::mt19937_64 rng(q.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t r = 0; r < rays.pixel.size(); ++r) {
        for (std::size_t i = 0; i < ns; ++i) {
            const double u = q.jitter ? unit(rng) : 0.5;
            t[r * ns + i] = rays.t_near[r] + (static_cast<double>(i) + u) * rays.dt[r];
        }
    }
    return t;
}

template <class Evaluate>
void composite(const RayList& rays, const std::vector<double>& t, const QuadratureConfig& q, RenderedView& view,
               Evaluate&& evaluate) {
    const std::size_t ns = static_cast<std::size_t>(q.samples);
    const std::size_t chunk = static_cast<std::size_t>(std::max(q.chunk_rays, 1));
    std::vector<Vec3> points, dirs;
    std::vector<double> density;
    std::vector<Vec3> color;
    for (std::size_t r0 = 0; r0 < rays.pixel.size(); r0 += chunk) {
        const std::size_t r1 = std::min(r0 + chunk, rays.pixel.size());
        const std::size_t count = (r1 - r0) * ns;
        points.resize(count);
        dirs.resize(count);
        density.resize(count);
        color.resize(count);
        for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t i = 0; i < ns; ++i) {
                const std::size_t k = (r - r0) * ns + i;
                points[k] = rays.origin + t[r * ns + i] * rays.direction[r];
                dirs[k] = rays.direction[r];
            }
        }
        evaluate(std::span<const Vec3>(points), std::span<const Vec3>(dirs), std::span<double>(density),
                 std::span<Vec3>(color));

        for (std::size_t r = r0; r < r1; ++r) {
            const double dt = rays.dt[r];
            double transmittance = 1.0;
            double opacity = 0.0;
            double depth = 0.0;
            Vec3 rgb = Vec3::Zero();
            for (std::size_t i = 0; i < ns; ++i) {
                const std::size_t k = (r - r0) * ns + i;
                const double att = std::exp(-density[k] * dt);
                const double w = transmittance * (1.0 - att);
                rgb += w * color[k];
                opacity += w;
                depth += w * t[r * ns + i];
                transmittance *= att;
            }
            rgb += (1.0 - opacity) * q.background;
            const std::size_t px = static_cast<std::size_t>(rays.pixel[r]);
            view.rgb.data[3 * px] = rgb.x();
            view.rgb.data[3 * px + 1] = rgb.y();
            view.rgb.data[3 * px + 2] = rgb.z();
            view.opacity.data[px] = opacity;
            view.depth.data[px] = depth / std::max(opacity, 1e-10);
        }
    }
}

}  // namespace

RenderedView render(const Medium& medium, const camera::CameraPose& pose, const QuadratureConfig& q) {
    if (q.samples < 1) throw ConfigError("render: need at least one sample per ray");
    RenderedView view = blank_view(pose, q);
    const RayList rays = hitting_rays(pose, q);
    const std::vector<double> t = place_samples(rays, q);
    composite(rays, t, q, view,
              [&](std::span<const Vec3> p, std::span<const Vec3> d, std::span<double> s, std::span<Vec3> c) {
                  medium.evaluate(p, d, s, c);
              });
    return view;
}

RenderedView render(const field::RadianceField& field, const camera::CameraPose& pose, const QuadratureConfig& q) {
    if (q.samples < 1) throw ConfigError("render: need at least one sample per ray");
    RenderedView view = blank_view(pose, q);
    RayList rays = hitting_rays(pose, q);
    std::vector<double> t = place_samples(rays, q);
    composite(rays, t, q, view,
              [&](std::span<const Vec3> p, std::span<const Vec3> d, std::span<double> s, std::span<Vec3> c) {
                  field.forward(p, d, s, c);
              });

    auto cache = std::make_shared<SampleCache>();
    cache->field = &field;
    cache->field_generation = field.generation();
    cache->quadrature = q;
    cache->origin = rays.origin;
    cache->pixel = std::move(rays.pixel);
    cache->direction = std::move(rays.direction);
    cache->t_near = std::move(rays.t_near);
    cache->dt = std::move(rays.dt);
    cache->t = std::move(t);
    view.cache = std::move(cache);
    return view;
}

void render_backward(const field::RadianceField& field, const RenderedView& view, const Image& pixel_grad,
                     field::ParamGradient& grad) {
    if (!view.cache) throw Error("render_backward: the view carries no sample cache");
    const SampleCache& cache = *view.cache;
    if (cache.field != &field || cache.field_generation != field.generation())
        throw Error("render_backward: the view was rendered from a different field state");
    if (!pixel_grad.same_shape(view.rgb)) throw Error("render_backward: pixel gradient shape mismatch");
    if (grad.size() != field.layout().total) throw Error("render_backward: gradient shape mismatch");

    const QuadratureConfig& q = cache.quadrature;
    const std::size_t ns = static_cast<std::size_t>(q.samples);
    const std::size_t chunk = static_cast<std::size_t>(std::max(q.chunk_rays, 1));
    const std::size_t nrays = cache.pixel.size();

    field::FieldTape tape;
    std::vector<Vec3> points, dirs, color, g_color;
    std::vector<double> density, g_density;
    for (std::size_t r0 = 0; r0 < nrays; r0 += chunk) {
        const std::size_t r1 = std::min(r0 + chunk, nrays);
        bool any = false;
        for (std::size_t r = r0; r < r1 && !any; ++r) {
            const std::size_t px = static_cast<std::size_t>(cache.pixel[r]);
            any = pixel_grad.data[3 * px] != 0.0 || pixel_grad.data[3 * px + 1] != 0.0 ||
                  pixel_grad.data[3 * px + 2] != 0.0;
        }
        if (!any) continue;

        const std::size_t count = (r1 - r0) * ns;
        points.resize(count);
        dirs.resize(count);
        density.resize(count);
        color.resize(count);
        g_density.assign(count, 0.0);
        g_color.assign(count, Vec3::Zero());
        for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t i = 0; i < ns; ++i) {
                const std::size_t k = (r - r0) * ns + i;
                points[k] = cache.origin + cache.t[r * ns + i] * cache.direction[r];
                dirs[k] = cache.direction[r];
            }
        }
        field.forward(points, dirs, density, color, &tape);

        for (std::size_t r = r0; r < r1; ++r) {
            const std::size_t px = static_cast<std::size_t>(cache.pixel[r]);
            const Vec3 g(pixel_grad.data[3 * px], pixel_grad.data[3 * px + 1], pixel_grad.data[3 * px + 2]);
            if (g.isZero(0.0)) continue;
            const std::size_t base = (r - r0) * ns;
            const double step = cache.dt[r];
            // Forward sweep: transmittance entering each sample and weights.
            double transmittance = 1.0;
            thread_local std::vector<double> t_in, weight, att;
            t_in.resize(ns);
            weight.resize(ns);
            att.resize(ns);
            for (std::size_t i = 0; i < ns; ++i) {
                att[i] = std::exp(-density[base + i] * step);
                t_in[i] = transmittance;
                weight[i] = transmittance * (1.0 - att[i]);
                transmittance *= att[i];
            }
            // Reverse sweep with the suffix sum of w_k (c_k - background).
            Vec3 suffix = Vec3::Zero();
            for (std::size_t i = ns; i-- > 0;) {
                const Vec3 emitted = color[base + i] - q.background;
                const double t_out = t_in[i] * att[i];
                g_density[base + i] = step * g.dot(t_out * emitted - suffix);
                g_color[base + i] = weight[i] * g;
                suffix += weight[i] * emitted;
            }
        }
        field.backward(tape, g_density, g_color, grad);
    }
}

field::ParamGradient render_backward(const field::RadianceField& field, const RenderedView& view,
                                     const Image& pixel_grad) {
    field::ParamGradient grad = field.zero_gradient();
    render_backward(field, view, pixel_grad, grad);
    return grad;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 3 && image.channels != 1) throw Error("write_png: only 1- or 3-channel images");
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw Error("write_png: cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error("write_png: libpng failure writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c)
                row[static_cast<std::size_t>(x) * image.channels + c] = to_byte(image.at(x, y, c));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Image read_png(const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) throw Error("read_png: cannot read " + path.string());
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw Error("read_png: decode failure for " + path.string());
    }
    Image out(static_cast<int>(img.width), static_cast<int>(img.height), 3);
    for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0;
    return out;
}

}  // namespace dualscore::renderer
