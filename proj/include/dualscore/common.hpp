#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualscore {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Raised for invalid user-supplied configuration (bad ranges, unknown keys,
/// unreadable files). The CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for violated runtime contracts (shape mismatches, non-finite values,
/// missing caches).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major image of `channels` doubles per pixel.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] bool same_shape(const Image& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    [[nodiscard]] double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    [[nodiscard]] Vec3 rgb(int x, int y) const {
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * channels;
        return {data[i], data[i + 1], data[i + 2]};
    }
    void set_rgb(int x, int y, const Vec3& v) {
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * channels;
        data[i] = v.x();
        data[i + 1] = v.y();
        data[i + 2] = v.z();
    }
};

}  // namespace dualscore
