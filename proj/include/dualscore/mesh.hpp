#pragma once

#include "dualscore/camera.hpp"
#include "dualscore/common.hpp"
#include "dualscore/field.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

namespace dualscore::mesh {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> colors;  // empty, or one per vertex

    [[nodiscard]] bool empty() const { return triangles.empty(); }
    /// Throws Error on out-of-range indices, repeated indices within a
    /// triangle, non-finite coordinates or a color count mismatch.
    void validate() const;
};

struct ExtractionConfig {
    int resolution = 64;       // lattice points per axis over [-1, 1]
    double threshold = 2.5;    // density iso-level
    Vec3 color_direction = Vec3::UnitY();  // viewing direction used for vertex colors
};

using DensityFunction = std::function<double(const Vec3&)>;

/// Marching cubes over the lattice. Returns an empty mesh when no cell
/// straddles the threshold. Throws ConfigError for resolution < 8 or
/// threshold <= 0.
[[nodiscard]] TriangleMesh extract_mesh(const DensityFunction& density, const ExtractionConfig& config);

/// Same, sampling the field's density and coloring vertices from the field.
[[nodiscard]] TriangleMesh extract_mesh(const field::RadianceField& field, const ExtractionConfig& config);

/// Uniform scale and translation placing the bounding box's center at the
/// origin with its longest side spanning [-1, 1]. Throws Error when empty.
[[nodiscard]] TriangleMesh normalize_mesh(const TriangleMesh& mesh);

inline constexpr double kFrontDistance = 2.2;
inline constexpr double kFrontFocal = 3.0;  // NDC focal length

/// Vertical fov in degrees matching the NDC focal length, 2 * atan(1 / focal).
[[nodiscard]] double front_view_fov_deg();

/// Camera on the -Y axis at the front distance, looking at the origin.
[[nodiscard]] camera::CameraPose front_view_pose(camera::Resolution resolution);

/// Flat-shaded z-buffer rasterization on a white background. Vertex colors
/// are averaged per face; meshes without colors render light gray.
[[nodiscard]] Image capture_front_view(const TriangleMesh& mesh, camera::Resolution resolution);

/// Volume render of the field at the front pose with evaluation quadrature.
[[nodiscard]] Image capture_front_view(const field::RadianceField& field, camera::Resolution resolution);

/// Raised when a mesh has more faces than the configured cap.
class FaceCapExceeded : public Error {
public:
    using Error::Error;
};

/// ASCII OBJ. Each vertex is "v x y z" or "v x y z r g b"; each face is
/// "f a b c" with 1-based indices. Numbers use the shortest decimal form that
/// reads back to the same double. A face_cap > 0 refuses larger meshes.
void write_obj(std::ostream& os, const TriangleMesh& mesh, long face_cap = 0);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh, long face_cap = 0);
[[nodiscard]] TriangleMesh read_obj(std::istream& is);
[[nodiscard]] TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace dualscore::mesh
