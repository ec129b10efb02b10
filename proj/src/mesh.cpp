#include "dualscore/mesh.hpp"

#include "dualscore/renderer.hpp"
#include "mc_tables.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace dualscore::mesh {

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// Endpoints of each cube edge, lower lattice corner first.
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6}, {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

double lattice_coord(int i, int n) { return -1.0 + 2.0 * i / (n - 1); }

void check_config(const ExtractionConfig& config) {
    if (config.resolution < 8) throw ConfigError("extract_mesh: resolution must be >= 8");
    if (!(config.threshold > 0.0)) throw ConfigError("extract_mesh: threshold must be > 0");
}

TriangleMesh march(const std::vector<double>& values, const ExtractionConfig& config) {
    const int n = config.resolution;
    const auto index = [n](int i, int j, int k) { return (static_cast<std::size_t>(k) * n + j) * n + i; };
    const double iso = config.threshold;

    TriangleMesh mesh;
    std::unordered_map<std::size_t, int> edge_vertex;
    const auto vertex_on_edge = [&](int i, int j, int k, int edge) {
        const int* a = kCorner[kEdge[edge][0]];
        const int* b = kCorner[kEdge[edge][1]];
        const int ai = i + a[0], aj = j + a[1], ak = k + a[2];
        const int axis = b[0] != a[0] ? 0 : (b[1] != a[1] ? 1 : 2);
        const std::size_t key = index(ai, aj, ak) * 3 + static_cast<std::size_t>(axis);
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        const double va = values[index(ai, aj, ak)];
        const double vb = values[index(i + b[0], j + b[1], k + b[2])];
        const double t = (iso - va) / (vb - va);
        const Vec3 pa(lattice_coord(ai, n), lattice_coord(aj, n), lattice_coord(ak, n));
        const Vec3 pb(lattice_coord(i + b[0], n), lattice_coord(j + b[1], n), lattice_coord(k + b[2], n));
        const int id = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(pa + t * (pb - pa));
        edge_vertex.emplace(key, id);
        return id;
    };

    for (int k = 0; k + 1 < n; ++k)
        for (int j = 0; j + 1 < n; ++j)
            for (int i = 0; i + 1 < n; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c)
                    if (values[index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])] < iso) cube |= 1 << c;
                if (cube == 0 || cube == 255) continue;
                const int* row = detail::kTriTable[cube];
                for (int e = 0; row[e] != -1; e += 3) {
                    const int a = vertex_on_edge(i, j, k, row[e]);
                    const int b = vertex_on_edge(i, j, k, row[e + 1]);
                    const int c = vertex_on_edge(i, j, k, row[e + 2]);
                    mesh.triangles.push_back({a, b, c});
                }
            }
    return mesh;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

bool parse_double(const std::string& s, double& out) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

void TriangleMesh::validate() const {
    for (const Vec3& v : vertices)
        if (!v.allFinite()) throw Error("mesh: non-finite vertex coordinate");
    if (!colors.empty() && colors.size() != vertices.size()) throw Error("mesh: color count does not match vertices");
    const int nv = static_cast<int>(vertices.size());
    for (const auto& t : triangles) {
        for (int idx : t)
            if (idx < 0 || idx >= nv) throw Error("mesh: triangle index out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw Error("mesh: degenerate triangle");
    }
}

TriangleMesh extract_mesh(const DensityFunction& density, const ExtractionConfig& config) {
    check_config(config);
    const int n = config.resolution;
    std::vector<double> values(static_cast<std::size_t>(n) * n * n);
    std::size_t idx = 0;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                values[idx++] = density(Vec3(lattice_coord(i, n), lattice_coord(j, n), lattice_coord(k, n)));
    return march(values, config);
}

TriangleMesh extract_mesh(const field::RadianceField& field, const ExtractionConfig& config) {
    check_config(config);
    const int n = config.resolution;
    const std::size_t slice = static_cast<std::size_t>(n) * n;
    std::vector<double> values(slice * n);
    std::vector<Vec3> points(slice), dirs(slice, config.color_direction.normalized()), colors(slice);
    for (int k = 0; k < n; ++k) {
        std::size_t p = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) points[p++] = Vec3(lattice_coord(i, n), lattice_coord(j, n), lattice_coord(k, n));
        field.forward(points, dirs, std::span<double>(values.data() + slice * k, slice), colors);
    }
    TriangleMesh mesh = march(values, config);
    if (!mesh.vertices.empty()) {
        std::vector<double> dens(mesh.vertices.size());
        std::vector<Vec3> vdirs(mesh.vertices.size(), config.color_direction.normalized());
        mesh.colors.resize(mesh.vertices.size());
        field.forward(mesh.vertices, vdirs, dens, mesh.colors);
    }
    return mesh;
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw Error("normalize_mesh: mesh is empty");
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const double extent = (hi - lo).maxCoeff();
    if (!(extent > 0.0)) throw Error("normalize_mesh: mesh has zero extent");
    const Vec3 center = 0.5 * (lo + hi);
    const double scale = 2.0 / extent;
    TriangleMesh out = mesh;
    for (Vec3& v : out.vertices) v = (v - center) * scale;
    return out;
}

double front_view_fov_deg() { return rad_to_deg(2.0 * std::atan(1.0 / kFrontFocal)); }

camera::CameraPose front_view_pose(camera::Resolution resolution) {
    return camera::look_at(Vec3(0.0, -kFrontDistance, 0.0), Vec3::Zero(), front_view_fov_deg(), resolution);
}

Image capture_front_view(const TriangleMesh& mesh, camera::Resolution resolution) {
    mesh.validate();
    const camera::CameraPose pose = front_view_pose(resolution);
    const int w = resolution.width, h = resolution.height;
    const double f = pose.focal_pixels();
    Image image(w, h, 3, 1.0);
    std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());

    for (const auto& tri : mesh.triangles) {
        Vec3 cam[3];
        double sx[3], sy[3];
        bool visible = true;
        for (int k = 0; k < 3; ++k) {
            cam[k] = pose.rotation * (mesh.vertices[static_cast<std::size_t>(tri[k])] - pose.position);
            if (cam[k].z() <= 1e-9) visible = false;
            sx[k] = f * cam[k].x() / cam[k].z() + 0.5 * w;
            sy[k] = f * cam[k].y() / cam[k].z() + 0.5 * h;
        }
        if (!visible) continue;
        const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
        if (std::abs(area) < 1e-14) continue;

        const Vec3& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
        const Vec3 normal = (b - a).cross(c - a).normalized();
        const Vec3 to_camera = (pose.position - (a + b + c) / 3.0).normalized();
        const double shade = 0.25 + 0.75 * std::abs(normal.dot(to_camera));
        Vec3 base = Vec3::Constant(0.8);
        if (!mesh.colors.empty())
            base = (mesh.colors[static_cast<std::size_t>(tri[0])] + mesh.colors[static_cast<std::size_t>(tri[1])] +
                    mesh.colors[static_cast<std::size_t>(tri[2])]) / 3.0;
        const Vec3 color = (shade * base).cwiseMax(0.0).cwiseMin(1.0);

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({sx[0], sx[1], sx[2]}))));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max({sx[0], sx[1], sx[2]}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({sy[0], sy[1], sy[2]}))));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max({sy[0], sy[1], sy[2]}))));
        for (int py = y0; py <= y1; ++py)
            for (int px = x0; px <= x1; ++px) {
                const double cx = px + 0.5, cy = py + 0.5;
                double bary[3];
                for (int k = 0; k < 3; ++k) {
                    const int k1 = (k + 1) % 3, k2 = (k + 2) % 3;
                    bary[k] = ((sx[k2] - sx[k1]) * (cy - sy[k1]) - (sy[k2] - sy[k1]) * (cx - sx[k1])) / area;
                }
                if (bary[0] < 0.0 || bary[1] < 0.0 || bary[2] < 0.0) continue;
                const double inv_z = bary[0] / cam[0].z() + bary[1] / cam[1].z() + bary[2] / cam[2].z();
                const double z = 1.0 / inv_z;
                const std::size_t idx = static_cast<std::size_t>(py) * w + px;
                if (z >= zbuf[idx]) continue;
                zbuf[idx] = z;
                image.set_rgb(px, py, color);
            }
    }
    return image;
}

Image capture_front_view(const field::RadianceField& field, camera::Resolution resolution) {
    renderer::QuadratureConfig q = renderer::QuadratureConfig::evaluation();
    q.bound_radius = std::sqrt(3.0);
    return renderer::render(renderer::FieldMedium(field), front_view_pose(resolution), q).rgb;
}

void write_obj(std::ostream& os, const TriangleMesh& mesh, long face_cap) {
    mesh.validate();
    if (face_cap > 0 && static_cast<long>(mesh.triangles.size()) > face_cap) {
        std::ostringstream msg;
        msg << "mesh has " << mesh.triangles.size() << " faces, above the cap of " << face_cap << "; not written";
        throw FaceCapExceeded(msg.str());
    }
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        os << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z());
        if (!mesh.colors.empty()) {
            const Vec3& c = mesh.colors[i];
            os << ' ' << format_double(c.x()) << ' ' << format_double(c.y()) << ' ' << format_double(c.z());
        }
        os << '\n';
    }
    for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh, long face_cap) {
    std::ostringstream buffer;
    write_obj(buffer, mesh, face_cap);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write mesh file: " + path.string());
    os << buffer.str();
    if (!os) throw Error("failed writing mesh file: " + path.string());
}

TriangleMesh read_obj(std::istream& is) {
    TriangleMesh mesh;
    std::string line;
    int line_no = 0;
    bool colored = false;
    const auto fail = [&](const std::string& msg) {
        throw Error("OBJ line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++line_no;
        std::istringstream in(line);
        std::string tag;
        if (!(in >> tag) || tag[0] == '#') continue;
        std::vector<std::string> tokens;
        for (std::string tok; in >> tok;) tokens.push_back(tok);
        if (tag == "v") {
            if (tokens.size() != 3 && tokens.size() != 6) fail("vertex needs 3 or 6 numbers");
            double vals[6];
            for (std::size_t k = 0; k < tokens.size(); ++k)
                if (!parse_double(tokens[k], vals[k])) fail("bad number '" + tokens[k] + "'");
            const bool has_color = tokens.size() == 6;
            if (mesh.vertices.empty())
                colored = has_color;
            else if (has_color != colored)
                fail("vertices mix colored and uncolored records");
            mesh.vertices.emplace_back(vals[0], vals[1], vals[2]);
            if (has_color) mesh.colors.emplace_back(vals[3], vals[4], vals[5]);
        } else if (tag == "f") {
            if (tokens.size() != 3) fail("only triangular faces are supported");
            std::array<int, 3> tri{};
            for (int k = 0; k < 3; ++k) {
                const std::string& s = tokens[static_cast<std::size_t>(k)];
                int v = 0;
                const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
                if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 1) fail("bad face index '" + s + "'");
                tri[static_cast<std::size_t>(k)] = v - 1;
            }
            mesh.triangles.push_back(tri);
        } else {
            fail("unsupported record '" + tag + "'");
        }
    }
    mesh.validate();
    return mesh;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read mesh file: " + path.string());
    return read_obj(is);
}

}  // namespace dualscore::mesh
