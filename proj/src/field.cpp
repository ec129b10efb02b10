#include "dualscore/field.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace dualscore::field {

namespace {

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

constexpr std::array<char, 4> kMagic{'D', 'S', 'R', 'F'};
constexpr std::uint32_t kVersion = 1;

ParamLayout make_layout(const FieldConfig& c) {
    const std::size_t r = static_cast<std::size_t>(c.grid_resolution);
    const std::size_t f = static_cast<std::size_t>(c.feature_dim);
    const std::size_t h = static_cast<std::size_t>(c.hidden_width);
    const std::size_t e = static_cast<std::size_t>(6 * c.direction_bands);
    ParamLayout l;
    std::size_t off = 0;
    l.grid = off;
    off += r * r * r * f;
    l.w1 = off;
    off += h * f;
    l.b1 = off;
    off += h;
    l.w2h = off;
    off += h * h;
    l.w2d = off;
    off += h * e;
    l.b2 = off;
    off += h;
    l.w_sigma = off;
    off += h;
    l.b_sigma = off;
    off += 1;
    l.w_rgb = off;
    off += 3 * h;
    l.b_rgb = off;
    off += 3;
    l.total = off;
    return l;
}

void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v & 0xffffffffu));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    if (!is) throw Error("checkpoint: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
    const std::uint64_t lo = get_u32(is);
    const std::uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

// Hidden activation: squareplus shifted through the origin. Smooth, so central
// differences of the network stay valid at any step size.
constexpr double kSmoothing = 1e-2;
const double kSqrtSmoothing = std::sqrt(kSmoothing);

Eigen::MatrixXd activate(const Eigen::MatrixXd& z) {
    return 0.5 * (z.array() + (z.array().square() + kSmoothing).sqrt() - kSqrtSmoothing).matrix();
}

Eigen::MatrixXd activate_slope(const Eigen::MatrixXd& z) {
    return 0.5 * (1.0 + z.array() / (z.array().square() + kSmoothing).sqrt()).matrix();
}

}  // namespace

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void encode_direction(const Vec3& dir, int bands, std::span<double> out) {
    std::size_t k = 0;
    double freq = kPi;
    for (int b = 0; b < bands; ++b, freq *= 2.0) {
        for (int i = 0; i < 3; ++i) {
            out[k++] = std::sin(freq * dir[i]);
            out[k++] = std::cos(freq * dir[i]);
        }
    }
}

void FieldConfig::validate() const {
    if (grid_resolution < 2) throw ConfigError("field: grid_resolution must be >= 2");
    if (feature_dim < 1) throw ConfigError("field: feature_dim must be >= 1");
    if (hidden_width < 1) throw ConfigError("field: hidden_width must be >= 1");
    if (direction_bands < 1) throw ConfigError("field: direction_bands must be >= 1");
    if (!(init_density > 0.0)) throw ConfigError("field: init_density must be positive");
    if (!(init_feature_scale >= 0.0)) throw ConfigError("field: init_feature_scale must be non-negative");
}

double ParamGradient::norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

bool ParamGradient::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
    if (other.size() != size()) throw Error("ParamGradient: shape mismatch in accumulation");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
    return *this;
}

ParamGradient& ParamGradient::operator*=(double s) {
    for (double& v : values) v *= s;
    return *this;
}

RadianceField::RadianceField(const FieldConfig& config) : config_(config) {
    config_.validate();
    layout_ = make_layout(config_);
    params_.assign(layout_.total, 0.0);

    std::mt19937_64 rng(config_.seed);
    const auto fill_uniform = [&](std::size_t offset, std::size_t count, double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < count; ++i) params_[offset + i] = bound > 0.0 ? dist(rng) : 0.0;
    };
    const std::size_t f = static_cast<std::size_t>(config_.feature_dim);
    const std::size_t h = static_cast<std::size_t>(config_.hidden_width);
    const std::size_t e = static_cast<std::size_t>(direction_encoding_size());

    fill_uniform(layout_.grid, layout_.grid_count(), config_.init_feature_scale);
    fill_uniform(layout_.w1, h * f, std::sqrt(6.0 / static_cast<double>(f)));
    // W2h and W2d act on the concatenation [hidden_1, enc(dir)].
    const double bound2 = std::sqrt(6.0 / static_cast<double>(h + e));
    fill_uniform(layout_.w2h, h * h, bound2);
    fill_uniform(layout_.w2d, h * e, bound2);
    fill_uniform(layout_.w_sigma, h, std::sqrt(1.0 / static_cast<double>(h)));
    fill_uniform(layout_.w_rgb, 3 * h, std::sqrt(1.0 / static_cast<double>(h)));
    params_[layout_.b_sigma] = std::log(std::expm1(config_.init_density));
}

std::span<double> RadianceField::mutable_params() {
    ++generation_;
    return params_;
}

QueryResult RadianceField::query(const Vec3& point, const Vec3& direction) const {
    double density = 0.0;
    Vec3 color;
    forward(std::span<const Vec3>(&point, 1), std::span<const Vec3>(&direction, 1), std::span<double>(&density, 1),
            std::span<Vec3>(&color, 1));
    return {density, color};
}

std::vector<double> RadianceField::vertex_feature(int ix, int iy, int iz) const {
    const int r = config_.grid_resolution;
    const std::size_t f = static_cast<std::size_t>(config_.feature_dim);
    const std::size_t base = layout_.grid + ((static_cast<std::size_t>(iz) * r + iy) * r + ix) * f;
    return {params_.begin() + static_cast<std::ptrdiff_t>(base),
            params_.begin() + static_cast<std::ptrdiff_t>(base + f)};
}

QueryResult RadianceField::decode(std::span<const double> feature, const Vec3& direction) const {
    const int h = config_.hidden_width;
    const int fdim = config_.feature_dim;
    const int e = direction_encoding_size();
    const double* p = params_.data();
    const ConstVecMap x(feature.data(), fdim);
    const Eigen::VectorXd h1 = activate(ConstMatMap(p + layout_.w1, h, fdim) * x + ConstVecMap(p + layout_.b1, h));
    std::vector<double> enc(static_cast<std::size_t>(e));
    encode_direction(direction, config_.direction_bands, enc);
    const Eigen::VectorXd h2 = activate(ConstMatMap(p + layout_.w2h, h, h) * h1 +
                                        ConstMatMap(p + layout_.w2d, h, e) * ConstVecMap(enc.data(), e) +
                                        ConstVecMap(p + layout_.b2, h));
    const double sraw = ConstVecMap(p + layout_.w_sigma, h).dot(h1) + p[layout_.b_sigma];
    const Eigen::Vector3d craw = ConstMatMap(p + layout_.w_rgb, 3, h) * h2 + ConstVecMap(p + layout_.b_rgb, 3);
    QueryResult out;
    out.density = softplus(sraw);
    out.color = Vec3(sigmoid(craw[0]), sigmoid(craw[1]), sigmoid(craw[2]));
    return out;
}

void RadianceField::forward(std::span<const Vec3> points, std::span<const Vec3> directions, std::span<double> density,
                            std::span<Vec3> color, FieldTape* tape) const {
    const std::size_t n = points.size();
    if (directions.size() != n || density.size() != n || color.size() != n)
        throw Error("RadianceField::forward: array length mismatch");

    FieldTape local;
    FieldTape& t = tape ? *tape : local;
    const int r = config_.grid_resolution;
    const int fdim = config_.feature_dim;
    const int h = config_.hidden_width;
    const int e = direction_encoding_size();
    const double* p = params_.data();
    const double* grid = p + layout_.grid;
    const double scale = 0.5 * (r - 1);

    t.n = static_cast<int>(n);
    t.corner_index.assign(8 * n, 0);
    t.corner_weight.assign(8 * n, 0.0);
    t.inside.assign(n, 0);
    t.features.setZero(fdim, static_cast<Eigen::Index>(n));

    for (std::size_t s = 0; s < n; ++s) {
        const Vec3& q = points[s];
        if (!(std::abs(q.x()) <= 1.0 && std::abs(q.y()) <= 1.0 && std::abs(q.z()) <= 1.0)) continue;
        t.inside[s] = 1;
        std::array<int, 3> i0{};
        std::array<double, 3> fr{};
        for (int a = 0; a < 3; ++a) {
            const double g = (q[a] + 1.0) * scale;
            const int i = std::clamp(static_cast<int>(std::floor(g)), 0, r - 2);
            i0[static_cast<std::size_t>(a)] = i;
            fr[static_cast<std::size_t>(a)] = g - i;
        }
        double* feat = t.features.col(static_cast<Eigen::Index>(s)).data();
        for (int c = 0; c < 8; ++c) {
            const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
            const double w = (dx ? fr[0] : 1.0 - fr[0]) * (dy ? fr[1] : 1.0 - fr[1]) * (dz ? fr[2] : 1.0 - fr[2]);
            const int base = ((i0[2] + dz) * r + (i0[1] + dy)) * r + (i0[0] + dx);
            const int offset = base * fdim;
            t.corner_index[8 * s + static_cast<std::size_t>(c)] = offset;
            t.corner_weight[8 * s + static_cast<std::size_t>(c)] = w;
            const double* g = grid + offset;
            for (int k = 0; k < fdim; ++k) feat[k] += w * g[k];
        }
    }

    t.z1.noalias() = ConstMatMap(p + layout_.w1, h, fdim) * t.features;
    t.z1.colwise() += ConstVecMap(p + layout_.b1, h);
    t.h1 = activate(t.z1);
    t.sigma_raw.noalias() = ConstVecMap(p + layout_.w_sigma, h).transpose() * t.h1;
    t.sigma_raw.array() += p[layout_.b_sigma];

    t.z2.noalias() = ConstMatMap(p + layout_.w2h, h, h) * t.h1;
    t.run_start.clear();
    t.run_direction.clear();
    std::vector<double> enc(static_cast<std::size_t>(e));
    const ConstMatMap w2d(p + layout_.w2d, h, e);
    const ConstVecMap b2(p + layout_.b2, h);
    std::size_t s = 0;
    while (s < n) {
        std::size_t end = s + 1;
        while (end < n && directions[end] == directions[s]) ++end;
        t.run_start.push_back(static_cast<std::int32_t>(s));
        t.run_direction.push_back(directions[s]);
        encode_direction(directions[s], config_.direction_bands, enc);
        const Eigen::VectorXd shift = w2d * ConstVecMap(enc.data(), e) + b2;
        t.z2.middleCols(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(end - s)).colwise() += shift;
        s = end;
    }
    t.h2 = activate(t.z2);
    t.rgb_raw.noalias() = ConstMatMap(p + layout_.w_rgb, 3, h) * t.h2;
    t.rgb_raw.colwise() += ConstVecMap(p + layout_.b_rgb, 3);

    for (std::size_t i = 0; i < n; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        if (!t.inside[i]) {
            density[i] = 0.0;
            color[i].setZero();
            continue;
        }
        density[i] = softplus(t.sigma_raw[col]);
        color[i] = Vec3(sigmoid(t.rgb_raw(0, col)), sigmoid(t.rgb_raw(1, col)), sigmoid(t.rgb_raw(2, col)));
    }
}

void RadianceField::backward(const FieldTape& t, std::span<const double> g_density, std::span<const Vec3> g_color,
                             ParamGradient& grad) const {
    const std::size_t n = static_cast<std::size_t>(t.n);
    if (g_density.size() != n || g_color.size() != n) throw Error("RadianceField::backward: upstream length mismatch");
    if (grad.size() != layout_.total) throw Error("RadianceField::backward: gradient shape mismatch");

    const int fdim = config_.feature_dim;
    const int h = config_.hidden_width;
    const int e = direction_encoding_size();
    const auto cols = static_cast<Eigen::Index>(n);
    const double* p = params_.data();
    double* g = grad.values.data();

    Eigen::RowVectorXd d_sraw(cols);
    Eigen::MatrixXd d_rgb(3, cols);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        if (!t.inside[i]) {
            d_sraw[c] = 0.0;
            d_rgb.col(c).setZero();
            continue;
        }
        d_sraw[c] = g_density[i] * sigmoid(t.sigma_raw[c]);
        for (int k = 0; k < 3; ++k) {
            const double sg = sigmoid(t.rgb_raw(k, c));
            d_rgb(k, c) = g_color[i][k] * sg * (1.0 - sg);
        }
    }

    MatMap(g + layout_.w_rgb, 3, h).noalias() += d_rgb * t.h2.transpose();
    VecMap(g + layout_.b_rgb, 3) += d_rgb.rowwise().sum();

    Eigen::MatrixXd d_z2 = ConstMatMap(p + layout_.w_rgb, 3, h).transpose() * d_rgb;
    d_z2 = d_z2.cwiseProduct(activate_slope(t.z2));

    MatMap(g + layout_.w2h, h, h).noalias() += d_z2 * t.h1.transpose();
    VecMap(g + layout_.b2, h) += d_z2.rowwise().sum();
    std::vector<double> enc(static_cast<std::size_t>(e));
    MatMap gw2d(g + layout_.w2d, h, e);
    for (std::size_t run = 0; run < t.run_start.size(); ++run) {
        const auto begin = static_cast<Eigen::Index>(t.run_start[run]);
        const auto end = run + 1 < t.run_start.size() ? static_cast<Eigen::Index>(t.run_start[run + 1]) : cols;
        encode_direction(t.run_direction[run], config_.direction_bands, enc);
        const Eigen::VectorXd dsum = d_z2.middleCols(begin, end - begin).rowwise().sum();
        gw2d.noalias() += dsum * ConstVecMap(enc.data(), e).transpose();
    }

    Eigen::MatrixXd d_h1 = ConstMatMap(p + layout_.w2h, h, h).transpose() * d_z2;
    d_h1.noalias() += ConstVecMap(p + layout_.w_sigma, h) * d_sraw;
    VecMap(g + layout_.w_sigma, h).noalias() += t.h1 * d_sraw.transpose();
    g[layout_.b_sigma] += d_sraw.sum();

    const Eigen::MatrixXd d_z1 = d_h1.cwiseProduct(activate_slope(t.z1));
    MatMap(g + layout_.w1, h, fdim).noalias() += d_z1 * t.features.transpose();
    VecMap(g + layout_.b1, h) += d_z1.rowwise().sum();

    const Eigen::MatrixXd d_feat = ConstMatMap(p + layout_.w1, h, fdim).transpose() * d_z1;
    double* g_grid = g + layout_.grid;
    for (std::size_t s = 0; s < n; ++s) {
        if (!t.inside[s]) continue;
        const double* df = d_feat.col(static_cast<Eigen::Index>(s)).data();
        for (int c = 0; c < 8; ++c) {
            const double w = t.corner_weight[8 * s + static_cast<std::size_t>(c)];
            double* dst = g_grid + t.corner_index[8 * s + static_cast<std::size_t>(c)];
            for (int k = 0; k < fdim; ++k) dst[k] += w * df[k];
        }
    }
}

ParamGradient query_batch_with_grad(const RadianceField& field, std::span<const Vec3> points,
                                    std::span<const Vec3> directions, std::span<const double> g_density,
                                    std::span<const Vec3> g_color) {
    const std::size_t n = points.size();
    if (directions.size() != n || g_density.size() != n || g_color.size() != n)
        throw Error("query_batch_with_grad: array length mismatch");
    FieldTape tape;
    std::vector<double> density(n);
    std::vector<Vec3> color(n);
    field.forward(points, directions, density, color, &tape);
    ParamGradient grad = field.zero_gradient();
    field.backward(tape, g_density, g_color, grad);
    return grad;
}

void apply_adamw_step(RadianceField& field, const ParamGradient& grad, AdamWState& state, const AdamWConfig& config) {
    const std::size_t n = field.layout().total;
    if (grad.size() != n || state.m.size() != n || state.v.size() != n)
        throw Error("apply_adamw_step: optimizer state is not shape-congruent with the field");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grad.values[i])) {
            throw Error(std::string("apply_adamw_step: non-finite gradient in parameter group '") +
                        (field.group_of(i) == ParamGroup::grid ? "grid" : "mlp") + "'");
        }
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    const std::size_t grid_end = field.layout().grid_count();
    std::span<double> params = field.mutable_params();
    for (std::size_t i = 0; i < n; ++i) {
        const double lr = i < grid_end ? config.lr_grid : config.lr_mlp;
        const double g = grad.values[i];
        params[i] -= lr * config.weight_decay * params[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
}

void RadianceField::write_checkpoint(std::ostream& os) const {
    os.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(config_.grid_resolution));
    put_u32(os, static_cast<std::uint32_t>(config_.feature_dim));
    put_u32(os, static_cast<std::uint32_t>(config_.hidden_width));
    put_u32(os, static_cast<std::uint32_t>(config_.direction_bands));
    put_u64(os, static_cast<std::uint64_t>(layout_.total));
    for (double v : params_) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!os) throw Error("checkpoint: write failed");
}

void RadianceField::save(const std::filesystem::path& path) const {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("checkpoint: cannot open " + tmp.string() + " for writing");
        write_checkpoint(os);
    }
    std::filesystem::rename(tmp, path);
}

RadianceField RadianceField::read_checkpoint(std::istream& is) {
    std::array<char, 4> magic{};
    is.read(magic.data(), 4);
    if (!is || magic != kMagic) throw Error("checkpoint: bad magic bytes");
    const std::uint32_t version = get_u32(is);
    if (version != kVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
    FieldConfig cfg;
    cfg.grid_resolution = static_cast<int>(get_u32(is));
    cfg.feature_dim = static_cast<int>(get_u32(is));
    cfg.hidden_width = static_cast<int>(get_u32(is));
    cfg.direction_bands = static_cast<int>(get_u32(is));
    const std::uint64_t count = get_u64(is);
    RadianceField field(cfg);
    if (count != field.layout_.total) throw Error("checkpoint: parameter count does not match the declared shape");
    for (double& v : field.params_) v = static_cast<double>(std::bit_cast<float>(get_u32(is)));
    return field;
}

RadianceField RadianceField::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("checkpoint: cannot open " + path.string());
    return read_checkpoint(is);
}

}  // namespace dualscore::field
