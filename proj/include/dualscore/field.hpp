#pragma once

#include "dualscore/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dualscore::field {

struct FieldConfig {
    int grid_resolution = 32;  // lattice vertices per axis over [-1, 1]
    int feature_dim = 8;
    int hidden_width = 32;
    int direction_bands = 4;
    double init_density = 0.1;
    double init_feature_scale = 1e-2;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Offsets of each tensor inside the flat parameter vector.
struct ParamLayout {
    std::size_t grid = 0;
    std::size_t w1 = 0, b1 = 0;          // hidden_1 = act(W1 * feature + b1)
    std::size_t w2h = 0, w2d = 0, b2 = 0;  // hidden_2 = act(W2h * hidden_1 + W2d * enc(dir) + b2)
    std::size_t w_sigma = 0, b_sigma = 0;  // raw density from hidden_1
    std::size_t w_rgb = 0, b_rgb = 0;      // raw color from hidden_2
    std::size_t total = 0;

    [[nodiscard]] std::size_t grid_count() const { return w1 - grid; }
};

/// Parameter storage with a fixed base alignment, so vectorized Eigen kernels
/// over sub-blocks take the same code path on every allocation.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Accumulator for dJ/dphi, laid out exactly like RadianceField::params().
struct ParamGradient {
    ParamVector values;

    ParamGradient() = default;
    explicit ParamGradient(std::size_t n) : values(n, 0.0) {}

    [[nodiscard]] std::size_t size() const { return values.size(); }
    void set_zero() { std::fill(values.begin(), values.end(), 0.0); }
    [[nodiscard]] double norm() const;
    [[nodiscard]] bool all_finite() const;
    ParamGradient& operator+=(const ParamGradient& other);
    ParamGradient& operator*=(double s);
};

struct QueryResult {
    double density = 0.0;
    Vec3 color = Vec3::Zero();
};

/// Activations retained by a batched forward pass for the reverse pass.
struct FieldTape;

enum class ParamGroup { grid, mlp };

class RadianceField {
public:
    explicit RadianceField(const FieldConfig& config = {});

    [[nodiscard]] const FieldConfig& config() const { return config_; }
    [[nodiscard]] const ParamLayout& layout() const { return layout_; }
    [[nodiscard]] std::span<const double> params() const { return params_; }
    /// Mutable access bumps the generation counter.
    std::span<double> mutable_params();
    [[nodiscard]] std::uint64_t generation() const { return generation_; }
    [[nodiscard]] ParamGroup group_of(std::size_t index) const {
        return index < layout_.grid_count() ? ParamGroup::grid : ParamGroup::mlp;
    }
    [[nodiscard]] int direction_encoding_size() const { return 6 * config_.direction_bands; }
    [[nodiscard]] ParamGradient zero_gradient() const { return ParamGradient(layout_.total); }

    /// Density and color at one point. Outside [-1, 1]^3 the density is 0.
    [[nodiscard]] QueryResult query(const Vec3& point, const Vec3& direction) const;

    /// Batched forward pass. Consecutive samples with identical directions
    /// share one direction encoding. When `tape` is non-null the activations
    /// needed by backward() are recorded there.
    void forward(std::span<const Vec3> points, std::span<const Vec3> directions, std::span<double> density,
                 std::span<Vec3> color, FieldTape* tape = nullptr) const;

    /// Adds the gradient of sum_i (g_density[i] * density_i + g_color[i] . color_i)
    /// with respect to every parameter into `grad`.
    void backward(const FieldTape& tape, std::span<const double> g_density, std::span<const Vec3> g_color,
                  ParamGradient& grad) const;

    /// Feature vector at an exact lattice vertex (no interpolation).
    [[nodiscard]] std::vector<double> vertex_feature(int ix, int iy, int iz) const;
    /// Runs only the MLP on an explicit feature vector.
    [[nodiscard]] QueryResult decode(std::span<const double> feature, const Vec3& direction) const;

    void write_checkpoint(std::ostream& os) const;
    void save(const std::filesystem::path& path) const;
    static RadianceField read_checkpoint(std::istream& is);
    static RadianceField load(const std::filesystem::path& path);

private:
    FieldConfig config_;
    ParamLayout layout_;
    ParamVector params_;
    std::uint64_t generation_ = 0;
};

struct FieldTape {
    int n = 0;
    std::vector<std::int32_t> corner_index;  // 8 per sample, base offset of the feature vector
    std::vector<double> corner_weight;       // 8 per sample
    std::vector<std::uint8_t> inside;
    std::vector<std::int32_t> run_start;     // sample index where each direction run begins
    std::vector<Vec3> run_direction;
    Eigen::MatrixXd features, z1, h1, z2, h2;
    Eigen::RowVectorXd sigma_raw;
    Eigen::MatrixXd rgb_raw;
};

/// Exact reverse-mode gradient of a batched query for upstream signals on
/// (density, color). Shapes must agree.
[[nodiscard]] ParamGradient query_batch_with_grad(const RadianceField& field, std::span<const Vec3> points,
                                                  std::span<const Vec3> directions, std::span<const double> g_density,
                                                  std::span<const Vec3> g_color);

struct AdamWConfig {
    double lr_grid = 0.01;
    double lr_mlp = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    AdamWState() = default;
    explicit AdamWState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One decoupled-weight-decay Adam step with per-group learning rates.
/// Throws Error naming the group when a gradient entry is not finite.
void apply_adamw_step(RadianceField& field, const ParamGradient& grad, AdamWState& state, const AdamWConfig& config);

double softplus(double x);
double sigmoid(double x);

void encode_direction(const Vec3& dir, int bands, std::span<double> out);

}  // namespace dualscore::field
