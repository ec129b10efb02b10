#include "dualscore/cli.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace dualscore;
using dualscore::testutil::source_path;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string output;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               ("dualscore_cli_" + std::to_string(::getpid()) + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Outcome run(const std::string& args, const std::string& env = "") const {
        const fs::path log = dir_ / "cli.log";
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + DUALSCORE_CLI + "' " + args + " > '" +
                                log.string() + "' 2>&1";
        const int status = std::system(cmd.c_str());
        Outcome o;
        o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        o.output = slurp(log);
        return o;
    }

    /// Checkpoint of a small random field and a threshold at the median of its
    /// lattice densities, so extraction yields a surface.
    double write_structured_checkpoint(const fs::path& path, int resolution) const {
        const field::RadianceField f = dualscore::testutil::small_field(7);
        f.save(path);
        const field::RadianceField back = field::RadianceField::load(path);
        std::vector<Vec3> points, dirs, colors;
        for (int k = 0; k < resolution; ++k)
            for (int j = 0; j < resolution; ++j)
                for (int i = 0; i < resolution; ++i) {
                    const auto c = [resolution](int v) { return -1.0 + 2.0 * v / (resolution - 1); };
                    points.emplace_back(c(i), c(j), c(k));
                }
        dirs.assign(points.size(), Vec3::UnitY());
        colors.resize(points.size());
        std::vector<double> density(points.size());
        back.forward(points, dirs, density, colors);
        std::nth_element(density.begin(), density.begin() + density.size() / 2, density.end());
        return density[density.size() / 2];
    }

    std::string tiny_run_flags() const {
        return "--steps 2 --set schedule.resolution_start=8 --set schedule.resolution_end=8 "
               "--set run.samples_per_ray=16 --set field.grid_resolution=8 --set eval.resolution=8 "
               "--set eval.iou_resolution=16 --set output.snapshot_resolution=8 --set output.snapshot_every=1 "
               "--set output.checkpoint_every=1";
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpListsSubcommandsAndExitCodes) {
    const Outcome o = run("--help");
    EXPECT_EQ(o.code, 0);
    for (const char* s : {"distill", "mesh", "eval", "ablation", "render-snapshot", "Exit codes", "DUALSCORE_OUTPUT_ROOT"})
        EXPECT_NE(o.output.find(s), std::string::npos) << s;
}

TEST_F(CliTest, MissingSceneIsConfigError) {
    const Outcome o = run("distill --scene no_such.scene --steps 1");
    EXPECT_EQ(o.code, cli::kExitConfig);
    EXPECT_NE(o.output.find("no_such.scene"), std::string::npos) << o.output;
}

TEST_F(CliTest, BadOverrideIsConfigError) {
    const Outcome o = run("distill --scene '" + source_path("scenes/sphere.scene").string() + "' --set run.sede=1");
    EXPECT_EQ(o.code, cli::kExitConfig);
    EXPECT_NE(o.output.find("sede"), std::string::npos) << o.output;
    EXPECT_EQ(run("frobnicate").code, cli::kExitConfig);
}

TEST_F(CliTest, DistillWritesManifestAndEchoesLambda) {
    const Outcome o = run("distill --scene '" + source_path("scenes/sphere.scene").string() +
                          "' --out run1 --lambda-i 0 --seed 3 " + tiny_run_flags());
    ASSERT_EQ(o.code, 0) << o.output;
    const fs::path out = dir_ / "run1";
    const std::string echo = slurp(out / "config.resolved.ini");
    EXPECT_NE(echo.find("lambda_image = 0\n"), std::string::npos) << echo;
    EXPECT_NE(echo.find("seed = 3\n"), std::string::npos) << echo;
    const std::string manifest = slurp(out / "manifest.json");
    EXPECT_NE(manifest.find("\"status\": \"completed\""), std::string::npos) << manifest;
    EXPECT_TRUE(fs::exists(out / "checkpoints" / "final.dsrf"));
    EXPECT_TRUE(fs::exists(out / "metrics.json"));
    const std::string csv = slurp(out / "steps.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3) << csv;
    EXPECT_FALSE(fs::is_empty(out / "snapshots"));

    // The echoed config reproduces the run.
    const Outcome again = run("distill --config '" + (out / "config.resolved.ini").string() + "' --scene '" +
                              source_path("scenes/sphere.scene").string() + "' --out run2");
    ASSERT_EQ(again.code, 0) << again.output;
    EXPECT_EQ(slurp(out / "checkpoints" / "final.dsrf"), slurp(dir_ / "run2" / "checkpoints" / "final.dsrf"));
}

TEST_F(CliTest, OutputRootPrefixesRelativePaths) {
    fs::create_directories(dir_ / "root");
    const Outcome o = run("render-snapshot --scene '" + source_path("scenes/sphere.scene").string() +
                              "' --resolution 8 --out sub/snap.png",
                          "DUALSCORE_OUTPUT_ROOT='" + (dir_ / "root").string() + "'");
    ASSERT_EQ(o.code, 0) << o.output;
    EXPECT_TRUE(fs::exists(dir_ / "root" / "sub" / "snap.png"));
    EXPECT_FALSE(fs::exists(dir_ / "sub" / "snap.png"));
    EXPECT_EQ(cli::resolve_output("/abs/x.png"), fs::path("/abs/x.png"));
}

TEST_F(CliTest, RenderSnapshotNeedsExactlyOneSource) {
    EXPECT_EQ(run("render-snapshot --out x.png").code, cli::kExitConfig);
    const fs::path ckpt = dir_ / "f.dsrf";
    (void)write_structured_checkpoint(ckpt, 16);
    EXPECT_EQ(run("render-snapshot --checkpoint f.dsrf --scene '" + source_path("scenes/sphere.scene").string() +
                  "' --out x.png")
                  .code,
              cli::kExitConfig);
    const Outcome o = run("render-snapshot --checkpoint f.dsrf --front-view --resolution 8 --out front.png");
    EXPECT_EQ(o.code, 0) << o.output;
    const Image img = renderer::read_png(dir_ / "front.png");
    EXPECT_EQ(img.width, 8);
}

TEST_F(CliTest, MeshExitCodes) {
    const fs::path ckpt = dir_ / "f.dsrf";
    const double threshold = write_structured_checkpoint(ckpt, 32);
    const std::string base = "mesh --checkpoint f.dsrf --resolution 32 --image-resolution 16 --threshold " +
                             config::format_double(threshold);

    const Outcome ok = run(base + " --out m/mesh.obj");
    ASSERT_EQ(ok.code, 0) << ok.output;
    const mesh::TriangleMesh m = mesh::read_obj(dir_ / "m" / "mesh.obj");
    EXPECT_FALSE(m.empty());
    EXPECT_NO_THROW(m.validate());
    EXPECT_TRUE(fs::exists(dir_ / "m" / "mesh.png"));

    const Outcome capped = run(base + " --face-cap 1 --out c/mesh.obj");
    EXPECT_EQ(capped.code, cli::kExitFaceCap) << capped.output;
    EXPECT_FALSE(fs::exists(dir_ / "c" / "mesh.obj"));

    const Outcome empty = run("mesh --checkpoint f.dsrf --resolution 16 --threshold 1e9 --out e/mesh.obj");
    EXPECT_EQ(empty.code, cli::kExitEmptyMesh) << empty.output;
    EXPECT_NE(empty.output.find("threshold"), std::string::npos) << empty.output;
    EXPECT_FALSE(fs::exists(dir_ / "e" / "mesh.obj"));

    const Outcome missing = run("mesh --checkpoint nope.dsrf --out x.obj");
    EXPECT_EQ(missing.code, cli::kExitConfig);
    EXPECT_NE(missing.output.find("nope.dsrf"), std::string::npos) << missing.output;
}

TEST_F(CliTest, EvalReportsMetrics) {
    const fs::path ckpt = dir_ / "f.dsrf";
    (void)write_structured_checkpoint(ckpt, 16);
    const Outcome o = run("eval --checkpoint f.dsrf --scene '" + source_path("scenes/sphere.scene").string() +
                          "' --set eval.resolution=8 --set eval.iou_resolution=16 --out metrics.json");
    ASSERT_EQ(o.code, 0) << o.output;
    const std::string j = slurp(dir_ / "metrics.json");
    for (const char* key : {"mean_psnr", "density_iou", "cross_view_inconsistency"})
        EXPECT_NE(j.find(key), std::string::npos) << key;
}

TEST(Tiling, StitchesRowMajor) {
    const Image a(2, 1, 3, 0.1), b(2, 1, 3, 0.2), c(2, 1, 3, 0.3);
    const Image t = cli::tile_images({a, b, c}, 2);
    EXPECT_EQ(t.width, 4);
    EXPECT_EQ(t.height, 2);
    EXPECT_EQ(t.rgb(0, 0).x(), 0.1);
    EXPECT_EQ(t.rgb(2, 0).x(), 0.2);
    EXPECT_EQ(t.rgb(0, 1).x(), 0.3);
}

TEST(AblationTable, TargetMetricsAndDirection) {
    const scores::PathologyConfig hue{scores::Pathology::hue_drift, 0.2};
    const scores::PathologyConfig att{scores::Pathology::attenuation, 1.0};
    EXPECT_EQ(cli::AblationTable::target_metric(hue), "consistency");
    EXPECT_EQ(cli::AblationTable::target_metric(att), "iou");
    cli::AblationTable t;
    t.cells.push_back({hue, 0, 0.0, 20.0, 0.5, 0.05, {}});
    t.cells.push_back({hue, 0, 1.0, 19.0, 0.4, 0.04, {}});
    t.cells.push_back({att, 0, 0.0, 20.0, 0.5, 0.03, {}});
    t.cells.push_back({att, 0, 1.0, 21.0, 0.4, 0.02, {}});
    EXPECT_TRUE(t.improved(hue, 0));
    EXPECT_FALSE(t.improved(att, 0));
    EXPECT_NE(t.to_markdown().find("hue_drift"), std::string::npos);
}
