#include "diffgan/bundle.hpp"
#include "diffgan/config.hpp"
#include "diffgan/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace diffgan;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "diffgan_config_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

const char* kTinyConfig = R"(
[experiment]
scale = desk
seed = 3
[data]
kinds = global
timesteps = 400
dims = 2
[window]
size = 16
train_stride = 4
[denoiser]
depth = 1
base_width = 4
time_embedding = 4
groups = 2
epochs = 2
max_batches_per_epoch = 3
batch_size = 8
[generator]
hidden = 8
[discriminator]
hidden = 8
[gan]
epochs = 1
max_batches_per_epoch = 3
batch_size = 8
)";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DIFFGAN_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("default config is paper scale with the reference hyperparameters") {
  const ExperimentConfig c;
  CHECK(c.scale == Scale::paper);
  CHECK(c.timesteps == 50000);
  CHECK(c.steps == 100);
  CHECK(c.gan.lambda == doctest::Approx(0.7));
  CHECK(c.baseline_steps == std::vector<int>{20, 50, 80});
  CHECK(c.resolved_beta_start() == doctest::Approx(1e-3));
  CHECK(c.resolved_beta_end() == doctest::Approx(0.2));
  CHECK(c.resolved_detect_stride() == 32);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("serialize and parse round-trip") {
  ExperimentConfig c = parse_config(kTinyConfig).config;
  c.beta_start = 2e-3;
  c.kinds = {AnomalyKind::trend, AnomalyKind::seasonal};
  const ExperimentConfig back = parse_config(serialize_config(c)).config;
  CHECK(back == c);
  CHECK(serialize_config(back) == serialize_config(c));
}

TEST_CASE("scale presets yield to explicit keys") {
  const ParsedConfig p = parse_config("[experiment]\nscale = desk\n[gan]\nepochs = 3\n");
  CHECK(p.config.timesteps == 2000);
  CHECK(p.config.denoiser_train.max_epochs == 40);
  CHECK(p.config.gan.epochs == 3);
  CHECK(p.explicit_keys.count("gan.epochs") == 1);
  CHECK(parse_config("").config.timesteps == 50000);
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(parse_config("[gan]\nlamda = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[gan]\nlambda = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[gan]\nlambda = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[window]\nsize = 30\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[benchmark]\nbaseline_steps = 20, 500\n"), ConfigError);
}

TEST_CASE("bundle save and load round-trip") {
  const ExperimentConfig cfg = parse_config(kTinyConfig).config;
  const SeriesDataset ds = synthetic_dataset(cfg, AnomalyKind::global_point, 1);
  const PreparedDataset data = prepare_dataset(ds, cfg);
  const DenoiserTrainResult den = fit_denoiser(data, cfg, 1);
  const GanTrainResult gan = fit_gan(data, cfg, den.denoiser, 2);
  const ModelBundle b = make_bundle(cfg, data, den, &gan, 5);

  const auto path = scratch("bundle.dgan");
  save_bundle(b, path);
  const ModelBundle back = load_bundle(path);
  CHECK(back.denoiser.params == b.denoiser.params);
  REQUIRE(back.controller.has_value());
  CHECK(back.controller->generator == b.controller->generator);
  CHECK(back.controller->discriminator == b.controller->discriminator);
  CHECK(back.config() == cfg);
  CHECK(back.seed == 5);
  CHECK(back.normalization.min == b.normalization.min);

  const auto again = scratch("bundle2.dgan");
  save_bundle(back, again);
  CHECK(slurp(path) == slurp(again));
}

TEST_CASE("benchmark runs are reproducible for a fixed seed") {
  const ExperimentConfig cfg = parse_config(kTinyConfig).config;
  const auto a = run_benchmark(cfg);
  const auto b = run_benchmark(cfg);
  const auto pa = scratch("a.csv"), pb = scratch("b.csv");
  write_benchmark_csv(a, pa);
  write_benchmark_csv(b, pb);
  CHECK(slurp(pa) == slurp(pb));
  CHECK(a.table.size() == 4);
  CHECK(a.table.back().method == "DiffGAN");
  CHECK(a.table.back().mean_step.has_value());
}

TEST_CASE("command line exit codes") {
  const auto dir = scratch("cli");
  std::filesystem::create_directories(dir);
  const auto ini = dir / "tiny.ini";
  std::ofstream(ini) << kTinyConfig;
  const std::string common = " --config " + ini.string() + " --out " + dir.string();

  CHECK(run_cli("generate" + common) == 0);
  CHECK(std::filesystem::exists(dir / "global.csv"));
  CHECK(run_cli("train-denoiser --data " + (dir / "global.csv").string() + common) == 0);
  CHECK(run_cli("train-gan --data " + (dir / "global.csv").string() + " --denoiser " +
                (dir / "denoiser.dgan").string() + common) == 0);
  CHECK(run_cli("detect --bundle " + (dir / "bundle.dgan").string() + " --data " + (dir / "global.csv").string() +
                common) == 0);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(run_cli("detect --steps 0 --bundle " + (dir / "bundle.dgan").string() + " --data " +
                (dir / "global.csv").string() + " --mode diffusion" + common) == 2);
  CHECK(run_cli("detect --bundle " + (dir / "missing.dgan").string() + " --data " + (dir / "global.csv").string() +
                common) == 2);
  CHECK(run_cli("no-such-command") == 2);
  std::filesystem::remove_all(dir);
}
