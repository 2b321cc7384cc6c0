// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "oracles.hpp"

#include "diffgan/config.hpp"
#include "diffgan/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace diffgan;
using namespace diffgan::testing;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << fmt::format("{} criterion {:>2}: {} ({})", pass ? "PASS" : "FAIL", id, what, detail) << std::endl;
}

ExperimentConfig desk_config(std::uint64_t seed) {
  ExperimentConfig cfg = parse_config("[experiment]\nscale = desk\n").config;
  cfg.seed = seed;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

/// Identical text, or the same cells with numeric cells within `tol`.
bool csv_match(const std::filesystem::path& a, const std::filesystem::path& b, double tol, double& worst) {
  worst = 0.0;
  if (slurp(a) == slurp(b)) return true;
  const auto ra = read_csv(a), rb = read_csv(b);
  if (ra.size() != rb.size()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].size() != rb[i].size()) return false;
    for (std::size_t j = 0; j < ra[i].size(); ++j) {
      if (ra[i][j] == rb[i][j]) continue;
      try {
        worst = std::max(worst, std::abs(std::stod(ra[i][j]) - std::stod(rb[i][j])));
      } catch (const std::exception&) {
        return false;
      }
    }
  }
  return worst < tol;
}

void benchmark_criteria(const std::filesystem::path& out, std::uint64_t seed) {
  ExperimentConfig cfg = desk_config(seed);
  cfg.repeats = 3;
  BenchmarkOptions opts;
  opts.curve = true;
  opts.curve_datasets = {to_string(AnomalyKind::global_point)};
  std::ofstream log(out / "benchmark_log.txt");
  opts.log = &log;
  const auto t0 = std::chrono::steady_clock::now();
  const BenchmarkResult r = run_benchmark(cfg, opts);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  write_benchmark_csv(r, out / "benchmark.csv");
  write_runs_csv(r, out / "runs.csv");
  write_curve_csv(r.curve, out / "curve.csv");
  std::ofstream(out / "benchmark_table.txt") << format_benchmark_table(r);

  // 1: best intermediate M beats M = N on the global-point sweep.
  double at_n = 0.0, best_mid = -1.0;
  int best_m = 0;
  for (const CurveRow& c : r.curve) {
    if (c.steps == cfg.steps) {
      at_n = c.f1;
    } else if (c.f1 > best_mid) {
      best_mid = c.f1;
      best_m = c.steps;
    }
  }
  report(1, best_mid - at_n >= 0.05, "step sensitivity on global points, best intermediate M - M=N >= 0.05",
         fmt::format("best M={} F1 {:.4f}, M={} F1 {:.4f}, {:.1f} min for the whole benchmark", best_m, best_mid,
                     cfg.steps, at_n, minutes));

  // 2 and 3: per-dataset comparison and controller step range.
  std::map<std::string, double> diffgan_f1, best_baseline, mean_step;
  for (const BenchmarkRow& row : r.table) {
    if (row.method == "DiffGAN") {
      diffgan_f1[row.dataset] = row.f1;
      mean_step[row.dataset] = row.mean_step.value_or(-1.0);
    } else {
      best_baseline[row.dataset] = std::max(best_baseline[row.dataset], row.f1);
    }
  }
  int wins = 0;
  std::string detail2, detail3;
  bool steps_ok = true;
  const double lo = 0.02 * cfg.steps, hi = 0.98 * cfg.steps;
  for (const auto& [name, f1] : diffgan_f1) {
    const bool win = f1 >= best_baseline[name] - 0.02;
    wins += win;
    detail2 += fmt::format("{}{} {:.3f} vs {:.3f}", detail2.empty() ? "" : "; ", name, f1, best_baseline[name]);
    const double s = mean_step[name];
    steps_ok = steps_ok && s >= lo && s <= hi;
    detail3 += fmt::format("{}{} {:.2f}", detail3.empty() ? "" : "; ", name, s);
  }
  report(2, wins >= 3, "DiffGAN F1 >= best Diffusion-M F1 - 0.02 on >= 3 of 5 datasets",
         fmt::format("{} of {}: {}", wins, diffgan_f1.size(), detail2));
  report(3, steps_ok && !mean_step.empty(), fmt::format("mean controller step in [{}, {}]", lo, hi), detail3);
}

void gradient_criterion(std::uint64_t seed) {
  constexpr int trials = 100;
  double worst = 0.0;
  std::string worst_name;
  const auto note = [&](const std::string& name, const GradCheck& g) {
    if (g.max_rel >= worst) {
      worst = g.max_rel;
      worst_name = name;
    }
  };
  for (const std::string& kind : gradient_kinds()) note(kind, gradient_trials(kind, trials, seed));
  note("denoiser loss", denoiser_loss_trials(trials, seed + 1));
  note("generator loss", generator_loss_trials(trials, seed + 2));
  note("discriminator loss", discriminator_loss_trials(trials, seed + 3));
  report(4, worst < 1e-3, fmt::format("finite-difference gradients, {} trials per kind, rel error < 1e-3", trials),
         fmt::format("worst {:.2e} in {}", worst, worst_name));
}

void moments_criterion(const NoiseSchedule& s, std::uint64_t seed) {
  bool ok = true;
  std::string detail;
  for (int n : {1, s.steps / 2, s.steps}) {
    const MomentCheck m = forward_moments(s, n, 0.8, 100000, seed + static_cast<std::uint64_t>(n));
    ok = ok && m.ok();
    detail += fmt::format("{}n={} z {:.2f} var rel {:.4f}", detail.empty() ? "" : "; ", n, m.mean_z(), m.variance_rel());
  }
  report(5, ok, "forward-process mean within 3 SE and variance within 2%, 1e5 draws", detail);
}

void inversion_criterion(const NoiseSchedule& s, std::uint64_t seed) {
  const double single = oracle_inversion_error(s, DenoiseVariant::single, seed);
  const double ddim = oracle_inversion_error(s, DenoiseVariant::ddim, seed);
  const double ddpm = oracle_inversion_error(s, DenoiseVariant::ddpm, seed);
  report(6, single < 1e-4 && ddim < 1e-4 && ddpm < 1e-3,
         "oracle inversion: single and DDIM < 1e-4, composed DDPM (z = 0) < 1e-3",
         fmt::format("single {:.2e}, ddim {:.2e}, ddpm {:.2e}", single, ddim, ddpm));
}

void map_step_criterion(std::uint64_t seed) {
  const PropertyCount r = map_step_properties(10000, seed);
  const StepMapper m = StepMapper::from_schedule(schedule_from_betas({0.1, 0.2}, ScheduleOptions{1.0}));
  const bool example = map_step(0.05, m) == 0 && map_step(0.15, m) == 1 && map_step(0.3, m) == 2;
  report(7, r.violations == 0 && example, "map_step range and monotonicity on 1e4 cases plus the N=2 example",
         fmt::format("{} cases, {} violations{}, N=2 example {}", r.cases, r.violations,
                     r.first_violation.empty() ? "" : " (" + r.first_violation + ")", example ? "exact" : "wrong"));
}

void metrics_criterion(std::uint64_t seed) {
  const PropertyCount pairs = metric_pairs(8);
  const PropertyCount search = threshold_search(1000, seed);
  report(8, pairs.cases == 65536 && pairs.violations == 0 && search.violations == 0,
         "evaluate() vs brute force on all length-8 pairs, threshold search vs exhaustive scan",
         fmt::format("{} pairs / {} violations, {} threshold sets / {} violations", pairs.cases, pairs.violations,
                     search.cases, search.violations));
}

void determinism_criterion(const std::filesystem::path& out, std::uint64_t seed, int denoiser_epochs, int gan_epochs) {
  ExperimentConfig cfg = desk_config(seed);
  if (denoiser_epochs > 0) cfg.denoiser_train.max_epochs = denoiser_epochs;
  if (gan_epochs > 0) cfg.gan.epochs = gan_epochs;
  const auto a = out / "determinism_a.csv", b = out / "determinism_b.csv";
  write_benchmark_csv(run_benchmark(cfg), a);
  write_benchmark_csv(run_benchmark(cfg), b);
  double worst = 0.0;
  const bool ok = csv_match(a, b, 1e-10, worst);
  report(9, ok, "two identical-seed desk-scale runs give matching benchmark CSVs",
         fmt::format("{} denoiser / {} GAN epochs, {}", cfg.denoiser_train.max_epochs, cfg.gan.epochs,
                     slurp(a) == slurp(b) ? "byte identical" : fmt::format("max difference {:.2e}", worst)));
}

void data_criterion(std::uint64_t seed) {
  const PropertyCount r = data_properties(100, seed);
  report(10, r.inputs >= 100 && r.violations == 0,
         "windows, normalization, split and anomaly counts on 100 random configurations",
         fmt::format("{} configurations ({} infeasible redrawn), {} checks, {} violations{}", r.inputs, r.rejected,
                     r.cases, r.violations,
                     r.first_violation.empty() ? "" : " (" + r.first_violation + ")"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DiffGAN acceptance criteria"};
  std::filesystem::path out = "acceptance_out";
  std::uint64_t seed = 0;
  std::vector<int> only;
  int det_denoiser_epochs = 0, det_gan_epochs = 0;  // 0: the desk preset
  app.add_option("--out", out, "directory for benchmark CSVs and logs");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--only", only, "run only these criteria")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_option("--determinism-denoiser-epochs", det_denoiser_epochs, "shorter training for the determinism check")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--determinism-gan-epochs", det_gan_epochs)->check(CLI::NonNegativeNumber);
  CLI11_PARSE(app, argc, argv);

  const auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  std::filesystem::create_directories(out);
  const NoiseSchedule schedule = make_schedule(desk_config(seed));

  try {
    if (want(4)) gradient_criterion(seed + 100);
    if (want(5)) moments_criterion(schedule, seed + 200);
    if (want(6)) inversion_criterion(schedule, seed + 300);
    if (want(7)) map_step_criterion(seed + 400);
    if (want(8)) metrics_criterion(seed + 500);
    if (want(10)) data_criterion(seed + 600);
    if (want(9)) determinism_criterion(out, seed, det_denoiser_epochs, det_gan_epochs);
    if (want(1) || want(2) || want(3)) benchmark_criteria(out, seed);
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
