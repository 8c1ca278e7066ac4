// Command line front end for the synthetic experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rsfm/config.h"
#include "rsfm/experiments.h"
#include "rsfm/selftest.h"

namespace {

using namespace rsfm;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> threads;
  std::string out_dir = "rsfm_out";
  bool quiet = false;
};

const char* kColumnNotes = R"(# Columns of results.csv
# experiment    abs_pose | rel_pose | pipeline
# variant       estimator or pipeline variant
# port          camera label from the config
# sigma_px      pixel noise std per axis
# outlier_frac  fraction of points replaced by uniform in-image pixels
# trial         trial index within (port, sigma)
# rot_err_deg   rotation error (deg); pipeline: mean over views after alignment
# trans_err     abs_pose: |t - t_gt| (mm); rel_pose: translation direction error (deg);
#               pipeline: mean camera center error (mm)
# metric2       abs_pose: camera center error (mm); rel_pose: center direction error (deg);
#               pipeline: mean model point error (mm)
# inlier_ratio  reported inlier ratio; pipeline: triangulated tracks / all tracks
# status        ok or the error name of a failed trial (metrics are nan)
)";

bool WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) {
    std::cerr << "error: cannot write " << path.string() << "\n";
    return false;
  }
  return true;
}

std::string Manifest(const ExperimentConfig& config, const std::string& command,
                     const Flags& flags) {
  std::ostringstream os;
  os << "# rsfm " << command << "\n";
  os << "# config source: " << (flags.config_path.empty() ? "defaults" : flags.config_path)
     << "\n";
  os << kColumnNotes << "\n";
  os << FormatExperimentConfig(config);
  return os.str();
}

// File stem suffix identifying a pipeline run when several runs share a
// variant.
std::string RunSuffix(const PipelineRun& run, bool unique) {
  if (unique) return run.variant;
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "_s%g_t%d", run.sigma_px, run.trial);
  return run.variant + "_" + run.port + buffer;
}

bool WritePipelineExports(const std::filesystem::path& dir,
                          const std::vector<PipelineRun>& runs) {
  std::map<std::string, int> per_variant;
  for (const auto& run : runs) ++per_variant[run.variant];
  for (const auto& run : runs) {
    if (run.state.NumRegistered() == 0) continue;
    const std::string stem = RunSuffix(run, per_variant[run.variant] == 1);
    auto ply = WritePly((dir / ("cloud_" + stem + ".ply")).string(), run.state);
    auto poses = WritePoses((dir / ("poses_" + stem + ".txt")).string(), run.state);
    if (!ply || !poses) {
      std::cerr << "error: " << (!ply ? ply.error().message : poses.error().message) << "\n";
      return false;
    }
  }
  return true;
}

void PrintSummary(const std::vector<SummaryRow>& summary) {
  std::printf("%-10s %-20s %-14s %6s %6s %12s %12s %12s %8s\n", "experiment", "variant", "port",
              "sigma", "fail", "med_rot", "med_trans", "med_metric2", "inliers");
  for (const auto& s : summary) {
    std::printf("%-10s %-20s %-14s %6.2f %3d/%-3d %11.5g %12.5g %12.5g %8.4f\n",
                s.experiment.c_str(), s.variant.c_str(), s.port.c_str(), s.sigma_px, s.failures,
                s.trials, s.median_rot, s.median_trans, s.median_metric2, s.mean_inlier_ratio);
  }
}

int RunCommand(ExperimentKind kind, const std::string& command, const Flags& flags) {
  Expected<ExperimentConfig> config = flags.config_path.empty()
                                          ? Expected<ExperimentConfig>(DefaultExperimentConfig(kind))
                                          : LoadExperimentConfig(flags.config_path, kind);
  if (!config) {
    std::cerr << "config error: " << config.error().message << "\n";
    return kExitConfig;
  }
  if (flags.seed) config->seed = *flags.seed;
  if (flags.trials) config->trials = *flags.trials;
  if (flags.threads) config->threads = *flags.threads;
  if (auto valid = config->Validate(); !valid) {
    std::cerr << "config error: " << valid.error().message << "\n";
    return kExitConfig;
  }

  auto output = RunExperiment(*config);
  if (!output) {
    std::cerr << "error: " << output.error().message << "\n";
    return output.error().code == ErrorCode::kConfigError ? kExitConfig : kExitFailure;
  }

  const std::filesystem::path dir(flags.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    std::cerr << "error: cannot create " << dir.string() << ": " << ec.message() << "\n";
    return kExitFailure;
  }
  const std::vector<SummaryRow> summary = Summarize(output->rows);
  bool written = WriteFile(dir / "results.csv", FormatCsv(output->rows)) &&
                 WriteFile(dir / "summary.csv", FormatSummaryCsv(summary)) &&
                 WriteFile(dir / "manifest.txt", Manifest(*config, command, flags));
  if (kind == ExperimentKind::kPipeline) {
    written = written &&
              WriteFile(dir / "pipeline_metrics.csv",
                        FormatPipelineMetricsCsv(output->pipeline_runs)) &&
              WritePipelineExports(dir, output->pipeline_runs);
  }
  if (!written) return kExitFailure;

  int failures = 0;
  for (const auto& row : output->rows) failures += !row.ok();
  if (!flags.quiet) {
    PrintSummary(summary);
    std::printf("%zu rows written to %s\n", output->rows.size(), dir.string().c_str());
  }
  if (failures > 0) {
    std::cerr << failures << " failed trial rows (see the status column)\n";
    return kExitFailure;
  }
  return kExitOk;
}

int RunSelfTestCommand(const Flags& flags) {
  bool all = true;
  for (const auto& check : RunSelfTest()) {
    all = all && check.passed;
    if (!flags.quiet || !check.passed) {
      std::printf("%s %-28s %s\n", check.passed ? "PASS" : "FAIL", check.name.c_str(),
                  check.detail.c_str());
    }
  }
  return all ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Refractive structure-from-motion synthetic experiments"};
  app.require_subcommand(1);
  Flags flags;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "Experiment config file (TOML)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Master seed (overrides the config)");
    sub->add_option("--out", flags.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--trials", flags.trials, "Trials per port and sigma")
        ->check(CLI::PositiveNumber);
    sub->add_option("--threads", flags.threads, "Worker threads (0: all cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--quiet", flags.quiet, "Only report errors");
  };
  CLI::App* abs = app.add_subcommand("abs-pose", "Absolute pose: GP3P vs central P3P");
  CLI::App* rel = app.add_subcommand("rel-pose", "Relative pose: best-approx vs five-point");
  CLI::App* pipe = app.add_subcommand("pipeline", "Incremental reconstruction variants");
  CLI::App* self = app.add_subcommand("selftest", "Noise-free invariant suite");
  for (CLI::App* sub : {abs, rel, pipe}) add_common(sub);
  self->add_flag("--quiet", flags.quiet, "Only report failing checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (abs->parsed()) return RunCommand(ExperimentKind::kAbsPose, "abs-pose", flags);
  if (rel->parsed()) return RunCommand(ExperimentKind::kRelPose, "rel-pose", flags);
  if (pipe->parsed()) return RunCommand(ExperimentKind::kPipeline, "pipeline", flags);
  return RunSelfTestCommand(flags);
}
