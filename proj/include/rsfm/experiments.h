#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rsfm/config.h"
#include "rsfm/pipeline.h"
#include "rsfm/scene.h"

namespace rsfm {

// One CSV row. Column meanings per experiment:
//   abs_pose: trans_err = |t - t_gt| (mm), metric2 = camera-center error (mm)
//   rel_pose: trans_err = translation-direction error (deg),
//             metric2 = camera-center direction error (deg)
//   pipeline: rot_err_deg = mean rotation error, trans_err = mean center
//             error (mm), metric2 = model error (mm)
// Failed trials keep their identifying columns, carry NaN metrics and the
// error name in status.
struct ResultRow {
  std::string experiment;
  std::string variant;
  std::string port;
  double sigma_px = 0.0;
  double outlier_frac = 0.0;
  int trial = 0;
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
  double metric2 = 0.0;
  double inlier_ratio = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

extern const char* const kCsvHeader;

// RFC 4180 field quoting.
std::string CsvField(const std::string& field);
std::string FormatNumber(double value);
std::string FormatCsvRow(const ResultRow& row);
// Header plus rows, LF line endings.
std::string FormatCsv(const std::vector<ResultRow>& rows);

// Per-variant outcome of one pipeline run.
struct PipelineRun {
  std::string variant;
  std::string port;
  double sigma_px = 0.0;
  int trial = 0;
  std::string status = "ok";
  MetricsRow metrics;
  // Refractive parameters: flat (nx, ny, nz, d), dome (cx, cy, cz). The
  // estimate is expressed in ground-truth units via the alignment scale.
  std::vector<double> true_params;
  std::vector<double> estimated_params;
  ReconstructionState state;
  std::vector<std::string> log;
};

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  std::vector<PipelineRun> pipeline_runs;
};

// Calls fn(i) for i in [0, n) on `threads` workers (0: hardware
// concurrency). Results must be written to per-index slots.
void ParallelFor(int n, int threads, const std::function<void(int)>& fn);

// Inlier thresholds used by the experiments for a noise level.
double AbsoluteThreshold(const ExperimentConfig& config, double sigma);
double RelativeThreshold(const ExperimentConfig& config, const PinholeIntrinsics& intrinsics,
                         double sigma);

// GP3P on refracted data ("refractive") and central P3P on the pinhole
// projections of the same geometry ("baseline").
Expected<ExperimentOutput> RunAbsPoseExperiment(const ExperimentConfig& config);

// Best-approx pinhole relative pose without ("bestapprox") and with
// ("bestapprox_refined") virtual-epipolar refinement, and the five-point
// baseline on the pinhole projections ("baseline"). Inlier ratios: RANSAC
// ratio for bestapprox and baseline, virtual ratio for the refined row.
Expected<ExperimentOutput> RunRelPoseExperiment(const ExperimentConfig& config);

// Survey scene reconstructed four ways: "uwpinhole" (best-approx pinhole fit
// at the survey altitude on refracted data), "rsfm_truth" (true refractive
// model), "rsfm_refined" (perturbed model, refined) and
// "rsfm_refined_priors" (the same with noisy position priors).
Expected<ExperimentOutput> RunPipelineExperiment(const ExperimentConfig& config);

Expected<ExperimentOutput> RunExperiment(const ExperimentConfig& config);

// Median and mean of each metric per (experiment, variant, port, sigma) over
// successful trials.
struct SummaryRow {
  std::string experiment;
  std::string variant;
  std::string port;
  double sigma_px = 0.0;
  int trials = 0;
  int failures = 0;
  double median_rot = 0.0;
  double mean_rot = 0.0;
  double median_trans = 0.0;
  double mean_trans = 0.0;
  double median_metric2 = 0.0;
  double mean_metric2 = 0.0;
  double mean_inlier_ratio = 0.0;
};

std::vector<SummaryRow> Summarize(const std::vector<ResultRow>& rows);
std::string FormatSummaryCsv(const std::vector<SummaryRow>& rows);

// Finds a summary row; nullptr when absent.
const SummaryRow* FindSummary(const std::vector<SummaryRow>& rows, const std::string& variant,
                              const std::string& port, double sigma);

// RE, runtime and the refractive parameter table of pipeline runs.
std::string FormatPipelineMetricsCsv(const std::vector<PipelineRun>& runs);

}  // namespace rsfm
