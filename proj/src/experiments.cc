#include "rsfm/experiments.h"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include "rsfm/estimators.h"
#include "rsfm/numerics.h"

namespace rsfm {

const char* const kCsvHeader =
    "experiment,variant,port,sigma_px,outlier_frac,trial,rot_err_deg,trans_err,metric2,"
    "inlier_ratio,status";

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams per experiment kind.
constexpr std::uint64_t kAbsStream = 1;
constexpr std::uint64_t kRelStream = 2;
constexpr std::uint64_t kPipelineStream = 3;

struct Task {
  int camera = 0;
  int sigma = 0;
  int trial = 0;
};

std::vector<Task> Tasks(const ExperimentConfig& config) {
  std::vector<Task> tasks;
  for (int c = 0; c < static_cast<int>(config.cameras.size()); ++c) {
    for (int s = 0; s < static_cast<int>(config.sigmas.size()); ++s) {
      for (int t = 0; t < config.trials; ++t) tasks.push_back({c, s, t});
    }
  }
  return tasks;
}

// The scene depends on (camera, trial) only, so a sigma sweep is paired.
std::uint64_t SceneSeed(const ExperimentConfig& config, std::uint64_t stream, const Task& task) {
  return DeriveSeed(config.seed, stream * 1000 + static_cast<std::uint64_t>(task.camera),
                    static_cast<std::uint64_t>(task.trial));
}

// Keyed by the noise level itself so a trial does not depend on which other
// sigmas are in the sweep.
std::uint64_t SubSeed(std::uint64_t scene_seed, std::uint64_t purpose, double sigma) {
  return DeriveSeed(scene_seed, purpose, std::bit_cast<std::uint64_t>(sigma));
}

enum Purpose : std::uint64_t { kCorrupt = 1, kRansacA = 2, kRansacB = 3, kPriors = 4 };

ResultRow BaseRow(const ExperimentConfig& config, const Task& task, const char* variant) {
  ResultRow row;
  row.experiment = ExperimentKindName(config.kind);
  row.variant = variant;
  row.port = config.cameras[task.camera].label;
  row.sigma_px = config.sigmas[task.sigma];
  row.outlier_frac = config.outlier_fraction;
  row.trial = task.trial;
  return row;
}

ResultRow FailedRow(ResultRow row, const Error& error) {
  row.rot_err_deg = row.trans_err = row.metric2 = row.inlier_ratio = kNaN;
  row.status = ErrorCodeName(error.code);
  return row;
}

SceneSpec RandomSceneSpec(const ExperimentConfig& config, const RefractiveCameraModel& camera,
                          int views) {
  SceneSpec spec;
  spec.camera = camera;
  spec.layout = SceneLayout::kRandom;
  spec.num_views = views;
  spec.num_points = config.num_points;
  spec.depth_min = config.depth_min;
  spec.depth_max = config.depth_max;
  spec.cube_size = config.cube_size;
  spec.max_roll_deg = config.max_roll_deg;
  spec.min_baseline = config.min_baseline;
  return spec;
}

template <typename Fn>
Expected<ExperimentOutput> RunTrials(const ExperimentConfig& config, Fn&& trial) {
  auto valid = config.Validate();
  if (!valid) return valid.error();
  const std::vector<Task> tasks = Tasks(config);
  std::vector<std::vector<ResultRow>> slots(tasks.size());
  ParallelFor(static_cast<int>(tasks.size()), config.threads,
              [&](int i) { slots[i] = trial(tasks[i]); });
  ExperimentOutput out;
  for (auto& rows : slots) {
    for (auto& r : rows) out.rows.push_back(std::move(r));
  }
  return out;
}

double DirectionErrorDeg(const Vector3& a, const Vector3& b) {
  return numerics::RadToDeg(AngleBetween(a, b));
}

// Rotation, translation-direction and center-direction errors of b_from_a.
void FillRelativeErrors(const SE3Pose& estimate, const SE3Pose& truth, ResultRow* row) {
  row->rot_err_deg = numerics::RadToDeg(RotationAngle(estimate.rotation, truth.rotation));
  row->trans_err = DirectionErrorDeg(estimate.translation, truth.translation);
  row->metric2 = DirectionErrorDeg(estimate.Center(), truth.Center());
}

}  // namespace

std::string CsvField(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string FormatNumber(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

std::string FormatCsvRow(const ResultRow& row) {
  std::string out;
  out += CsvField(row.experiment) + ',' + CsvField(row.variant) + ',' + CsvField(row.port) + ',';
  out += FormatNumber(row.sigma_px) + ',' + FormatNumber(row.outlier_frac) + ',';
  out += std::to_string(row.trial) + ',';
  out += FormatNumber(row.rot_err_deg) + ',' + FormatNumber(row.trans_err) + ',';
  out += FormatNumber(row.metric2) + ',' + FormatNumber(row.inlier_ratio) + ',';
  out += CsvField(row.status);
  return out;
}

std::string FormatCsv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kCsvHeader) + '\n';
  for (const auto& row : rows) out += FormatCsvRow(row) + '\n';
  return out;
}

void ParallelFor(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

double AbsoluteThreshold(const ExperimentConfig& config, double sigma) {
  return std::max(config.abs_threshold_min, config.abs_threshold_sigmas * sigma);
}

double RelativeThreshold(const ExperimentConfig& config, const PinholeIntrinsics& intrinsics,
                         double sigma) {
  return std::max(config.rel_threshold_min,
                  config.rel_threshold_sigmas * sigma / intrinsics.MeanFocal());
}

Expected<ExperimentOutput> RunAbsPoseExperiment(const ExperimentConfig& config) {
  return RunTrials(config, [&](const Task& task) {
    const RefractiveCameraModel& camera = config.cameras[task.camera].model;
    const double sigma = config.sigmas[task.sigma];
    ResultRow refr = BaseRow(config, task, "refractive");
    ResultRow base = BaseRow(config, task, "baseline");

    const std::uint64_t seed = SceneSeed(config, kAbsStream, task);
    auto clean = GenerateScene(RandomSceneSpec(config, camera, 1), seed);
    if (!clean) return std::vector<ResultRow>{FailedRow(refr, clean.error()),
                                              FailedRow(base, clean.error())};
    const SyntheticScene scene =
        Corrupt(*clean, sigma, config.outlier_fraction, SubSeed(seed, kCorrupt, sigma));

    std::vector<Correspondence2D3D> refracted;
    std::vector<Correspondence2D3D> pinhole;
    for (const auto& obs : scene.observations[0]) {
      refracted.push_back({obs.pixel, scene.points[obs.point]});
      pinhole.push_back({obs.pinhole_pixel, scene.points[obs.point]});
    }
    RansacOptions ransac;
    ransac.threshold = AbsoluteThreshold(config, sigma);
    ransac.seed = SubSeed(seed, kRansacA, sigma);
    const SE3Pose& truth = scene.poses[0];
    const auto score = [&](const Expected<RansacReport<SE3Pose>>& est, ResultRow row) {
      if (!est) return FailedRow(row, est.error());
      row.rot_err_deg = numerics::RadToDeg(RotationAngle(est->model.rotation, truth.rotation));
      row.trans_err = 1000.0 * (est->model.translation - truth.translation).norm();
      row.metric2 = 1000.0 * (est->model.Center() - truth.Center()).norm();
      row.inlier_ratio = est->inlier_ratio;
      return row;
    };
    return std::vector<ResultRow>{
        score(EstimateAbsolutePoseRefractive(camera, refracted, ransac), refr),
        score(EstimateAbsolutePoseCentral(camera.intrinsics(), pinhole, ransac), base)};
  });
}

Expected<ExperimentOutput> RunRelPoseExperiment(const ExperimentConfig& config) {
  BestApproxPinholeCache cache;
  return RunTrials(config, [&](const Task& task) {
    const RefractiveCameraModel& camera = config.cameras[task.camera].model;
    const double sigma = config.sigmas[task.sigma];
    ResultRow approx = BaseRow(config, task, "bestapprox");
    ResultRow refined = BaseRow(config, task, "bestapprox_refined");
    ResultRow base = BaseRow(config, task, "baseline");
    const auto fail_all = [&](const Error& e) {
      return std::vector<ResultRow>{FailedRow(approx, e), FailedRow(refined, e),
                                    FailedRow(base, e)};
    };

    const std::uint64_t seed = SceneSeed(config, kRelStream, task);
    auto clean = GenerateScene(RandomSceneSpec(config, camera, 2), seed);
    if (!clean) return fail_all(clean.error());
    const SyntheticScene scene =
        Corrupt(*clean, sigma, config.outlier_fraction, SubSeed(seed, kCorrupt, sigma));

    std::map<int, const SceneObservation*> in_a;
    for (const auto& obs : scene.observations[0]) in_a[obs.point] = &obs;
    std::vector<std::pair<Vector2, Vector2>> refracted;
    std::vector<std::pair<Vector2, Vector2>> pinhole;
    for (const auto& obs : scene.observations[1]) {
      auto it = in_a.find(obs.point);
      if (it == in_a.end()) continue;
      refracted.emplace_back(it->second->pixel, obs.pixel);
      pinhole.emplace_back(it->second->pinhole_pixel, obs.pinhole_pixel);
    }
    const SE3Pose truth = scene.poses[1] * scene.poses[0].Inverse();

    auto fit = cache.Get(camera);
    if (!fit) return fail_all(fit.error());
    RelativePoseOptions options;
    options.ransac.threshold = RelativeThreshold(config, *fit, sigma);
    options.ransac.seed = SubSeed(seed, kRansacA, sigma);
    options.virtual_threshold = options.ransac.threshold;
    std::vector<ResultRow> rows;
    auto est = EstimateRelativePoseRefractive(camera, camera, refracted, options, &cache);
    if (!est) {
      rows.push_back(FailedRow(approx, est.error()));
      rows.push_back(FailedRow(refined, est.error()));
    } else {
      FillRelativeErrors(est->report.model, truth, &approx);
      approx.inlier_ratio = est->pinhole_inlier_ratio;
      rows.push_back(approx);
      const RescoredRefinement r = RefineRelativePoseRescored(
          camera, camera, refracted, est->report.model, est->virtual_inlier_mask,
          options.virtual_threshold, PipelineOptions().relative_refine_rounds, {});
      FillRelativeErrors(r.b_from_a, truth, &refined);
      refined.inlier_ratio = r.inlier_ratio;
      rows.push_back(refined);
    }

    RansacOptions central = options.ransac;
    central.threshold = RelativeThreshold(config, camera.intrinsics(), sigma);
    auto b = EstimateRelativePoseCentral(camera.intrinsics(), camera.intrinsics(), pinhole, central);
    if (!b) {
      rows.push_back(FailedRow(base, b.error()));
    } else {
      FillRelativeErrors(b->report.model, truth, &base);
      base.inlier_ratio = b->report.inlier_ratio;
      rows.push_back(base);
    }
    return rows;
  });
}

namespace {

RefractiveCameraModel PerturbedModel(const RefractiveCameraModel& truth, const PipelineConfig& p) {
  RefractiveCameraModel model = truth;
  if (model.port_type() == PortType::kFlat) {
    const auto& n = p.flat_normal_init;
    model.mutable_flat().normal = UnitVector3(Vector3(n[0], n[1], n[2]));
    model.mutable_flat().distance *= p.flat_distance_scale;
  } else if (model.port_type() == PortType::kDome) {
    const auto& c = p.dome_center_init;
    model.mutable_dome().center = Vector3(c[0], c[1], c[2]);
  }
  return model;
}

// Estimated refractive parameters expressed in ground-truth units.
std::vector<double> AlignedParams(const RefractiveCameraModel& model, double scale) {
  std::vector<double> p = model.RefractiveParams();
  if (model.port_type() == PortType::kFlat) p[3] *= scale;
  if (model.port_type() == PortType::kDome) {
    for (double& x : p) x *= scale;
  }
  return p;
}

}  // namespace

Expected<ExperimentOutput> RunPipelineExperiment(const ExperimentConfig& config) {
  auto valid = config.Validate();
  if (!valid) return valid.error();
  const PipelineConfig& pc = config.pipeline;
  const std::vector<Task> tasks = Tasks(config);
  std::vector<std::vector<PipelineRun>> slots(tasks.size());

  ParallelFor(static_cast<int>(tasks.size()), config.threads, [&](int index) {
    const Task& task = tasks[index];
    const NamedCamera& named = config.cameras[task.camera];
    const RefractiveCameraModel& camera = named.model;
    const double sigma = config.sigmas[task.sigma];
    const std::uint64_t seed = SceneSeed(config, kPipelineStream, task);

    std::vector<std::string> variants = {"uwpinhole", "rsfm_truth"};
    if (camera.IsRefractive()) {
      variants.push_back("rsfm_refined");
      variants.push_back("rsfm_refined_priors");
    }
    std::vector<PipelineRun>& runs = slots[index];
    for (const auto& v : variants) {
      PipelineRun run;
      run.variant = v;
      run.port = named.label;
      run.sigma_px = sigma;
      run.trial = task.trial;
      run.true_params = camera.RefractiveParams();
      runs.push_back(std::move(run));
    }
    const auto fail_all = [&](const Error& e) {
      for (auto& run : runs) {
        run.status = ErrorCodeName(e.code);
        run.log.push_back(e.message);
      }
    };

    SceneSpec spec;
    spec.camera = camera;
    spec.layout = SceneLayout::kLawnMower;
    spec.num_views = pc.views;
    spec.num_points = pc.points;
    spec.survey = pc;
    auto clean = GenerateScene(spec, seed);
    if (!clean) return fail_all(clean.error());
    const SyntheticScene scene =
        Corrupt(*clean, sigma, config.outlier_fraction, SubSeed(seed, kCorrupt, sigma));

    PinholeFitOptions fit_options;
    fit_options.depth = pc.altitude;
    auto fit = FitBestApproxPinhole(camera, fit_options);
    if (!fit) return fail_all(fit.error());

    std::vector<int> order(scene.poses.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (auto& run : runs) {
      RefractiveCameraModel model = camera;
      PipelineOptions options;
      options.ba_every = pc.ba_every;
      options.min_triangulation_angle_deg = pc.min_triangulation_angle_deg;
      options.max_reprojection_px = pc.max_reprojection_px;
      options.absolute.threshold = AbsoluteThreshold(config, sigma);
      options.absolute.seed = SubSeed(seed, kRansacA, sigma);
      options.relative.ransac.seed = SubSeed(seed, kRansacB, sigma);
      bool priors = false;
      if (run.variant == "uwpinhole") {
        model = camera.IsRefractive() ? RefractiveCameraModel(fit->intrinsics) : camera;
      } else if (run.variant != "rsfm_truth") {
        model = PerturbedModel(camera, pc);
        options.bundle.refine_refraction = true;
        priors = run.variant == "rsfm_refined_priors";
      }
      options.relative.ransac.threshold = RelativeThreshold(config, model.intrinsics(), sigma);
      options.relative.virtual_threshold = options.relative.ransac.threshold;

      ReconstructionState state = MakeReconstructionState(scene, model);
      if (priors) {
        std::mt19937_64 rng(SubSeed(seed, kPriors, sigma));
        std::normal_distribution<double> noise(0.0, pc.prior_sigma);
        for (size_t v = 0; v < state.views.size(); ++v) {
          const Vector3 n(noise(rng), noise(rng), noise(rng));
          state.views[v].prior = PositionPrior{scene.poses[v].Center() + n, pc.prior_weight};
        }
      }
      const auto start = std::chrono::steady_clock::now();
      auto report = RunIncremental(&state, order, options);
      const double runtime =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (!report) {
        run.status = ErrorCodeName(report.error().code);
        run.log.push_back(report.error().message);
        run.state = std::move(state);
        continue;
      }
      run.log = report->log;
      Similarity alignment;
      auto metrics = AlignAndScore(state, scene.poses, scene.points,
                                   priors ? AlignMode::kRigid : AlignMode::kSimilarity,
                                   &alignment);
      if (!metrics) {
        run.status = ErrorCodeName(metrics.error().code);
        run.log.push_back(metrics.error().message);
      } else {
        run.metrics = *metrics;
        run.metrics.runtime_s = runtime;
      }
      if (run.variant != "uwpinhole") {
        const bool refined = options.bundle.refine_refraction;
        run.estimated_params = AlignedParams(state.cameras[0], refined ? alignment.scale : 1.0);
      }
      run.state = std::move(state);
    }
  });

  ExperimentOutput out;
  for (size_t i = 0; i < tasks.size(); ++i) {
    for (auto& run : slots[i]) {
      ResultRow row = BaseRow(config, tasks[i], run.variant.c_str());
      if (run.status != "ok") {
        row = FailedRow(row, Error{ErrorCode::kOk, {}});
        row.status = run.status;
      } else {
        row.rot_err_deg = run.metrics.rotation_deg;
        row.trans_err = run.metrics.position_mm;
        row.metric2 = run.metrics.model_mm;
        row.inlier_ratio = run.metrics.inlier_ratio;
      }
      out.rows.push_back(row);
      out.pipeline_runs.push_back(std::move(run));
    }
  }
  return out;
}

Expected<ExperimentOutput> RunExperiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::kAbsPose:
      return RunAbsPoseExperiment(config);
    case ExperimentKind::kRelPose:
      return RunRelPoseExperiment(config);
    case ExperimentKind::kPipeline:
      return RunPipelineExperiment(config);
  }
  return {ErrorCode::kInvalidArgument, "unknown experiment kind"};
}

namespace {

double Median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (*std::max_element(v.begin(), v.begin() + mid) + upper);
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / v.size();
}

}  // namespace

std::vector<SummaryRow> Summarize(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, double>;
  std::vector<Key> order;
  std::map<Key, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    const Key key{r.experiment, r.variant, r.port, r.sigma_px};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    SummaryRow s;
    std::tie(s.experiment, s.variant, s.port, s.sigma_px) = key;
    std::vector<double> rot, trans, m2, ratio;
    for (const ResultRow* r : groups[key]) {
      ++s.trials;
      if (!r->ok()) {
        ++s.failures;
        continue;
      }
      rot.push_back(r->rot_err_deg);
      trans.push_back(r->trans_err);
      m2.push_back(r->metric2);
      ratio.push_back(r->inlier_ratio);
    }
    s.median_rot = Median(rot);
    s.mean_rot = Mean(rot);
    s.median_trans = Median(trans);
    s.mean_trans = Mean(trans);
    s.median_metric2 = Median(m2);
    s.mean_metric2 = Mean(m2);
    s.mean_inlier_ratio = Mean(ratio);
    out.push_back(s);
  }
  return out;
}

std::string FormatSummaryCsv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "experiment,variant,port,sigma_px,trials,failures,median_rot_err_deg,mean_rot_err_deg,"
         "median_trans_err,mean_trans_err,median_metric2,mean_metric2,mean_inlier_ratio\n";
  for (const auto& s : rows) {
    out << CsvField(s.experiment) << ',' << CsvField(s.variant) << ',' << CsvField(s.port) << ','
        << FormatNumber(s.sigma_px) << ',' << s.trials << ',' << s.failures << ','
        << FormatNumber(s.median_rot) << ',' << FormatNumber(s.mean_rot) << ','
        << FormatNumber(s.median_trans) << ',' << FormatNumber(s.mean_trans) << ','
        << FormatNumber(s.median_metric2) << ',' << FormatNumber(s.mean_metric2) << ','
        << FormatNumber(s.mean_inlier_ratio) << '\n';
  }
  return out.str();
}

const SummaryRow* FindSummary(const std::vector<SummaryRow>& rows, const std::string& variant,
                              const std::string& port, double sigma) {
  for (const auto& s : rows) {
    if (s.variant == variant && s.port == port && s.sigma_px == sigma) return &s;
  }
  return nullptr;
}

std::string FormatPipelineMetricsCsv(const std::vector<PipelineRun>& runs) {
  const auto params = [](const std::vector<double>& p) {
    std::string out;
    for (size_t i = 0; i < p.size(); ++i) out += (i ? " " : "") + FormatNumber(p[i]);
    return CsvField(out);
  };
  std::ostringstream out;
  out << "variant,port,sigma_px,trial,status,re_px,rot_err_deg,pos_err_mm,model_err_mm,"
         "inlier_ratio,registered,runtime_s,true_params,estimated_params\n";
  for (const auto& r : runs) {
    out << CsvField(r.variant) << ',' << CsvField(r.port) << ',' << FormatNumber(r.sigma_px)
        << ',' << r.trial << ',' << CsvField(r.status) << ','
        << FormatNumber(r.metrics.reprojection_px) << ',' << FormatNumber(r.metrics.rotation_deg)
        << ',' << FormatNumber(r.metrics.position_mm) << ','
        << FormatNumber(r.metrics.model_mm) << ',' << FormatNumber(r.metrics.inlier_ratio) << ','
        << r.metrics.registered << ',' << FormatNumber(r.metrics.runtime_s) << ','
        << params(r.true_params) << ',' << params(r.estimated_params) << '\n';
  }
  return out.str();
}

}  // namespace rsfm
