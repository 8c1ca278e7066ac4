#include "rsfm/config.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace rsfm {
namespace {

Error ConfigError(std::string message) { return Error{ErrorCode::kConfigError, std::move(message)}; }

class TableReader {
 public:
  TableReader(const toml::table& table, std::string prefix, std::string source)
      : table_(table), prefix_(std::move(prefix)), source_(std::move(source)) {}

  std::string Where(const toml::node& node, const std::string& key) const {
    std::ostringstream os;
    os << source_ << ":" << node.source().begin.line << ": key '" << prefix_ << key << "'";
    return os.str();
  }

  Expected<bool> Number(const std::string& key, double* out) {
    seen_.insert(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return false;
    if (auto v = node->value<double>()) {
      *out = *v;
      return true;
    }
    return ConfigError(Where(*node, key) + " expects a number");
  }

  Expected<bool> Integer(const std::string& key, std::int64_t* out) {
    seen_.insert(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return false;
    if (auto v = node->value_exact<std::int64_t>()) {
      *out = *v;
      return true;
    }
    return ConfigError(Where(*node, key) + " expects an integer");
  }

  Expected<bool> Int(const std::string& key, int* out) {
    std::int64_t v = *out;
    auto r = Integer(key, &v);
    if (r && *r) *out = static_cast<int>(v);
    return r;
  }

  Expected<bool> String(const std::string& key, std::string* out) {
    seen_.insert(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return false;
    if (auto v = node->value<std::string>()) {
      *out = *v;
      return true;
    }
    return ConfigError(Where(*node, key) + " expects a string");
  }

  Expected<bool> Numbers(const std::string& key, std::vector<double>* out, int size = -1) {
    seen_.insert(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return false;
    const toml::array* arr = node->as_array();
    if (arr == nullptr) return ConfigError(Where(*node, key) + " expects an array of numbers");
    std::vector<double> values;
    for (const auto& elem : *arr) {
      auto v = elem.value<double>();
      if (!v) return ConfigError(Where(*node, key) + " expects an array of numbers");
      values.push_back(*v);
    }
    if (size >= 0 && static_cast<int>(values.size()) != size) {
      return ConfigError(Where(*node, key) + " expects " + std::to_string(size) + " numbers");
    }
    *out = values;
    return true;
  }

  Error Missing(const std::string& key) const {
    return ConfigError(source_ + ": missing key '" + prefix_ + key + "'");
  }

  // First key of the table that was never read.
  Expected<bool> CheckUnknown() const {
    for (const auto& [key, node] : table_) {
      const std::string name(key.str());
      if (!seen_.count(name)) return ConfigError(Where(node, name) + " is not recognized");
    }
    return true;
  }

 private:
  const toml::table& table_;
  std::string prefix_;
  std::string source_;
  std::set<std::string> seen_;
};

#define RSFM_TRY(expr)              \
  do {                              \
    auto _r = (expr);               \
    if (!_r) return _r.error();     \
  } while (false)

Expected<RefractiveCameraModel> ParseCamera(const toml::table& table, const std::string& label,
                                            const std::string& source) {
  TableReader reader(table, "camera." + label + ".", source);
  std::string type;
  auto has_type = reader.String("type", &type);
  if (!has_type) return has_type.error();
  if (!*has_type) return reader.Missing("type");

  PinholeIntrinsics k = DefaultIntrinsics();
  RSFM_TRY(reader.Number("fx", &k.fx));
  RSFM_TRY(reader.Number("fy", &k.fy));
  RSFM_TRY(reader.Number("cx", &k.cx));
  RSFM_TRY(reader.Number("cy", &k.cy));
  RSFM_TRY(reader.Int("width", &k.width));
  RSFM_TRY(reader.Int("height", &k.height));
  RSFM_TRY(reader.Number("k1", &k.k1));
  RSFM_TRY(reader.Number("k2", &k.k2));
  MediaIndices indices;
  RSFM_TRY(reader.Number("n_air", &indices.air));
  RSFM_TRY(reader.Number("n_glass", &indices.glass));
  RSFM_TRY(reader.Number("n_water", &indices.water));

  RefractiveCameraModel model;
  if (type == "pinhole") {
    model = RefractiveCameraModel(k);
  } else if (type == "flat") {
    FlatPortParams flat;
    flat.indices = indices;
    std::vector<double> normal;
    auto has_normal = reader.Numbers("normal", &normal, 3);
    if (!has_normal) return has_normal.error();
    if (!*has_normal) return reader.Missing("normal");
    if (Vector3(normal[0], normal[1], normal[2]).norm() == 0.0) {
      return ConfigError(source + ": key 'camera." + label + ".normal' must be non-zero");
    }
    flat.normal = UnitVector3(normal[0], normal[1], normal[2]);
    auto has_dist = reader.Number("dist", &flat.distance);
    if (!has_dist) return has_dist.error();
    if (!*has_dist) return reader.Missing("dist");
    RSFM_TRY(reader.Number("thickness", &flat.thickness));
    model = RefractiveCameraModel(k, flat);
  } else if (type == "dome") {
    DomePortParams dome;
    dome.indices = indices;
    std::vector<double> center;
    auto has_center = reader.Numbers("center", &center, 3);
    if (!has_center) return has_center.error();
    if (!*has_center) return reader.Missing("center");
    dome.center = Vector3(center[0], center[1], center[2]);
    RSFM_TRY(reader.Number("radius", &dome.radius));
    RSFM_TRY(reader.Number("thickness", &dome.thickness));
    model = RefractiveCameraModel(k, dome);
  } else {
    return ConfigError(source + ": key 'camera." + label +
                       ".type' must be \"flat\", \"dome\" or \"pinhole\"");
  }
  RSFM_TRY(reader.CheckUnknown());
  if (!model.IsValid()) {
    return ConfigError(source + ": camera '" + label + "' has invalid parameters");
  }
  return model;
}

// Shortest text that parses back to the same double.
std::string FormatNumber(double v) {
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), v);
  std::string s(buffer, result.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string FormatArray(const std::vector<double>& values) {
  std::string s = "[";
  for (size_t i = 0; i < values.size(); ++i) {
    if (i > 0) s += ", ";
    s += FormatNumber(values[i]);
  }
  return s + "]";
}

void FormatCamera(std::ostream& os, const NamedCamera& cam) {
  const auto& k = cam.model.intrinsics();
  os << "\n[camera." << cam.label << "]\n";
  os << "type = \"" << PortTypeName(cam.model.port_type()) << "\"\n";
  os << "fx = " << FormatNumber(k.fx) << "\nfy = " << FormatNumber(k.fy)
     << "\ncx = " << FormatNumber(k.cx) << "\ncy = " << FormatNumber(k.cy)
     << "\nwidth = " << k.width << "\nheight = " << k.height << "\nk1 = " << FormatNumber(k.k1)
     << "\nk2 = " << FormatNumber(k.k2) << "\n";
  const MediaIndices* indices = nullptr;
  if (cam.model.port_type() == PortType::kFlat) {
    const auto& f = cam.model.flat();
    os << "normal = " << FormatArray({f.normal.x(), f.normal.y(), f.normal.z()}) << "\n";
    os << "dist = " << FormatNumber(f.distance) << "\nthickness = " << FormatNumber(f.thickness)
       << "\n";
    indices = &f.indices;
  } else if (cam.model.port_type() == PortType::kDome) {
    const auto& d = cam.model.dome();
    os << "center = " << FormatArray({d.center.x(), d.center.y(), d.center.z()}) << "\n";
    os << "radius = " << FormatNumber(d.radius) << "\nthickness = " << FormatNumber(d.thickness)
       << "\n";
    indices = &d.indices;
  }
  if (indices != nullptr) {
    os << "n_air = " << FormatNumber(indices->air) << "\nn_glass = " << FormatNumber(indices->glass)
       << "\nn_water = " << FormatNumber(indices->water) << "\n";
  }
}

}  // namespace

const char* ExperimentKindName(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kAbsPose: return "abs_pose";
    case ExperimentKind::kRelPose: return "rel_pose";
    case ExperimentKind::kPipeline: return "pipeline";
  }
  return "unknown";
}

PinholeIntrinsics DefaultIntrinsics() { return PinholeIntrinsics::FromFov(73.0, 1920, 1280); }

ExperimentConfig DefaultExperimentConfig(ExperimentKind kind) {
  ExperimentConfig config;
  config.kind = kind;
  const PinholeIntrinsics k = DefaultIntrinsics();
  if (kind == ExperimentKind::kPipeline) {
    FlatPortParams tilt;
    tilt.normal = UnitVector3(0.166, 0.148, 0.975);
    tilt.distance = 0.05;
    config.cameras = {{"flat_tilt", RefractiveCameraModel(k, tilt)}};
    config.sigmas = {0.5};
    config.trials = 1;
    config.outlier_fraction = 0.0;
    return config;
  }
  FlatPortParams flat;
  flat.normal = UnitVector3(0.0, 0.0, 1.0);
  flat.distance = 0.01;
  DomePortParams dome;
  dome.center = Vector3(0.0, 0.0, 0.003);
  DomePortParams centered;
  config.cameras = {{"flat", RefractiveCameraModel(k, flat)},
                    {"dome", RefractiveCameraModel(k, dome)},
                    {"dome_centered", RefractiveCameraModel(k, centered)}};
  for (int i = 0; i <= 8; ++i) config.sigmas.push_back(0.25 * i);
  return config;
}

Expected<bool> ExperimentConfig::Validate() const {
  auto fail = [](const std::string& m) { return Expected<bool>(ConfigError(m)); };
  if (cameras.empty()) return fail("no cameras configured");
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    return fail("key 'experiment.outlier_fraction' must lie in [0, 1]");
  }
  if (sigmas.empty()) return fail("key 'experiment.sigmas' must not be empty");
  for (double s : sigmas) {
    if (!(s >= 0.0)) return fail("key 'experiment.sigmas' must be non-negative");
  }
  if (num_points < 1) return fail("key 'experiment.points' must be at least 1");
  if (trials < 1) return fail("key 'experiment.trials' must be at least 1");
  if (!(depth_min > 0.0 && depth_max > depth_min)) {
    return fail("keys 'experiment.depth_min' and 'experiment.depth_max' must satisfy 0 < min < max");
  }
  if (threads < 0) return fail("key 'experiment.threads' must be non-negative");
  if (kind == ExperimentKind::kPipeline) {
    if (pipeline.views < 3) return fail("key 'pipeline.views' must be at least 3");
    if (pipeline.rows < 1) return fail("key 'pipeline.rows' must be at least 1");
    if (pipeline.points < 1) return fail("key 'pipeline.points' must be at least 1");
    if (pipeline.ba_every < 1) return fail("key 'pipeline.ba_every' must be at least 1");
  }
  return true;
}

Expected<ExperimentConfig> ParseExperimentConfig(const std::string& text, ExperimentKind kind,
                                                 const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    return ConfigError(os.str());
  }

  ExperimentConfig config = DefaultExperimentConfig(kind);
  for (const auto& [key, node] : root) {
    const std::string name(key.str());
    if (name != "experiment" && name != "camera" && name != "pipeline") {
      return ConfigError(source + ":" + std::to_string(node.source().begin.line) + ": key '" +
                         name + "' is not recognized");
    }
    if (!node.is_table()) {
      return ConfigError(source + ":" + std::to_string(node.source().begin.line) + ": key '" +
                         name + "' must be a table");
    }
  }

  const toml::table* exp = root["experiment"].as_table();
  if (exp == nullptr) return ConfigError(source + ": missing key 'experiment.kind'");
  TableReader reader(*exp, "experiment.", source);
  std::string kind_name;
  auto has_kind = reader.String("kind", &kind_name);
  if (!has_kind) return has_kind.error();
  if (!*has_kind) return reader.Missing("kind");
  if (kind_name != ExperimentKindName(kind)) {
    return ConfigError(source + ": key 'experiment.kind' is \"" + kind_name + "\" but the command runs \"" +
                       ExperimentKindName(kind) + "\"");
  }
  RSFM_TRY(reader.Int("points", &config.num_points));
  RSFM_TRY(reader.Number("outlier_fraction", &config.outlier_fraction));
  RSFM_TRY(reader.Numbers("sigmas", &config.sigmas));
  RSFM_TRY(reader.Int("trials", &config.trials));
  std::int64_t seed = static_cast<std::int64_t>(config.seed);
  RSFM_TRY(reader.Integer("seed", &seed));
  config.seed = static_cast<std::uint64_t>(seed);
  RSFM_TRY(reader.Number("depth_min", &config.depth_min));
  RSFM_TRY(reader.Number("depth_max", &config.depth_max));
  RSFM_TRY(reader.Number("cube_size", &config.cube_size));
  RSFM_TRY(reader.Number("max_roll_deg", &config.max_roll_deg));
  RSFM_TRY(reader.Number("min_baseline", &config.min_baseline));
  RSFM_TRY(reader.Number("abs_threshold_min", &config.abs_threshold_min));
  RSFM_TRY(reader.Number("abs_threshold_sigmas", &config.abs_threshold_sigmas));
  RSFM_TRY(reader.Number("rel_threshold_min", &config.rel_threshold_min));
  RSFM_TRY(reader.Number("rel_threshold_sigmas", &config.rel_threshold_sigmas));
  RSFM_TRY(reader.Int("threads", &config.threads));
  RSFM_TRY(reader.CheckUnknown());

  if (const toml::table* pipe = root["pipeline"].as_table()) {
    TableReader p(*pipe, "pipeline.", source);
    PipelineConfig& pc = config.pipeline;
    RSFM_TRY(p.Int("views", &pc.views));
    RSFM_TRY(p.Int("rows", &pc.rows));
    RSFM_TRY(p.Number("spacing", &pc.spacing));
    RSFM_TRY(p.Number("row_spacing", &pc.row_spacing));
    RSFM_TRY(p.Number("altitude", &pc.altitude));
    RSFM_TRY(p.Number("terrain_amplitude", &pc.terrain_amplitude));
    RSFM_TRY(p.Number("jitter_deg", &pc.jitter_deg));
    RSFM_TRY(p.Int("points", &pc.points));
    RSFM_TRY(p.Int("ba_every", &pc.ba_every));
    RSFM_TRY(p.Number("min_triangulation_angle_deg", &pc.min_triangulation_angle_deg));
    RSFM_TRY(p.Number("max_reprojection_px", &pc.max_reprojection_px));
    RSFM_TRY(p.Numbers("flat_normal_init", &pc.flat_normal_init, 3));
    RSFM_TRY(p.Number("flat_distance_scale", &pc.flat_distance_scale));
    RSFM_TRY(p.Numbers("dome_center_init", &pc.dome_center_init, 3));
    RSFM_TRY(p.Number("prior_sigma", &pc.prior_sigma));
    RSFM_TRY(p.Number("prior_weight", &pc.prior_weight));
    RSFM_TRY(p.CheckUnknown());
  }

  if (const toml::table* cams = root["camera"].as_table()) {
    config.cameras.clear();
    for (const auto& [key, node] : *cams) {
      const std::string label(key.str());
      const toml::table* table = node.as_table();
      if (table == nullptr) {
        return ConfigError(source + ":" + std::to_string(node.source().begin.line) +
                           ": key 'camera." + label + "' must be a table");
      }
      auto model = ParseCamera(*table, label, source);
      if (!model) return model.error();
      config.cameras.push_back({label, *model});
    }
  }

  auto valid = config.Validate();
  if (!valid) return ConfigError(source + ": " + valid.error().message);
  return config;
}

Expected<ExperimentConfig> LoadExperimentConfig(const std::string& path, ExperimentKind kind) {
  std::ifstream in(path);
  if (!in) return ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseExperimentConfig(buffer.str(), kind, path);
}

std::string FormatExperimentConfig(const ExperimentConfig& config) {
  std::ostringstream os;
  os << "[experiment]\n";
  os << "kind = \"" << ExperimentKindName(config.kind) << "\"\n";
  os << "points = " << config.num_points << "\n";
  os << "outlier_fraction = " << FormatNumber(config.outlier_fraction) << "\n";
  os << "sigmas = " << FormatArray(config.sigmas) << "\n";
  os << "trials = " << config.trials << "\n";
  os << "seed = " << static_cast<std::int64_t>(config.seed) << "\n";
  os << "depth_min = " << FormatNumber(config.depth_min) << "\n";
  os << "depth_max = " << FormatNumber(config.depth_max) << "\n";
  os << "cube_size = " << FormatNumber(config.cube_size) << "\n";
  os << "max_roll_deg = " << FormatNumber(config.max_roll_deg) << "\n";
  os << "min_baseline = " << FormatNumber(config.min_baseline) << "\n";
  os << "abs_threshold_min = " << FormatNumber(config.abs_threshold_min) << "\n";
  os << "abs_threshold_sigmas = " << FormatNumber(config.abs_threshold_sigmas) << "\n";
  os << "rel_threshold_min = " << FormatNumber(config.rel_threshold_min) << "\n";
  os << "rel_threshold_sigmas = " << FormatNumber(config.rel_threshold_sigmas) << "\n";
  os << "threads = " << config.threads << "\n";
  if (config.kind == ExperimentKind::kPipeline) {
    const PipelineConfig& p = config.pipeline;
    os << "\n[pipeline]\n";
    os << "views = " << p.views << "\nrows = " << p.rows << "\nspacing = " << FormatNumber(p.spacing)
       << "\nrow_spacing = " << FormatNumber(p.row_spacing)
       << "\naltitude = " << FormatNumber(p.altitude)
       << "\nterrain_amplitude = " << FormatNumber(p.terrain_amplitude)
       << "\njitter_deg = " << FormatNumber(p.jitter_deg) << "\npoints = " << p.points
       << "\nba_every = " << p.ba_every
       << "\nmin_triangulation_angle_deg = " << FormatNumber(p.min_triangulation_angle_deg)
       << "\nmax_reprojection_px = " << FormatNumber(p.max_reprojection_px)
       << "\nflat_normal_init = " << FormatArray(p.flat_normal_init)
       << "\nflat_distance_scale = " << FormatNumber(p.flat_distance_scale)
       << "\ndome_center_init = " << FormatArray(p.dome_center_init)
       << "\nprior_sigma = " << FormatNumber(p.prior_sigma)
       << "\nprior_weight = " << FormatNumber(p.prior_weight) << "\n";
  }
  for (const auto& cam : config.cameras) FormatCamera(os, cam);
  return os.str();
}

}  // namespace rsfm
