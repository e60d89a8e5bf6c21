#include "sparsepose/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace sparsepose {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("config: " + key + ": not a number: " + s);
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("config: " + key + ": not an integer: " + s);
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("config: " + key + ": expected true or false, got " + s);
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename Access>
Field real(std::string section, std::string key, Access access) {
  const std::string name = section + "." + key;
  return {section, key, [access](const PipelineConfig& c) { return format_double(access(const_cast<PipelineConfig&>(c))); },
          [access, name](PipelineConfig& c, const std::string& v) { access(c) = parse_double(name, v); }};
}

template <typename Access>
Field integer(std::string section, std::string key, Access access) {
  const std::string name = section + "." + key;
  using T = std::remove_reference_t<decltype(access(std::declval<PipelineConfig&>()))>;
  return {section, key, [access](const PipelineConfig& c) { return std::to_string(access(const_cast<PipelineConfig&>(c))); },
          [access, name](PipelineConfig& c, const std::string& v) { access(c) = parse_int<T>(name, v); }};
}

template <typename Access>
Field boolean(std::string section, std::string key, Access access) {
  const std::string name = section + "." + key;
  return {section, key,
          [access](const PipelineConfig& c) { return std::string(access(const_cast<PipelineConfig&>(c)) ? "true" : "false"); },
          [access, name](PipelineConfig& c, const std::string& v) { access(c) = parse_bool(name, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(integer("run", "seed", [](PipelineConfig& c) -> std::uint64_t& { return c.seed; }));

    f.push_back(real("voxel", "theta", [](PipelineConfig& c) -> double& { return c.voxel.theta; }));
    f.push_back(integer("voxel", "coarse_factor", [](PipelineConfig& c) -> int& { return c.voxel.coarse_factor; }));
    f.push_back(real("voxel", "truncation_factor", [](PipelineConfig& c) -> double& { return c.voxel.truncation_factor; }));
    f.push_back(integer("voxel", "block_voxels", [](PipelineConfig& c) -> int& { return c.voxel.block_voxels; }));
    f.push_back({"voxel", "representation",
                 [](const PipelineConfig& c) { return std::string(c.voxel.representation == InputRepr::Tsdf ? "tsdf" : "cloud"); },
                 [](PipelineConfig& c, const std::string& v) {
                   if (v == "cloud") c.voxel.representation = InputRepr::Cloud;
                   else if (v == "tsdf") c.voxel.representation = InputRepr::Tsdf;
                   else throw ConfigError("config: voxel.representation must be cloud or tsdf, got " + v);
                 }});
    f.push_back(real("voxel", "workspace_margin", [](PipelineConfig& c) -> double& { return c.voxel.workspace_margin; }));

    f.push_back(real("heatmap", "sigma_c", [](PipelineConfig& c) -> double& { return c.heatmap.sigma_c; }));
    f.push_back(real("heatmap", "sigma_b", [](PipelineConfig& c) -> double& { return c.heatmap.sigma_b; }));
    f.push_back(real("heatmap", "alpha", [](PipelineConfig& c) -> double& { return c.heatmap.alpha; }));
    f.push_back(real("heatmap", "gamma", [](PipelineConfig& c) -> double& { return c.heatmap.gamma; }));
    f.push_back(real("heatmap", "beta", [](PipelineConfig& c) -> double& { return c.heatmap.beta; }));
    f.push_back(real("heatmap", "epsilon", [](PipelineConfig& c) -> double& { return c.heatmap.epsilon; }));
    f.push_back(real("heatmap", "kappa", [](PipelineConfig& c) -> double& { return c.heatmap.kappa; }));
    f.push_back(boolean("heatmap", "reweight_features", [](PipelineConfig& c) -> bool& { return c.heatmap.reweight_features; }));

    f.push_back(real("selection", "focal_gamma", [](PipelineConfig& c) -> double& { return c.selection.focal_gamma; }));
    f.push_back(real("selection", "focal_alpha", [](PipelineConfig& c) -> double& { return c.selection.focal_alpha; }));
    f.push_back(real("selection", "topk_ratio", [](PipelineConfig& c) -> double& { return c.selection.topk_ratio; }));
    f.push_back(integer("selection", "topk_min", [](PipelineConfig& c) -> int& { return c.selection.topk_min; }));
    f.push_back(integer("selection", "topk_max", [](PipelineConfig& c) -> int& { return c.selection.topk_max; }));
    f.push_back(real("selection", "vote_threshold", [](PipelineConfig& c) -> double& { return c.selection.vote_threshold; }));

    f.push_back(real("loss", "lambda_roi", [](PipelineConfig& c) -> double& { return c.loss.weights.roi; }));
    f.push_back(real("loss", "lambda_obj", [](PipelineConfig& c) -> double& { return c.loss.weights.obj; }));
    f.push_back(real("loss", "lambda_cls", [](PipelineConfig& c) -> double& { return c.loss.weights.cls; }));
    f.push_back(real("loss", "lambda_trans", [](PipelineConfig& c) -> double& { return c.loss.weights.trans; }));
    f.push_back(real("loss", "lambda_rot", [](PipelineConfig& c) -> double& { return c.loss.weights.rot; }));
    f.push_back(real("loss", "smooth_l1_delta", [](PipelineConfig& c) -> double& { return c.loss.smooth_l1_delta; }));
    f.push_back(integer("loss", "chamfer_points", [](PipelineConfig& c) -> int& { return c.loss.chamfer_points; }));
    f.push_back(boolean("loss", "normalize_chamfer", [](PipelineConfig& c) -> bool& { return c.loss.normalize_chamfer; }));

    f.push_back(integer("network", "roi_width", [](PipelineConfig& c) -> int& { return c.network.roi_width; }));
    f.push_back(integer("network", "obj_width", [](PipelineConfig& c) -> int& { return c.network.obj_width; }));
    f.push_back(integer("network", "heads", [](PipelineConfig& c) -> int& { return c.network.attention.heads; }));
    f.push_back(integer("network", "window_small", [](PipelineConfig& c) -> int& { return c.network.attention.window_small; }));
    f.push_back(integer("network", "window_medium", [](PipelineConfig& c) -> int& { return c.network.attention.window_medium; }));
    f.push_back(boolean("network", "scale_logits", [](PipelineConfig& c) -> bool& { return c.network.attention.scale_logits; }));

    f.push_back(real("voting", "dbscan_eps_voxels", [](PipelineConfig& c) -> double& { return c.voting.dbscan_eps_voxels; }));
    f.push_back(integer("voting", "dbscan_min_pts", [](PipelineConfig& c) -> int& { return c.voting.dbscan_min_pts; }));
    f.push_back(real("voting", "top_fraction", [](PipelineConfig& c) -> double& { return c.voting.top_fraction; }));

    f.push_back(boolean("icp", "enabled", [](PipelineConfig& c) -> bool& { return c.icp.enabled; }));
    f.push_back(integer("icp", "max_iterations", [](PipelineConfig& c) -> int& { return c.icp.max_iterations; }));
    f.push_back(real("icp", "max_correspondence_voxels",
                     [](PipelineConfig& c) -> double& { return c.icp.max_correspondence_voxels; }));
    f.push_back(real("icp", "tolerance", [](PipelineConfig& c) -> double& { return c.icp.tolerance; }));
    f.push_back(integer("icp", "min_correspondences", [](PipelineConfig& c) -> int& { return c.icp.min_correspondences; }));
    f.push_back(boolean("icp", "band_points", [](PipelineConfig& c) -> bool& { return c.icp.band_points; }));

    f.push_back(integer("train", "steps", [](PipelineConfig& c) -> int& { return c.train.steps; }));
    f.push_back({"train", "optimizer", [](const PipelineConfig& c) { return c.train.optimizer; },
                 [](PipelineConfig& c, const std::string& v) {
                   if (v != "adam" && v != "sgd") throw ConfigError("config: train.optimizer must be adam or sgd, got " + v);
                   c.train.optimizer = v;
                 }});
    f.push_back(real("train", "lr", [](PipelineConfig& c) -> double& { return c.train.lr; }));
    f.push_back({"train", "schedule", [](const PipelineConfig& c) { return c.train.schedule; },
                 [](PipelineConfig& c, const std::string& v) {
                   if (v != "cosine" && v != "constant")
                     throw ConfigError("config: train.schedule must be cosine or constant, got " + v);
                   c.train.schedule = v;
                 }});
    f.push_back(real("train", "momentum", [](PipelineConfig& c) -> double& { return c.train.momentum; }));
    f.push_back(real("train", "warmup_fraction", [](PipelineConfig& c) -> double& { return c.train.warmup_fraction; }));
    f.push_back(boolean("train", "teacher_forcing", [](PipelineConfig& c) -> bool& { return c.train.teacher_forcing; }));

    f.push_back(boolean("eval", "millimeter_mssd", [](PipelineConfig& c) -> bool& { return c.eval.millimeter_mssd; }));
    f.push_back(integer("eval", "mspd_view", [](PipelineConfig& c) -> int& { return c.eval.mspd_view; }));
    return f;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(voxel.theta > 0.0)) throw ConfigError("config: voxel.theta must be positive");
  if (voxel.coarse_factor < 1) throw ConfigError("config: voxel.coarse_factor must be >= 1");
  if (!(voxel.truncation_factor > 0.0) || voxel.truncation_factor >= voxel.block_voxels) {
    throw ConfigError("config: voxel.truncation_factor must be in (0, block_voxels)");
  }
  if (voxel.workspace_margin < 0.0) throw ConfigError("config: voxel.workspace_margin must be >= 0");
  heatmap.validate();
  if (!(selection.topk_ratio > 0.0 && selection.topk_ratio <= 1.0)) throw ConfigError("config: selection.topk_ratio must be in (0, 1]");
  if (selection.topk_min < 0 || selection.topk_max < selection.topk_min) {
    throw ConfigError("config: need 0 <= selection.topk_min <= selection.topk_max");
  }
  if (!(loss.smooth_l1_delta > 0.0)) throw ConfigError("config: loss.smooth_l1_delta must be positive");
  if (loss.chamfer_points < 1) throw ConfigError("config: loss.chamfer_points must be >= 1");
  if (network.roi_width < 1 || network.obj_width < 1) throw ConfigError("config: network widths must be >= 1");
  nn::AttentionConfig att = network.attention;
  att.channels = network.obj_width;
  att.validate();
  if (!(voting.dbscan_eps_voxels > 0.0) || voting.dbscan_min_pts < 1) throw ConfigError("config: invalid DBSCAN parameters");
  if (!(voting.top_fraction > 0.0 && voting.top_fraction <= 1.0)) throw ConfigError("config: voting.top_fraction must be in (0, 1]");
  if (icp.max_iterations < 0 || !(icp.max_correspondence_voxels > 0.0) || icp.min_correspondences < 3) {
    throw ConfigError("config: invalid ICP parameters");
  }
  if (train.steps < 0 || !(train.lr > 0.0) || train.momentum < 0.0 || train.momentum >= 1.0) {
    throw ConfigError("config: invalid training parameters");
  }
  if (train.warmup_fraction < 0.0 || train.warmup_fraction > 1.0) throw ConfigError("config: train.warmup_fraction must be in [0, 1]");
  if (eval.mspd_view < 0) throw ConfigError("config: eval.mspd_view must be >= 0");
}

void PipelineConfig::set(const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("config: expected section.key, got " + dotted_key);
  const std::string section = dotted_key.substr(0, dot);
  const std::string key = dotted_key.substr(dot + 1);
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("config: unknown key " + dotted_key);
}

std::string PipelineConfig::dump() const {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(*this) << '\n';
  }
  return out.str();
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": key outside a section");
    cfg.set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

IcpParams PipelineConfig::icp_params() const {
  IcpParams p;
  p.max_iterations = icp.max_iterations;
  p.max_correspondence = icp.max_correspondence_voxels * voxel.theta;
  p.tolerance = icp.tolerance;
  p.min_correspondences = icp.min_correspondences;
  return p;
}

}  // namespace sparsepose
