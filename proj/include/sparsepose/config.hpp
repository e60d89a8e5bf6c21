#pragma once

#include "sparsepose/heatmap.hpp"
#include "sparsepose/nn/layers.hpp"
#include "sparsepose/nn/losses.hpp"
#include "sparsepose/pose_voting.hpp"

#include <filesystem>
#include <string>

namespace sparsepose {

enum class InputRepr { Cloud, Tsdf };

struct VoxelSettings {
  double theta = 0.002;
  int coarse_factor = 10;
  double truncation_factor = 8.0;
  int block_voxels = 16;
  InputRepr representation = InputRepr::Cloud;
  double workspace_margin = 0.005;
};

struct SelectionSettings {
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double topk_ratio = 0.5;
  int topk_min = 16;
  int topk_max = 20000;
  double vote_threshold = 0.5;  // minimum objectness for a vote at inference
};

struct LossSettings {
  nn::LossWeights weights;
  double smooth_l1_delta = 0.01;
  int chamfer_points = 256;
  bool normalize_chamfer = true;  // model points divided by the object diameter
};

struct NetworkSettings {
  int roi_width = 16;
  int obj_width = 32;
  nn::AttentionConfig attention;
};

struct VotingSettings {
  double dbscan_eps_voxels = 5.0;
  int dbscan_min_pts = 5;
  double top_fraction = 0.5;
};

struct IcpSettings {
  bool enabled = true;
  int max_iterations = 30;
  double max_correspondence_voxels = 4.0;
  double tolerance = 1e-5;
  int min_correspondences = 3;
  bool band_points = false;  // match against TSDF band centers instead of the fused cloud
};

struct TrainSettings {
  int steps = 1000;
  std::string optimizer = "adam";  // adam | sgd
  double lr = 0.003;
  std::string schedule = "cosine";  // cosine | constant; cosine decays to zero after warm-up
  double momentum = 0.9;
  double warmup_fraction = 0.2;
  bool teacher_forcing = true;
};

struct EvalSettings {
  bool millimeter_mssd = false;
  int mspd_view = 0;
};

/// Every tunable of the pipeline. Text form: "[section]" headers and
/// "key = value" lines; '#' starts a comment.
struct PipelineConfig {
  VoxelSettings voxel;
  HeatmapParams heatmap;
  SelectionSettings selection;
  LossSettings loss;
  NetworkSettings network;
  VotingSettings voting;
  IcpSettings icp;
  TrainSettings train;
  EvalSettings eval;
  std::uint64_t seed = 0;

  void validate() const;

  /// Applies "section.key" = value; throws ConfigError on unknown keys or bad values.
  void set(const std::string& dotted_key, const std::string& value);

  std::string dump() const;
  static PipelineConfig parse(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);

  IcpParams icp_params() const;
};

}  // namespace sparsepose
