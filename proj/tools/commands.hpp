#pragma once

#include "sparsepose/config.hpp"
#include "sparsepose/metrics.hpp"
#include "sparsepose/pipeline.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sparsepose::cli {

namespace fs = std::filesystem;

/// Writes through a sibling temporary and renames it over `path`.
void atomic_write(const fs::path& path, const std::function<void(const fs::path&)>& writer);

struct SynthOptions {
  fs::path out;
  int objects = 5;
  int views = 3;
  bool noise = true;
  bool bin = true;
  Vec3 bin_size = Vec3(0.32, 0.24, 0.16);
  double min_gap = 0.001;
  int width = 640;
  int height = 480;
  double focal = 600.0;
};

struct TrainResult {
  std::vector<TrainRecord> trace;
  fs::path checkpoint;
};

void cmd_synth(const SynthOptions& opt, const PipelineConfig& cfg);
void cmd_fuse(const fs::path& scene, const fs::path& out, const PipelineConfig& cfg);
void cmd_targets(const fs::path& scene, const fs::path& out_dir, const PipelineConfig& cfg);
TrainResult cmd_train_toy(const fs::path& scene, const fs::path& out_dir, const PipelineConfig& cfg,
                          const std::optional<fs::path>& init_checkpoint = std::nullopt, bool verbose = true);
PoseSet cmd_estimate(const fs::path& scene, const std::optional<fs::path>& checkpoint, bool oracle,
                     const fs::path& out_dir, const PipelineConfig& cfg);
MetricReport cmd_eval(const fs::path& poses_json, const fs::path& scene, const fs::path& out_dir,
                      const PipelineConfig& cfg);
std::vector<OccupancyRow> cmd_stats(const fs::path& scene, const std::vector<double>& thetas_mm, const fs::path& out,
                                    const PipelineConfig& cfg);

/// Full command-line entry; returns the process exit code.
int run(int argc, char** argv);

}  // namespace sparsepose::cli
