#pragma once

#include "sparsepose/model.hpp"

#include <functional>
#include <iosfwd>

namespace sparsepose {

struct TrainRecord {
  int step = 0;
  bool warmup = false;
  double total = 0.0;
  double roi = 0.0;
  double obj = 0.0;
  double cls = 0.0;
  double trans = 0.0;
  double rot = 0.0;
};

/// Trains on one scene. During the first warmup_fraction of the steps only the
/// RoI term is back-propagated; every record holds all loss parts.
std::vector<TrainRecord> train(PoseNetwork& net, const SceneInput& input, const SceneTargets& targets,
                               const std::vector<ObjectModel>& library, const PipelineConfig& cfg, int steps,
                               const std::function<void(const TrainRecord&)>& on_step = {});

void write_trace_csv(std::ostream& out, const std::vector<TrainRecord>& trace, std::uint64_t seed);

/// Clusters predicted centers, aggregates each cluster and refines with ICP.
PoseSet poses_from_votes(const VoteSet& votes, const SceneInput& input, const std::vector<ObjectModel>& library,
                         const PipelineConfig& cfg);

VoteSet network_votes(const PoseNetwork& net, const SceneInput& input, const PipelineConfig& cfg,
                      Exec exec = Exec::Parallel);
/// Ground-truth targets posing as predictions: every positive fine voxel votes
/// with its exact offset and rotation.
VoteSet oracle_votes(const SceneInput& input, const SceneTargets& targets, const SceneGroundTruth& gt);

PoseSet estimate(const PoseNetwork& net, const SceneInput& input, const std::vector<ObjectModel>& library,
                 const PipelineConfig& cfg, Exec exec = Exec::Parallel);
PoseSet estimate_oracle(const SceneInput& input, const SceneTargets& targets, const SceneGroundTruth& gt,
                        const std::vector<ObjectModel>& library, const PipelineConfig& cfg);

}  // namespace sparsepose
