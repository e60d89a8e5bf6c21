#pragma once

#include "sparsepose/config.hpp"
#include "sparsepose/fusion.hpp"
#include "sparsepose/synthetic.hpp"

#include <vector>

namespace sparsepose {

/// Everything the network and the voting stage read from one scene.
struct SceneInput {
  FusedPointCloud cloud;
  Eigen::MatrixXd points;    // rows fed to voxelization: (x, y, z) or (x, y, z, sdf)
  SparseVoxelGrid fine;
  CoarseGrid coarse;         // fine -> coarse (factor from config)
  CoarseGrid coarse2;        // coarse -> half resolution, U-Net bottom level
  nn::NeighborTable coarse_nbr;
  nn::NeighborTable coarse2_nbr;
  std::vector<Vec3> icp_points;
};

struct SceneTargets {
  Eigen::VectorXd roi;         // per coarse voxel
  Eigen::VectorXi objectness;  // per fine voxel
  Eigen::VectorXi labels;      // per fine voxel, 0 = background
  PoseTargets pose;            // per fine voxel
  std::vector<int> positive_coarse;  // coarse rows holding at least one positive fine voxel
};

SceneInput prepare_scene(const SceneBundle& bundle, const PipelineConfig& cfg, Exec exec = Exec::Parallel);
SceneTargets make_targets(const SceneInput& input, const SceneGroundTruth& gt, const PipelineConfig& cfg);

struct ForwardPass {
  nn::Tensor roi;  // coarse x 1
  SoftSuppression suppression;
  std::vector<int> kept_coarse;
  std::vector<int> lifted;    // lifted row -> fine row
  nn::Tensor objectness;      // lifted x 1
  nn::Tensor logits;          // lifted x (classes + 1)
  std::vector<int> selected;  // rows into `lifted`
  nn::Tensor offsets;         // selected x 3, meters
  nn::Tensor rot6d;           // selected x 6
};

struct LossParts {
  nn::Tensor roi, obj, cls, trans, rot, total;
};

/// RoI U-Net on the coarse grid, objectness/classification trunk on the
/// lifted fine voxels, pose head with attention blocks on the topK voxels.
class PoseNetwork {
 public:
  PoseNetwork(const PipelineConfig& cfg, int in_channels, int num_classes);

  /// With `teacher`, the kept RoI set and the topK set are widened by the
  /// ground-truth positives (training only).
  ForwardPass forward(const SceneInput& input, const SceneTargets* teacher, Exec exec = Exec::Parallel) const;

  LossParts losses(const ForwardPass& pass, const SceneTargets& targets,
                   const std::vector<ObjectModel>& library, Exec exec = Exec::Parallel) const;

  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  int in_channels() const { return in_channels_; }
  int num_classes() const { return num_classes_; }

 private:
  PipelineConfig cfg_;
  int in_channels_;
  int num_classes_;
  nn::ParameterStore store_;

  nn::SubmConv3 roi_conv1_, roi_conv2_, roi_down_, roi_up_;
  nn::Linear roi_head_;
  nn::SubmConv3 obj_conv1_, obj_conv2_, obj_conv3_;
  nn::Linear obj_hidden_, obj_head_, cls_hidden_, cls_head_;
  nn::Tensor cls_condition_;
  nn::SubmConv3 pose_conv1_, pose_conv2_;
  nn::DualBranchBlock pose_block1_, pose_block2_;
  nn::Linear offset_head_, rot_head_;
};

/// Class ids used by the classifier: 1..K, 0 = background.
int max_class_id(const std::vector<ObjectModel>& library);

}  // namespace sparsepose
