#include "sparsepose/model.hpp"

#include "sparsepose/nn/losses.hpp"
#include "sparsepose/tsdf.hpp"

#include <algorithm>
#include <map>

namespace sparsepose {

using nn::Matrix;
using nn::Tensor;

int max_class_id(const std::vector<ObjectModel>& library) {
  int k = 0;
  for (const auto& m : library) k = std::max(k, m.class_id);
  return k;
}

SceneInput prepare_scene(const SceneBundle& bundle, const PipelineConfig& cfg, Exec exec) {
  cfg.validate();
  SceneInput in;
  const double theta = cfg.voxel.theta;
  const Vec3 origin = bundle.workspace.min;
  in.cloud = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace, DepthRange{}, exec);

  if (cfg.voxel.representation == InputRepr::Tsdf) {
    TsdfConfig tc = TsdfConfig::from_voxel_size(theta, cfg.voxel.block_voxels, cfg.voxel.truncation_factor);
    tc.origin = origin;
    SparseTsdf tsdf(tc);
    tsdf.activate(in.cloud);
    for (std::size_t v = 0; v < bundle.depths.size(); ++v) {
      tsdf.integrate_view(bundle.depths[v], bundle.spec.cameras[v], DepthRange{}, exec);
    }
    in.points = tsdf.extract_pbar();
  } else {
    in.points.resize(static_cast<Eigen::Index>(in.cloud.size()), 3);
    for (std::size_t i = 0; i < in.cloud.size(); ++i) in.points.row(static_cast<Eigen::Index>(i)) = in.cloud.points[i].transpose();
  }

  if (cfg.icp.band_points && cfg.voxel.representation == InputRepr::Tsdf) {
    for (Eigen::Index i = 0; i < in.points.rows(); ++i) in.icp_points.push_back(in.points.row(i).head<3>().transpose());
  } else {
    in.icp_points = in.cloud.points;
  }

  in.fine = voxelize(in.points, theta, origin);
  if (!in.fine.empty()) {
    in.coarse = coarsen(in.fine, cfg.voxel.coarse_factor);
    in.coarse2 = coarsen(in.coarse.grid, 2);
    in.coarse_nbr = nn::build_neighbors(in.coarse.grid.indices());
    in.coarse2_nbr = nn::build_neighbors(in.coarse2.grid.indices());
  }
  return in;
}

SceneTargets make_targets(const SceneInput& input, const SceneGroundTruth& gt, const PipelineConfig& cfg) {
  SceneTargets t;
  if (input.fine.empty()) {
    t.pose.offsets.resize(0, 3);
    t.pose.valid.resize(0);
    return t;
  }
  t.roi = roi_target(input.coarse.grid, gt, cfg.heatmap);
  t.pose = pose_targets(input.fine, gt);
  const int n = input.fine.size();
  t.objectness = t.pose.valid;
  t.labels = Eigen::VectorXi::Zero(n);
  std::vector<char> marked(input.coarse.grid.size(), 0);
  for (int i = 0; i < n; ++i) {
    if (t.pose.object[i] < 0) continue;
    t.labels[i] = gt.objects[t.pose.object[i]].class_id;
    marked[input.coarse.parent[i]] = 1;
  }
  for (int r = 0; r < input.coarse.grid.size(); ++r)
    if (marked[r]) t.positive_coarse.push_back(r);
  return t;
}

PoseNetwork::PoseNetwork(const PipelineConfig& cfg, int in_channels, int num_classes)
    : cfg_(cfg), in_channels_(in_channels), num_classes_(num_classes), store_(cfg.seed) {
  cfg_.validate();
  const int rw = cfg.network.roi_width;
  const int w = cfg.network.obj_width;
  const int hidden = std::max(1, w / 2);
  nn::AttentionConfig att = cfg.network.attention;
  att.channels = w;

  roi_conv1_ = nn::SubmConv3(store_, "roi.conv1", in_channels, rw);
  roi_conv2_ = nn::SubmConv3(store_, "roi.conv2", rw, rw);
  roi_down_ = nn::SubmConv3(store_, "roi.down", rw, rw);
  roi_up_ = nn::SubmConv3(store_, "roi.up", rw, rw);
  roi_head_ = nn::Linear(store_, "roi.head", rw, 1, true, true);

  obj_conv1_ = nn::SubmConv3(store_, "obj.conv1", in_channels + rw, w);
  obj_conv2_ = nn::SubmConv3(store_, "obj.conv2", w, w);
  obj_conv3_ = nn::SubmConv3(store_, "obj.conv3", w, w);
  obj_hidden_ = nn::Linear(store_, "obj.hidden", w, hidden);
  obj_head_ = nn::Linear(store_, "obj.head", hidden, 1, true, true);
  cls_hidden_ = nn::Linear(store_, "cls.hidden", w, w);
  cls_condition_ = store_.uniform("cls.condition", hidden, w, hidden);
  cls_head_ = nn::Linear(store_, "cls.head", w, num_classes + 1);

  pose_conv1_ = nn::SubmConv3(store_, "pose.conv1", w, w);
  pose_block1_ = nn::DualBranchBlock(store_, "pose.block1", att);
  pose_conv2_ = nn::SubmConv3(store_, "pose.conv2", w, w);
  pose_block2_ = nn::DualBranchBlock(store_, "pose.block2", att);
  offset_head_ = nn::Linear(store_, "pose.offset", w, 3, true, true);
  rot_head_.weight = store_.constant("pose.rot.weight", Matrix::Zero(w, 6));
  Matrix rot_bias = Matrix::Zero(1, 6);
  rot_bias(0, 0) = 1.0;
  rot_bias(0, 4) = 1.0;
  rot_head_.bias = store_.constant("pose.rot.bias", rot_bias);
}

namespace {

std::vector<int> sorted_union(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

}  // namespace

ForwardPass PoseNetwork::forward(const SceneInput& input, const SceneTargets* teacher, Exec exec) const {
  ForwardPass fp;
  if (input.fine.empty()) return fp;
  if (input.fine.channels() != in_channels_) throw DataError("network: input channel count does not match the model");

  // RoI U-Net on the coarse grid.
  const Tensor x0 = Tensor::constant(input.coarse.grid.features());
  Tensor h = nn::relu(roi_conv1_(x0, input.coarse_nbr, exec));
  h = nn::relu(roi_conv2_(h, input.coarse_nbr, exec));
  Tensor d = nn::segment_mean(h, input.coarse2.parent, input.coarse2.grid.size());
  d = nn::relu(roi_down_(d, input.coarse2_nbr, exec));
  Tensor u = nn::add(h, nn::gather_rows(d, input.coarse2.parent));
  u = nn::relu(roi_up_(u, input.coarse_nbr, exec));
  fp.roi = nn::sigmoid(roi_head_(u));

  fp.suppression = soft_suppress(fp.roi.value().col(0), cfg_.heatmap.beta, cfg_.heatmap.epsilon, cfg_.heatmap.kappa);
  fp.kept_coarse = fp.suppression.kept;
  if (teacher) fp.kept_coarse = sorted_union(fp.kept_coarse, teacher->positive_coarse);
  if (fp.kept_coarse.empty()) return fp;

  const LiftResult lift = lift_and_filter(input.fine, input.coarse.grid, fp.kept_coarse,
                                          Matrix(input.coarse.grid.size(), 0), cfg_.voxel.coarse_factor);
  fp.lifted = lift.fine_rows;
  Tensor coarse_part = nn::gather_rows(u, lift.coarse_rows);
  if (cfg_.heatmap.reweight_features) {
    Matrix att(static_cast<Eigen::Index>(lift.coarse_rows.size()), 1);
    for (std::size_t k = 0; k < lift.coarse_rows.size(); ++k) att(static_cast<Eigen::Index>(k), 0) = fp.suppression.attention[lift.coarse_rows[k]];
    coarse_part = nn::mul(coarse_part, nn::matmul(Tensor::constant(att), Tensor::constant(Matrix::Ones(1, coarse_part.cols()))));
  }
  const Tensor x = nn::concat_cols({Tensor::constant(lift.grid.features()), coarse_part});
  const nn::NeighborTable nbr = nn::build_neighbors(lift.grid.indices());
  Tensor t = nn::relu(obj_conv1_(x, nbr, exec));
  t = nn::relu(obj_conv2_(t, nbr, exec));
  t = nn::relu(obj_conv3_(t, nbr, exec));
  const Tensor h_obj = nn::relu(obj_hidden_(t));
  fp.objectness = nn::sigmoid(obj_head_(h_obj));
  fp.logits = cls_head_(nn::relu(nn::add(cls_hidden_(t), nn::matmul(h_obj, cls_condition_))));

  fp.selected = adaptive_topk(fp.objectness.value().col(0), cfg_.selection.topk_ratio, cfg_.selection.topk_min,
                              cfg_.selection.topk_max);
  if (teacher) {
    std::vector<int> positives;
    for (std::size_t k = 0; k < fp.lifted.size(); ++k)
      if (teacher->objectness[fp.lifted[k]]) positives.push_back(static_cast<int>(k));
    fp.selected = sorted_union(fp.selected, positives);
  }
  if (fp.selected.empty()) return fp;

  std::vector<VoxelIndex> sel_idx;
  sel_idx.reserve(fp.selected.size());
  for (int r : fp.selected) sel_idx.push_back(lift.grid.indices()[r]);
  const nn::NeighborTable sel_nbr = nn::build_neighbors(sel_idx);
  const auto small = partition_windows(sel_idx, cfg_.network.attention.window_small);
  const auto medium = partition_windows(sel_idx, cfg_.network.attention.window_medium);
  Tensor p = nn::gather_rows(t, fp.selected);
  p = nn::relu(pose_conv1_(p, sel_nbr, exec));
  p = pose_block1_(p, small, medium, exec);
  p = nn::relu(pose_conv2_(p, sel_nbr, exec));
  p = pose_block2_(p, small, medium, exec);
  fp.offsets = offset_head_(p);
  fp.rot6d = rot_head_(p);
  return fp;
}

LossParts PoseNetwork::losses(const ForwardPass& fp, const SceneTargets& targets,
                              const std::vector<ObjectModel>& library, Exec exec) const {
  LossParts parts;
  const auto zero = [] { return Tensor::scalar(0.0); };
  parts.roi = fp.roi.defined() ? nn::gaussian_focal_loss(fp.roi, targets.roi, cfg_.heatmap.alpha, cfg_.heatmap.gamma)
                               : zero();
  parts.obj = parts.cls = parts.trans = parts.rot = zero();

  if (!fp.lifted.empty()) {
    const auto n = static_cast<Eigen::Index>(fp.lifted.size());
    Eigen::VectorXi y(n), labels(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      y[k] = targets.objectness[fp.lifted[k]];
      labels[k] = targets.labels[fp.lifted[k]];
    }
    parts.obj = nn::focal_loss(fp.objectness, y, cfg_.selection.focal_gamma, cfg_.selection.focal_alpha);
    parts.cls = nn::weighted_cross_entropy(fp.logits, labels, class_weights(labels, num_classes_ + 1));
  }

  if (!fp.selected.empty()) {
    const auto n = static_cast<Eigen::Index>(fp.selected.size());
    Eigen::MatrixXd offsets(n, 3);
    Eigen::VectorXi valid(n);
    std::vector<Mat3> rotations(n);
    std::map<int, std::vector<Vec3>> sampled;
    // Model points in units of the object diameter keep the rotation term on
    // the same scale as the other losses.
    for (const auto& m : library) {
      auto pts = subsample(m.cloud, static_cast<std::size_t>(cfg_.loss.chamfer_points));
      if (cfg_.loss.normalize_chamfer && m.diameter > 0.0)
        for (auto& q : pts) q /= m.diameter;
      sampled[m.class_id] = std::move(pts);
    }
    const std::vector<Vec3>* fallback = &sampled.begin()->second;
    std::vector<const std::vector<Vec3>*> models(n, fallback);
    for (Eigen::Index k = 0; k < n; ++k) {
      const int row = fp.lifted[fp.selected[k]];
      offsets.row(k) = targets.pose.offsets.row(row);
      valid[k] = targets.pose.valid[row];
      rotations[k] = targets.pose.rotations[row];
      if (valid[k]) {
        const auto it = sampled.find(targets.labels[row]);
        if (it == sampled.end()) throw DataError("losses: class missing from the model library");
        models[k] = &it->second;
      }
    }
    parts.trans = nn::smooth_l1(fp.offsets, offsets, valid, cfg_.loss.smooth_l1_delta);
    parts.rot = nn::chamfer_rotation_loss(nn::rot6d_to_matrix(fp.rot6d), rotations, models, valid, exec);
  }
  parts.total = nn::multitask_loss(parts.roi, parts.obj, parts.cls, parts.trans, parts.rot, cfg_.loss.weights);
  return parts;
}

}  // namespace sparsepose
