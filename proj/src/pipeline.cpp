#include "sparsepose/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <unordered_map>
#include <variant>

namespace sparsepose {

std::vector<TrainRecord> train(PoseNetwork& net, const SceneInput& input, const SceneTargets& targets,
                               const std::vector<ObjectModel>& library, const PipelineConfig& cfg, int steps,
                               const std::function<void(const TrainRecord&)>& on_step) {
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (input.fine.empty()) throw DataError("train: the scene has no occupied voxels");
  std::variant<nn::Adam, nn::Sgd> opt = cfg.train.optimizer == "sgd"
                                            ? std::variant<nn::Adam, nn::Sgd>(nn::Sgd(cfg.train.lr, cfg.train.momentum))
                                            : std::variant<nn::Adam, nn::Sgd>(nn::Adam(cfg.train.lr));
  const int warmup = static_cast<int>(std::ceil(cfg.train.warmup_fraction * steps));
  const SceneTargets* teacher = cfg.train.teacher_forcing ? &targets : nullptr;
  std::vector<TrainRecord> trace;
  for (int s = 0; s < steps; ++s) {
    const ForwardPass fp = net.forward(input, teacher);
    const LossParts parts = net.losses(fp, targets, library);
    TrainRecord rec;
    rec.step = s;
    rec.warmup = s < warmup;
    rec.total = parts.total.item();
    rec.roi = parts.roi.item();
    rec.obj = parts.obj.item();
    rec.cls = parts.cls.item();
    rec.trans = parts.trans.item();
    rec.rot = parts.rot.item();
    if (!std::isfinite(rec.total)) throw NumericalError("train: non-finite loss at step " + std::to_string(s));

    // A constant rate keeps kicking Adam out of the sharp single-scene minimum
    // right up to the last step, so the rate decays to zero after warm-up.
    double lr = cfg.train.lr;
    if (cfg.train.schedule == "cosine" && !rec.warmup) {
      const double progress = static_cast<double>(s - warmup) / std::max(1, steps - warmup);
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    std::visit([&](auto& o) { o.set_lr(lr); }, opt);

    net.store().zero_grad();
    if (rec.warmup) {
      nn::scale(parts.roi, cfg.loss.weights.roi).backward();
    } else {
      parts.total.backward();
    }
    std::visit([&](auto& o) { o.step(net.store().parameters()); }, opt);
    trace.push_back(rec);
    if (on_step) on_step(rec);
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const std::vector<TrainRecord>& trace, std::uint64_t seed) {
  out << "# seed=" << seed << '\n';
  out << "step,warmup,total,roi,obj,cls,trans,rot\n";
  out.precision(10);
  for (const auto& r : trace) {
    out << r.step << ',' << (r.warmup ? 1 : 0) << ',' << r.total << ',' << r.roi << ',' << r.obj << ',' << r.cls << ','
        << r.trans << ',' << r.rot << '\n';
  }
}

PoseSet poses_from_votes(const VoteSet& votes, const SceneInput& input, const std::vector<ObjectModel>& library,
                         const PipelineConfig& cfg) {
  votes.validate();
  if (votes.size() == 0) return {};
  std::vector<Vec3> predicted(votes.size());
  for (std::size_t i = 0; i < votes.size(); ++i) predicted[i] = votes.centers[i] + votes.offsets[i];
  const auto labels = dbscan(predicted, cfg.voting.dbscan_eps_voxels * cfg.voxel.theta, cfg.voting.dbscan_min_pts);
  if (std::none_of(labels.begin(), labels.end(), [](int l) { return l >= 0; })) return {};
  PoseSet poses = aggregate_votes(votes, labels, cfg.voting.top_fraction);
  if (cfg.icp.enabled && !poses.empty()) {
    std::map<int, std::vector<Vec3>> models;
    for (const auto& m : library) models[m.class_id] = m.cloud;
    // Each hypothesis is refined against the scene points inside the voxels
    // that voted for it, so the floor and touching neighbours do not pull it.
    const double theta = cfg.voxel.theta;
    const Vec3& origin = input.fine.origin();
    std::unordered_map<VoxelIndex, std::vector<int>, VoxelIndexHash> points_in;
    for (std::size_t i = 0; i < input.icp_points.size(); ++i) {
      points_in[index_of(input.icp_points[i], origin, theta)].push_back(static_cast<int>(i));
    }
    std::map<int, std::set<VoxelIndex>> cluster_voxels;
    for (std::size_t i = 0; i < votes.size(); ++i)
      if (labels[i] >= 0) cluster_voxels[labels[i]].insert(index_of(votes.centers[i], origin, theta));
    std::vector<std::vector<int>> support(poses.size());
    for (std::size_t k = 0; k < poses.size(); ++k) {
      for (const auto& v : cluster_voxels[poses[k].object_id]) {
        const auto it = points_in.find(v);
        if (it != points_in.end()) support[k].insert(support[k].end(), it->second.begin(), it->second.end());
      }
      std::sort(support[k].begin(), support[k].end());
    }
    poses = batched_icp(poses, models, input.icp_points, cfg.icp_params(), nullptr, &support);
  }
  for (std::size_t i = 0; i < poses.size(); ++i) poses[i].object_id = static_cast<int>(i);
  return poses;
}

VoteSet network_votes(const PoseNetwork& net, const SceneInput& input, const PipelineConfig& cfg, Exec exec) {
  VoteSet votes;
  const ForwardPass fp = net.forward(input, nullptr, exec);
  for (std::size_t k = 0; k < fp.selected.size(); ++k) {
    const int lifted_row = fp.selected[k];
    const double conf = fp.objectness.value()(lifted_row, 0);
    if (conf < cfg.selection.vote_threshold) continue;
    const auto logits = fp.logits.value().row(lifted_row);
    Eigen::Index best = 1;
    for (Eigen::Index c = 2; c < logits.size(); ++c)
      if (logits[c] > logits[best]) best = c;
    const int fine_row = fp.lifted[lifted_row];
    const auto kk = static_cast<Eigen::Index>(k);
    votes.centers.push_back(input.fine.center(fine_row));
    votes.offsets.push_back(fp.offsets.value().row(kk).transpose());
    votes.rot6d.push_back(fp.rot6d.value().row(kk).transpose());
    votes.confidence.push_back(conf);
    votes.class_ids.push_back(static_cast<int>(best));
  }
  return votes;
}

VoteSet oracle_votes(const SceneInput& input, const SceneTargets& targets, const SceneGroundTruth& gt) {
  VoteSet votes;
  for (int i = 0; i < input.fine.size(); ++i) {
    if (!targets.pose.valid[i]) continue;
    votes.centers.push_back(input.fine.center(i));
    votes.offsets.push_back(targets.pose.offsets.row(i).transpose());
    votes.rot6d.push_back(matrix_to_rot6d(targets.pose.rotations[i]));
    votes.confidence.push_back(1.0);
    votes.class_ids.push_back(gt.objects[targets.pose.object[i]].class_id);
  }
  return votes;
}

PoseSet estimate(const PoseNetwork& net, const SceneInput& input, const std::vector<ObjectModel>& library,
                 const PipelineConfig& cfg, Exec exec) {
  return poses_from_votes(network_votes(net, input, cfg, exec), input, library, cfg);
}

PoseSet estimate_oracle(const SceneInput& input, const SceneTargets& targets, const SceneGroundTruth& gt,
                        const std::vector<ObjectModel>& library, const PipelineConfig& cfg) {
  return poses_from_votes(oracle_votes(input, targets, gt), input, library, cfg);
}

}  // namespace sparsepose
