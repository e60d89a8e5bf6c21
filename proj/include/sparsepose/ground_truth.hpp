#pragma once

#include "sparsepose/common.hpp"

#include <vector>

namespace sparsepose {

/// Per-object placement in the world frame. Canonical models are centered on
/// their centroid, so `translation` is also the world centroid.
struct ObjectPose {
  int object_id = 0;
  int class_id = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

struct SceneGroundTruth {
  std::vector<ObjectPose> objects;
  std::vector<Vec3> centroids;                   // world frame
  std::vector<std::vector<Vec3>> object_clouds;  // canonical clouds placed in world frame

  std::size_t size() const { return objects.size(); }
  bool empty() const { return objects.empty(); }
};

}  // namespace sparsepose
