#include "sparsepose/synthetic.hpp"

#include "sparsepose/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace sparsepose {

double Mesh::volume() const {
  double v = 0.0;
  for (const auto& f : faces) v += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]])) / 6.0;
  return v;
}

Vec3 Mesh::volume_centroid() const {
  double v = 0.0;
  Vec3 c = Vec3::Zero();
  for (const auto& f : faces) {
    const double tv = vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]])) / 6.0;
    v += tv;
    c += tv * (vertices[f[0]] + vertices[f[1]] + vertices[f[2]]) / 4.0;
  }
  return c / v;
}

double Mesh::surface_area() const {
  double a = 0.0;
  for (const auto& f : faces) a += 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
  return a;
}

Mesh Mesh::transformed(const Mat3& r, const Vec3& t) const {
  Mesh m = *this;
  for (auto& v : m.vertices) v = r * v + t;
  return m;
}

Aabb Mesh::bounds() const {
  Aabb b{Vec3::Constant(std::numeric_limits<double>::infinity()), Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& v : vertices) {
    b.min = b.min.cwiseMin(v);
    b.max = b.max.cwiseMax(v);
  }
  return b;
}

namespace {

void orient_outward(Mesh& m) {
  if (m.volume() < 0.0)
    for (auto& f : m.faces) std::swap(f[1], f[2]);
}

void center_on_centroid(Mesh& m) {
  const Vec3 c = m.volume_centroid();
  for (auto& v : m.vertices) v -= c;
}

/// Prism over a polygon that is counter-clockwise seen from +z and
/// star-shaped around its first vertex.
Mesh extrude(const std::vector<Eigen::Vector2d>& poly, double height) {
  Mesh m;
  const int n = static_cast<int>(poly.size());
  for (const auto& p : poly) m.vertices.emplace_back(p.x(), p.y(), -height / 2);
  for (const auto& p : poly) m.vertices.emplace_back(p.x(), p.y(), height / 2);
  for (int i = 1; i + 1 < n; ++i) {
    m.faces.push_back({n, n + i, n + i + 1});
    m.faces.push_back({0, i + 1, i});
  }
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.faces.push_back({i, j, n + j});
    m.faces.push_back({i, n + j, n + i});
  }
  return m;
}

double max_pairwise(const std::vector<Vec3>& pts) {
  double d = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) d = std::max(d, (pts[i] - pts[j]).norm());
  return d;
}

ObjectModel finish_model(int class_id, std::string name, Mesh mesh, std::vector<Mat3> symmetries, std::size_t points,
                         std::uint64_t seed) {
  orient_outward(mesh);
  center_on_centroid(mesh);
  ObjectModel m;
  m.class_id = class_id;
  m.name = std::move(name);
  m.cloud = sample_surface(mesh, points, seed + static_cast<std::uint64_t>(class_id));
  m.diameter = max_pairwise(mesh.vertices);
  m.mesh = std::move(mesh);
  m.symmetries = std::move(symmetries);
  return m;
}

std::vector<Mat3> axial_symmetries(int steps, bool with_flip) {
  std::vector<Mat3> out;
  for (int k = 0; k < steps; ++k) out.push_back(axis_angle(Vec3::UnitZ(), 2.0 * std::numbers::pi * k / steps));
  if (with_flip) {
    const Mat3 flip = axis_angle(Vec3::UnitX(), std::numbers::pi);
    for (int k = 0; k < steps; ++k) out.push_back(out[k] * flip);
  }
  return out;
}

}  // namespace

Mesh make_box(double sx, double sy, double sz) {
  Mesh m = extrude({{-sx / 2, -sy / 2}, {sx / 2, -sy / 2}, {sx / 2, sy / 2}, {-sx / 2, sy / 2}}, sz);
  orient_outward(m);
  return m;
}

Mesh make_revolution(const std::vector<Eigen::Vector2d>& profile, int segments) {
  Mesh m;
  std::vector<std::vector<int>> rings;
  for (const auto& p : profile) {
    std::vector<int> ring;
    if (p.x() <= 0.0) {
      const int id = static_cast<int>(m.vertices.size());
      m.vertices.emplace_back(0.0, 0.0, p.y());
      ring.assign(segments, id);
    } else {
      for (int s = 0; s < segments; ++s) {
        const double th = 2.0 * std::numbers::pi * s / segments;
        ring.push_back(static_cast<int>(m.vertices.size()));
        m.vertices.emplace_back(p.x() * std::cos(th), p.x() * std::sin(th), p.y());
      }
    }
    rings.push_back(std::move(ring));
  }
  for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
    const auto& a = rings[k];
    const auto& b = rings[k + 1];
    for (int s = 0; s < segments; ++s) {
      const int t = (s + 1) % segments;
      if (a[s] != a[t]) m.faces.push_back({a[s], a[t], b[t]});
      if (b[s] != b[t]) m.faces.push_back({a[s], b[t], b[s]});
    }
  }
  orient_outward(m);
  return m;
}

Mesh make_uv_sphere(double radius, int stacks, int slices) {
  std::vector<Eigen::Vector2d> profile;
  for (int i = 0; i <= stacks; ++i) {
    const double phi = std::numbers::pi * i / stacks;
    profile.emplace_back(i == 0 || i == stacks ? 0.0 : radius * std::sin(phi), -radius * std::cos(phi));
  }
  return make_revolution(profile, slices);
}

std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& f : mesh.faces) {
    acc += 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]).norm();
    cdf.push_back(acc);
  }
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = rng.uniform() * acc;
    const auto fi = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin(), cdf.size() - 1);
    const auto& f = mesh.faces[fi];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    out.push_back((1 - r1) * mesh.vertices[f[0]] + r1 * (1 - r2) * mesh.vertices[f[1]] + r1 * r2 * mesh.vertices[f[2]]);
  }
  return out;
}

std::vector<ObjectModel> make_primitives(std::size_t cloud_points, std::uint64_t seed) {
  std::vector<ObjectModel> lib;
  lib.push_back(finish_model(1, "box", make_box(0.040, 0.030, 0.020),
                             {Mat3::Identity(), axis_angle(Vec3::UnitX(), std::numbers::pi),
                              axis_angle(Vec3::UnitY(), std::numbers::pi), axis_angle(Vec3::UnitZ(), std::numbers::pi)},
                             cloud_points, seed));
  {
    const double a = 0.040, b = 0.030, t = 0.008;
    Mesh l = extrude({{0, 0}, {a, 0}, {a, t}, {t, t}, {t, b}, {0, b}}, 0.020);
    lib.push_back(finish_model(2, "l_bracket", std::move(l), {Mat3::Identity()}, cloud_points, seed));
  }
  lib.push_back(finish_model(3, "notched_cylinder",
                             make_revolution({{0.0, -0.018},
                                              {0.012, -0.018},
                                              {0.012, 0.004},
                                              {0.009, 0.004},
                                              {0.009, 0.009},
                                              {0.012, 0.009},
                                              {0.012, 0.018},
                                              {0.0, 0.018}},
                                             36),
                             axial_symmetries(36, false), cloud_points, seed));
  lib.push_back(finish_model(
      4, "tube",
      make_revolution({{0.007, -0.015}, {0.010, -0.015}, {0.010, 0.015}, {0.007, 0.015}, {0.007, -0.015}}, 36),
      axial_symmetries(36, true), cloud_points, seed));
  return lib;
}

const ObjectModel& find_model(const std::vector<ObjectModel>& library, int class_id) {
  for (const auto& m : library)
    if (m.class_id == class_id) return m;
  throw DataError("unknown object class " + std::to_string(class_id));
}

SceneSpec sample_scene(const std::vector<ObjectModel>& library, const Aabb& bin, int n_objects, std::uint64_t seed,
                       const SceneOptions& options) {
  if (n_objects < 1) throw ConfigError("sample_scene: need at least one object");
  if (library.empty()) throw ConfigError("sample_scene: empty model library");
  Rng rng(seed);
  SceneSpec scene;
  scene.bin = bin;
  scene.seed = seed;
  std::vector<Aabb> placed;
  int trials = 0;
  while (static_cast<int>(scene.objects.size()) < n_objects) {
    if (++trials > options.max_trials) throw DataError("sample_scene: placement failed after max trials");
    ObjectInstance inst;
    inst.class_id = library[rng.uniform_int(0, static_cast<int>(library.size()) - 1)].class_id;
    inst.rotation = rng.rotation();
    const Aabb rel = find_model(library, inst.class_id).mesh.transformed(inst.rotation, Vec3::Zero()).bounds();
    const Vec3 lo = bin.min - rel.min;
    const Vec3 hi = bin.max - rel.max;
    if ((hi.array() < lo.array()).any()) continue;
    inst.translation = Vec3(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()), rng.uniform(lo.z(), hi.z()));
    if (options.single_layer) inst.translation.z() = bin.min.z() + options.min_gap - rel.min.z();
    if (inst.translation.z() + rel.max.z() > bin.max.z()) continue;
    const Aabb box{rel.min + inst.translation, rel.max + inst.translation};
    bool clear = true;
    for (const auto& other : placed) {
      bool separated = false;
      for (int a = 0; a < 3; ++a) {
        if (box.min[a] >= other.max[a] + options.min_gap || other.min[a] >= box.max[a] + options.min_gap) separated = true;
      }
      if (!separated) {
        clear = false;
        break;
      }
    }
    if (!clear) continue;
    placed.push_back(box);
    scene.objects.push_back(inst);
  }
  return scene;
}

std::vector<Camera> default_cameras(const Aabb& bin, const CameraRig& rig) {
  std::vector<Camera> cams;
  const Vec3 target((bin.min.x() + bin.max.x()) / 2, (bin.min.y() + bin.max.y()) / 2, bin.min.z());
  for (int i = 0; i < rig.views; ++i) {
    const double frac = rig.views == 1 ? 0.5 : static_cast<double>(i) / (rig.views - 1);
    const double ang = (frac - 0.5) * rig.arc_deg * std::numbers::pi / 180.0;
    const Vec3 pos = target + rig.distance * Vec3(std::sin(ang), 0.0, std::cos(ang));
    const Vec3 z = (target - pos).normalized();
    const Vec3 x = z.cross(Vec3::UnitY()).normalized();
    const Vec3 y = z.cross(x);
    Camera cam;
    cam.intrinsics = {rig.focal, rig.focal, (rig.width - 1) / 2.0, (rig.height - 1) / 2.0, rig.width, rig.height};
    cam.extrinsics.rotation.col(0) = x;
    cam.extrinsics.rotation.col(1) = y;
    cam.extrinsics.rotation.col(2) = z;
    cam.extrinsics.translation = pos;
    cams.push_back(cam);
  }
  return cams;
}

namespace {

Mesh bin_mesh(const Aabb& bin) {
  Mesh m;
  auto quad = [&](const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const int base = static_cast<int>(m.vertices.size());
    m.vertices.insert(m.vertices.end(), {a, b, c, d});
    m.faces.push_back({base, base + 1, base + 2});
    m.faces.push_back({base, base + 2, base + 3});
  };
  const Vec3& lo = bin.min;
  const Vec3& hi = bin.max;
  quad({lo.x(), lo.y(), lo.z()}, {hi.x(), lo.y(), lo.z()}, {hi.x(), hi.y(), lo.z()}, {lo.x(), hi.y(), lo.z()});
  quad({lo.x(), lo.y(), lo.z()}, {lo.x(), hi.y(), lo.z()}, {lo.x(), hi.y(), hi.z()}, {lo.x(), lo.y(), hi.z()});
  quad({hi.x(), lo.y(), lo.z()}, {hi.x(), hi.y(), lo.z()}, {hi.x(), hi.y(), hi.z()}, {hi.x(), lo.y(), hi.z()});
  quad({lo.x(), lo.y(), lo.z()}, {hi.x(), lo.y(), lo.z()}, {hi.x(), lo.y(), hi.z()}, {lo.x(), lo.y(), hi.z()});
  quad({lo.x(), hi.y(), lo.z()}, {hi.x(), hi.y(), lo.z()}, {hi.x(), hi.y(), hi.z()}, {lo.x(), hi.y(), hi.z()});
  return m;
}

void rasterize(const Mesh& mesh, const Camera& cam, DepthImage& zbuf) {
  const auto& k = cam.intrinsics;
  const Mat3 rt = cam.extrinsics.rotation.transpose();
  const Vec3& t = cam.extrinsics.translation;
  constexpr double kNearClip = 1e-3;
  std::vector<Vec3> pc(mesh.vertices.size());
  for (std::size_t i = 0; i < pc.size(); ++i) pc[i] = rt * (mesh.vertices[i] - t);
  for (const auto& f : mesh.faces) {
    const Vec3& a = pc[f[0]];
    const Vec3& b = pc[f[1]];
    const Vec3& c = pc[f[2]];
    if (a.z() < kNearClip || b.z() < kNearClip || c.z() < kNearClip) continue;
    const Vec2 pa(k.fx * a.x() / a.z() + k.cx, k.fy * a.y() / a.z() + k.cy);
    const Vec2 pb(k.fx * b.x() / b.z() + k.cx, k.fy * b.y() / b.z() + k.cy);
    const Vec2 pcx(k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy);
    const double area = (pb - pa).x() * (pcx - pa).y() - (pb - pa).y() * (pcx - pa).x();
    if (std::abs(area) < 1e-12) continue;
    const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.x(), pb.x(), pcx.x()}))));
    const int u1 = std::min(k.width - 1, static_cast<int>(std::floor(std::max({pa.x(), pb.x(), pcx.x()}))));
    const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.y(), pb.y(), pcx.y()}))));
    const int v1 = std::min(k.height - 1, static_cast<int>(std::floor(std::max({pa.y(), pb.y(), pcx.y()}))));
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const Vec2 p(u, v);
        const double w0 = ((pb - p).x() * (pcx - p).y() - (pb - p).y() * (pcx - p).x()) / area;
        const double w1 = ((pcx - p).x() * (pa - p).y() - (pcx - p).y() * (pa - p).x()) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        // Screen-space barycentrics interpolate 1/z linearly.
        const double depth = 1.0 / (w0 / a.z() + w1 / b.z() + w2 / c.z());
        double& cur = zbuf.at(u, v);
        if (cur == 0.0 || depth < cur) cur = depth;
      }
    }
  }
}

}  // namespace

DepthImage render_meshes(const std::vector<Mesh>& meshes, const Camera& cam) {
  DepthImage img(cam.intrinsics.width, cam.intrinsics.height);
  for (const auto& m : meshes) rasterize(m, cam, img);
  return img;
}

DepthImage render_depth(const SceneSpec& scene, const std::vector<ObjectModel>& library, const Camera& cam,
                        int view_index, bool noise) {
  std::vector<Mesh> meshes;
  for (const auto& o : scene.objects) meshes.push_back(find_model(library, o.class_id).mesh.transformed(o.rotation, o.translation));
  if (scene.with_bin) meshes.push_back(bin_mesh(scene.bin));
  DepthImage img = render_meshes(meshes, cam);
  if (noise && (scene.noise.depth_sigma > 0.0 || scene.noise.dropout > 0.0)) {
    Rng rng(scene.seed * 1000003ULL + static_cast<std::uint64_t>(view_index) + 1);
    for (auto& d : img.values()) {
      if (d <= 0.0) continue;
      const double n = rng.normal();
      const double drop = rng.uniform();
      d = drop < scene.noise.dropout ? 0.0 : std::max(0.0, d + scene.noise.depth_sigma * n);
    }
  }
  return img;
}

SceneGroundTruth export_gt(const SceneSpec& scene, const std::vector<ObjectModel>& library) {
  SceneGroundTruth gt;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    const auto& model = find_model(library, o.class_id);
    gt.objects.push_back({static_cast<int>(i), o.class_id, o.rotation, o.translation});
    gt.centroids.push_back(o.rotation * model.mesh.volume_centroid() + o.translation);
    std::vector<Vec3> cloud(model.cloud.size());
    for (std::size_t j = 0; j < cloud.size(); ++j) cloud[j] = o.rotation * model.cloud[j] + o.translation;
    gt.object_clouds.push_back(std::move(cloud));
  }
  return gt;
}

Aabb scene_workspace(const SceneSpec& scene, double margin) {
  return {scene.bin.min - Vec3::Constant(margin), scene.bin.max + Vec3::Constant(margin)};
}

SceneBundle make_bundle(SceneSpec spec, std::vector<ObjectModel> library, bool noise) {
  SceneBundle b;
  b.spec = std::move(spec);
  b.library = std::move(library);
  for (std::size_t i = 0; i < b.spec.cameras.size(); ++i) {
    b.depths.push_back(render_depth(b.spec, b.library, b.spec.cameras[i], static_cast<int>(i), noise));
  }
  b.gt = export_gt(b.spec, b.library);
  b.workspace = scene_workspace(b.spec);
  return b;
}

namespace {

using nlohmann::json;

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json mat_json(const Mat3& m) {
  json out = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
  return out;
}
Mat3 json_mat(const json& j) {
  if (j.size() != 9) throw DataError("expected 9 rotation entries");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j.at(r * 3 + c).get<double>();
  return m;
}

void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << std::setprecision(17) << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed json " + p.string() + ": " + e.what());
  }
}

std::string two_digits(std::size_t i) {
  std::ostringstream s;
  s << std::setw(2) << std::setfill('0') << i;
  return s.str();
}

}  // namespace

void write_bundle(const std::filesystem::path& dir, const SceneBundle& b) {
  std::filesystem::create_directories(dir / "models");
  json scene;
  scene["seed"] = b.spec.seed;
  scene["bin"] = {{"min", vec_json(b.spec.bin.min)}, {"max", vec_json(b.spec.bin.max)}};
  scene["with_bin"] = b.spec.with_bin;
  scene["workspace"] = {{"min", vec_json(b.workspace.min)}, {"max", vec_json(b.workspace.max)}};
  scene["num_views"] = b.spec.cameras.size();
  scene["depth_scale"] = b.depth_scale;
  scene["noise"] = {{"depth_sigma", b.spec.noise.depth_sigma}, {"dropout", b.spec.noise.dropout}};
  write_json(dir / "scene.json", scene);

  for (std::size_t i = 0; i < b.spec.cameras.size(); ++i) {
    write_json(dir / ("cam_" + two_digits(i) + ".json"), camera_to_json(b.spec.cameras[i], b.depth_scale));
    save_depth_png(dir / ("depth_" + two_digits(i) + ".png"), b.depths[i], b.depth_scale);
  }

  json gt = json::object();
  gt["objects"] = json::array();
  for (std::size_t i = 0; i < b.gt.objects.size(); ++i) {
    const auto& o = b.gt.objects[i];
    gt["objects"].push_back({{"id", o.object_id},
                             {"class", o.class_id},
                             {"R", mat_json(o.rotation)},
                             {"t", vec_json(o.translation)},
                             {"centroid", vec_json(b.gt.centroids[i])}});
  }
  write_json(dir / "gt.json", gt);

  json models = json::array();
  for (const auto& m : b.library) {
    json sym = json::array();
    for (const auto& s : m.symmetries) sym.push_back(mat_json(s));
    json verts = json::array();
    for (const auto& v : m.mesh.vertices) verts.push_back(vec_json(v));
    json faces = json::array();
    for (const auto& f : m.mesh.faces) faces.push_back({f[0], f[1], f[2]});
    const std::string file = "class_" + std::to_string(m.class_id) + ".ply";
    models.push_back({{"class", m.class_id},
                      {"name", m.name},
                      {"diameter", m.diameter},
                      {"cloud", file},
                      {"symmetries", sym},
                      {"vertices", verts},
                      {"faces", faces}});
    write_ply(dir / "models" / file, m.cloud);
  }
  write_json(dir / "models" / "models.json", models);
}

SceneBundle load_bundle(const std::filesystem::path& dir) {
  SceneBundle b;
  try {
    const json scene = read_json(dir / "scene.json");
    b.spec.seed = scene.at("seed").get<std::uint64_t>();
    b.spec.bin = {json_vec(scene.at("bin").at("min")), json_vec(scene.at("bin").at("max"))};
    b.spec.with_bin = scene.at("with_bin").get<bool>();
    b.workspace = {json_vec(scene.at("workspace").at("min")), json_vec(scene.at("workspace").at("max"))};
    b.depth_scale = scene.at("depth_scale").get<double>();
    b.spec.noise.depth_sigma = scene.at("noise").at("depth_sigma").get<double>();
    b.spec.noise.dropout = scene.at("noise").at("dropout").get<double>();
    const auto views = scene.at("num_views").get<std::size_t>();
    for (std::size_t i = 0; i < views; ++i) {
      double scale = b.depth_scale;
      b.spec.cameras.push_back(camera_from_json(read_json(dir / ("cam_" + two_digits(i) + ".json")), &scale));
      b.depths.push_back(load_depth_png(dir / ("depth_" + two_digits(i) + ".png"), scale));
    }

    for (const auto& m : read_json(dir / "models" / "models.json")) {
      ObjectModel model;
      model.class_id = m.at("class").get<int>();
      model.name = m.at("name").get<std::string>();
      model.diameter = m.at("diameter").get<double>();
      for (const auto& s : m.at("symmetries")) model.symmetries.push_back(json_mat(s));
      for (const auto& v : m.at("vertices")) model.mesh.vertices.push_back(json_vec(v));
      for (const auto& f : m.at("faces")) model.mesh.faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
      model.cloud = read_ply_points(dir / "models" / m.at("cloud").get<std::string>());
      b.library.push_back(std::move(model));
    }

    const json gt = read_json(dir / "gt.json");
    for (const auto& o : gt.at("objects")) {
      ObjectInstance inst;
      inst.class_id = o.at("class").get<int>();
      inst.rotation = json_mat(o.at("R"));
      inst.translation = json_vec(o.at("t"));
      b.spec.objects.push_back(inst);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bundle " + dir.string() + ": " + e.what());
  }
  b.gt = export_gt(b.spec, b.library);
  return b;
}

}  // namespace sparsepose
