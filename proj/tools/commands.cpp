#include "commands.hpp"

#include "sparsepose/tsdf.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

namespace sparsepose::cli {

void atomic_write(const fs::path& path, const std::function<void(const fs::path&)>& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    writer(tmp);
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  atomic_write(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out) throw DataError("write failed: " + tmp.string());
  });
}

void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

SceneBundle load_scene(const fs::path& scene) {
  if (!fs::is_directory(scene)) throw DataError("scene directory not found: " + scene.string());
  return load_bundle(scene);
}

std::string seed_comment(const PipelineConfig& cfg) { return "seed=" + std::to_string(cfg.seed); }

}  // namespace

void cmd_synth(const SynthOptions& opt, const PipelineConfig& cfg) {
  if (opt.objects < 0) throw ConfigError("synth: --objects must be >= 0");
  if (opt.views < 1) throw ConfigError("synth: --views must be >= 1");
  if ((opt.bin_size.array() <= 0.0).any()) throw ConfigError("synth: bin size must be positive");
  const auto library = make_primitives();
  const Aabb bin{Vec3(-opt.bin_size.x() / 2, -opt.bin_size.y() / 2, 0.0),
                 Vec3(opt.bin_size.x() / 2, opt.bin_size.y() / 2, opt.bin_size.z())};
  SceneSpec spec;
  if (opt.objects > 0) {
    SceneOptions so;
    so.min_gap = opt.min_gap;
    spec = sample_scene(library, bin, opt.objects, cfg.seed, so);
  } else {
    spec.bin = bin;
    spec.seed = cfg.seed;
  }
  spec.with_bin = opt.bin;
  CameraRig rig;
  rig.views = opt.views;
  rig.width = opt.width;
  rig.height = opt.height;
  rig.focal = opt.focal;
  spec.cameras = default_cameras(bin, rig);
  if (!opt.noise) spec.noise = NoiseParams{0.0, 0.0};
  SceneBundle bundle = make_bundle(std::move(spec), library, opt.noise);
  bundle.workspace = scene_workspace(bundle.spec, cfg.voxel.workspace_margin);

  if (fs::exists(opt.out)) {
    if (!fs::exists(opt.out / "scene.json")) throw DataError("refusing to overwrite non-scene directory " + opt.out.string());
    fs::remove_all(opt.out);
  }
  atomic_write(opt.out, [&](const fs::path& tmp) { write_bundle(tmp, bundle); });
  std::cout << "synth: " << bundle.gt.size() << " objects, " << bundle.depths.size() << " views -> " << opt.out.string()
            << " (" << seed_comment(cfg) << ")\n";
}

void cmd_fuse(const fs::path& scene, const fs::path& out, const PipelineConfig& cfg) {
  const SceneBundle bundle = load_scene(scene);
  const FusedPointCloud cloud = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace);
  if (cfg.voxel.representation == InputRepr::Cloud) {
    atomic_write(out, [&](const fs::path& tmp) { write_ply(tmp, cloud.points, {}, "value", seed_comment(cfg)); });
    std::cout << "fuse: N = " << cloud.size() << " points -> " << out.string() << " (" << seed_comment(cfg) << ")\n";
    return;
  }
  TsdfConfig tc = TsdfConfig::from_voxel_size(cfg.voxel.theta, cfg.voxel.block_voxels, cfg.voxel.truncation_factor);
  tc.origin = bundle.workspace.min;
  SparseTsdf tsdf(tc);
  tsdf.activate(cloud);
  for (std::size_t v = 0; v < bundle.depths.size(); ++v) tsdf.integrate_view(bundle.depths[v], bundle.spec.cameras[v]);
  atomic_write(out, [&](const fs::path& tmp) { tsdf.save(tmp); });
  std::cout << "fuse: M = " << tsdf.count_band_voxels() << " band voxels in " << tsdf.block_count() << " blocks -> "
            << out.string() << " (" << seed_comment(cfg) << ")\n";
}

void cmd_targets(const fs::path& scene, const fs::path& out_dir, const PipelineConfig& cfg) {
  const SceneBundle bundle = load_scene(scene);
  const SceneInput input = prepare_scene(bundle, cfg);
  const SceneTargets targets = make_targets(input, bundle.gt, cfg);

  std::ostringstream coarse;
  coarse << "# " << seed_comment(cfg) << "\nx,y,z,H,a\n" << std::setprecision(10);
  if (!input.fine.empty()) {
    const auto sup = soft_suppress(targets.roi, cfg.heatmap.beta, cfg.heatmap.epsilon, cfg.heatmap.kappa);
    for (int i = 0; i < input.coarse.grid.size(); ++i) {
      const Vec3 c = input.coarse.grid.center(i);
      coarse << c.x() << ',' << c.y() << ',' << c.z() << ',' << targets.roi[i] << ',' << sup.attention[i] << '\n';
    }
  }
  std::ostringstream fine;
  fine << "# " << seed_comment(cfg) << "\nx,y,z,objectness,label,object\n" << std::setprecision(10);
  for (int i = 0; i < input.fine.size(); ++i) {
    const Vec3 c = input.fine.center(i);
    fine << c.x() << ',' << c.y() << ',' << c.z() << ',' << targets.objectness[i] << ',' << targets.labels[i] << ','
         << targets.pose.object[i] << '\n';
  }
  write_text(out_dir / "coarse_targets.csv", coarse.str());
  write_text(out_dir / "fine_targets.csv", fine.str());
  std::cout << "targets: " << input.coarse.grid.size() << " coarse, " << input.fine.size() << " fine voxels -> "
            << out_dir.string() << " (" << seed_comment(cfg) << ")\n";
}

TrainResult cmd_train_toy(const fs::path& scene, const fs::path& out_dir, const PipelineConfig& cfg,
                          const std::optional<fs::path>& init_checkpoint, bool verbose) {
  const SceneBundle bundle = load_scene(scene);
  const SceneInput input = prepare_scene(bundle, cfg);
  if (input.fine.empty()) throw DataError("train-toy: the scene has no occupied voxels");
  const SceneTargets targets = make_targets(input, bundle.gt, cfg);
  PoseNetwork net(cfg, input.fine.channels(), max_class_id(bundle.library));
  if (init_checkpoint) net.store().load(*init_checkpoint);

  TrainResult result;
  const int steps = cfg.train.steps;
  const int every = std::max(1, steps / 10);
  result.trace = train(net, input, targets, bundle.library, cfg, steps, [&](const TrainRecord& r) {
    if (verbose && (r.step % every == 0 || r.step + 1 == steps)) {
      std::cout << "step " << r.step << (r.warmup ? " [warmup]" : "") << " loss " << r.total << '\n' << std::flush;
    }
  });
  result.checkpoint = out_dir / "checkpoint.bin";
  atomic_write(result.checkpoint, [&](const fs::path& tmp) { net.store().save(tmp); });
  std::ostringstream trace;
  write_trace_csv(trace, result.trace, cfg.seed);
  write_text(out_dir / "loss_trace.csv", trace.str());
  write_text(out_dir / "config.ini", cfg.dump());
  if (verbose) {
    std::cout << "train-toy: " << steps << " steps, " << net.store().scalar_count() << " parameters -> "
              << result.checkpoint.string() << " (" << seed_comment(cfg) << ")\n";
  }
  return result;
}

PoseSet cmd_estimate(const fs::path& scene, const std::optional<fs::path>& checkpoint, bool oracle,
                     const fs::path& out_dir, const PipelineConfig& cfg) {
  if (oracle == checkpoint.has_value()) throw ConfigError("estimate: give exactly one of --checkpoint or --oracle");
  const SceneBundle bundle = load_scene(scene);
  const SceneInput input = prepare_scene(bundle, cfg);
  PoseSet poses;
  if (oracle) {
    poses = estimate_oracle(input, make_targets(input, bundle.gt, cfg), bundle.gt, bundle.library, cfg);
  } else if (!input.fine.empty()) {
    PoseNetwork net(cfg, input.fine.channels(), max_class_id(bundle.library));
    net.store().load(*checkpoint);
    poses = estimate(net, input, bundle.library, cfg);
  }
  nlohmann::json j = poses_to_json(poses);
  j["seed"] = cfg.seed;
  j["mode"] = oracle ? "oracle" : "network";
  write_json_file(out_dir / "poses.json", j);
  std::ostringstream csv;
  csv << "# " << seed_comment(cfg) << '\n';
  write_poses_csv(csv, poses);
  write_text(out_dir / "poses.csv", csv.str());
  std::cout << "estimate: " << poses.size() << " poses -> " << out_dir.string() << " (" << seed_comment(cfg) << ")\n";
  return poses;
}

MetricReport cmd_eval(const fs::path& poses_json, const fs::path& scene, const fs::path& out_dir,
                      const PipelineConfig& cfg) {
  const SceneBundle bundle = load_scene(scene);
  std::ifstream in(poses_json);
  if (!in) throw DataError("cannot open poses file " + poses_json.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed poses file: " + std::string(e.what()));
  }
  const PoseSet poses = poses_from_json(j);
  EvalOptions opts;
  opts.millimeter_mssd = cfg.eval.millimeter_mssd;
  opts.mspd_view = cfg.eval.mspd_view;
  const MetricReport report = evaluate(poses, bundle.gt, bundle.library, bundle.spec.cameras, opts);
  std::ostringstream csv;
  csv << "# " << seed_comment(cfg) << '\n';
  write_eval_csv(csv, report);
  write_text(out_dir / "per_object.csv", csv.str());
  nlohmann::json rj = report_to_json(report, opts);
  rj["seed"] = cfg.seed;
  write_json_file(out_dir / "report.json", rj);
  std::cout << "eval: ADD-S AUC " << report.add_s_auc << ", AP " << report.ap << " -> " << out_dir.string() << " ("
            << seed_comment(cfg) << ")\n";
  return report;
}

std::vector<OccupancyRow> cmd_stats(const fs::path& scene, const std::vector<double>& thetas_mm, const fs::path& out,
                                    const PipelineConfig& cfg) {
  if (thetas_mm.empty()) throw ConfigError("stats: need at least one theta");
  const SceneBundle bundle = load_scene(scene);
  const FusedPointCloud cloud = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace);
  std::vector<double> thetas;
  for (double t : thetas_mm) {
    if (!(t > 0.0)) throw ConfigError("stats: thetas must be positive");
    thetas.push_back(t * 1e-3);
  }
  // Counted over the bin interior so the dense grid is an exact multiple of every theta.
  const auto rows = occupancy_stats(cloud.points, bundle.spec.bin, thetas);
  std::ostringstream csv;
  csv << "# " << seed_comment(cfg) << '\n';
  write_occupancy_csv(csv, rows);
  write_text(out, csv.str());
  if (rows.size() >= 2) {
    std::vector<double> inv, sparse, dense;
    for (const auto& r : rows) {
      inv.push_back(1.0 / r.theta);
      sparse.push_back(static_cast<double>(r.sparse));
      dense.push_back(static_cast<double>(r.dense));
    }
    std::cout << "stats: sparse exponent " << loglog_slope(inv, sparse) << ", dense exponent " << loglog_slope(inv, dense)
              << '\n';
  }
  std::cout << "stats: " << rows.size() << " rows -> " << out.string() << " (" << seed_comment(cfg) << ")\n";
  return rows;
}

int run(int argc, char** argv) {
  CLI::App app{"Sparse voxel 6D pose estimation toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "Pipeline config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a config value, section.key=value");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides run.seed)");

  SynthOptions synth;
  std::vector<double> bin_size;
  bool no_noise = false, no_bin = false;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic bin scene bundle");
  c_synth->add_option("--out", synth.out, "Output scene directory")->required();
  c_synth->add_option("--objects", synth.objects, "Number of objects");
  c_synth->add_option("--views", synth.views, "Number of camera views");
  c_synth->add_option("--bin-size", bin_size, "Bin interior x,y,z in meters")->delimiter(',')->expected(3);
  c_synth->add_option("--min-gap", synth.min_gap, "Minimum AABB gap between objects, meters");
  c_synth->add_option("--width", synth.width);
  c_synth->add_option("--height", synth.height);
  c_synth->add_option("--focal", synth.focal);
  c_synth->add_flag("--no-noise", no_noise, "Render exact depth");
  c_synth->add_flag("--no-bin", no_bin, "Do not render the bin floor and walls");

  std::string scene, out, repr, checkpoint, poses_path;
  double theta_mm = 0.0;
  int steps = -1;
  bool oracle = false;
  std::vector<double> thetas{8, 4, 2, 1};

  auto* c_fuse = app.add_subcommand("fuse", "Fuse depth views into a point cloud (PLY) or sparse TSDF dump");
  c_fuse->add_option("scene", scene)->required();
  c_fuse->add_option("--out", out)->required();
  c_fuse->add_option("--repr", repr, "cloud or tsdf")->check(CLI::IsMember({"cloud", "tsdf"}));
  c_fuse->add_option("--theta", theta_mm, "Voxel size in millimeters");

  auto* c_targets = app.add_subcommand("targets", "Dump RoI, objectness and class targets per voxel");
  c_targets->add_option("scene", scene)->required();
  c_targets->add_option("--out", out)->required();
  c_targets->add_option("--theta", theta_mm, "Voxel size in millimeters");

  std::string init;
  auto* c_train = app.add_subcommand("train-toy", "Train the network on one scene");
  c_train->add_option("scene", scene)->required();
  c_train->add_option("--out", out)->required();
  c_train->add_option("--steps", steps, "Training steps");
  c_train->add_option("--init", init, "Start from this checkpoint")->check(CLI::ExistingFile);
  c_train->add_option("--theta", theta_mm, "Voxel size in millimeters");

  auto* c_est = app.add_subcommand("estimate", "Estimate poses with a checkpoint or the ground-truth oracle");
  c_est->add_option("scene", scene)->required();
  c_est->add_option("--out", out)->required();
  c_est->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  c_est->add_flag("--oracle", oracle, "Feed ground-truth targets as predictions");
  c_est->add_option("--theta", theta_mm, "Voxel size in millimeters");

  auto* c_eval = app.add_subcommand("eval", "Score poses against the scene ground truth");
  c_eval->add_option("poses", poses_path, "poses.json")->required();
  c_eval->add_option("scene", scene)->required();
  c_eval->add_option("--out", out)->required();

  auto* c_stats = app.add_subcommand("stats", "Occupancy statistics over voxel sizes");
  c_stats->add_option("scene", scene)->required();
  c_stats->add_option("--out", out)->required();
  c_stats->add_option("--thetas", thetas, "Voxel sizes in millimeters")->delimiter(',');

  auto* c_config = app.add_subcommand("config", "Print the effective configuration");
  c_config->add_option("--out", out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got " + o);
      cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (*seed_opt) cfg.seed = seed;
    if (theta_mm > 0.0) cfg.voxel.theta = theta_mm * 1e-3;
    if (!repr.empty()) cfg.set("voxel.representation", repr);
    if (steps >= 0) cfg.train.steps = steps;
    cfg.validate();

    if (*c_synth) {
      if (!bin_size.empty()) synth.bin_size = Vec3(bin_size[0], bin_size[1], bin_size[2]);
      synth.noise = !no_noise;
      synth.bin = !no_bin;
      cmd_synth(synth, cfg);
    } else if (*c_fuse) {
      cmd_fuse(scene, out, cfg);
    } else if (*c_targets) {
      cmd_targets(scene, out, cfg);
    } else if (*c_train) {
      cmd_train_toy(scene, out, cfg, init.empty() ? std::nullopt : std::optional<fs::path>(init));
    } else if (*c_est) {
      cmd_estimate(scene, checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint), oracle, out, cfg);
    } else if (*c_eval) {
      cmd_eval(poses_path, scene, out, cfg);
    } else if (*c_stats) {
      cmd_stats(scene, thetas, out, cfg);
    } else if (*c_config) {
      if (out.empty()) {
        std::cout << cfg.dump();
      } else {
        write_text(out, cfg.dump());
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace sparsepose::cli
