// Copyright 2026 The shps Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: render, init, reconstruct, evaluate, serve.

#pragma once

#include "shps/balloon_init.hpp"
#include "shps/evaluation.hpp"
#include "shps/forward_render.hpp"
#include "shps/io.hpp"
#include "shps/lbcd_solver.hpp"
#include "shps/synthetic.hpp"
#include "shps/tuner_server.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace shps {

namespace fs = std::filesystem;

struct RenderArgs {
  std::string shape = "gaussian-bump";
  std::string albedo = "constant";
  std::string lighting = "sh";
  int size = 128;
  int images = 20;
  std::uint64_t seed = 0;
  fs::path out = "dataset";
  fs::path mask;        // with a depth-file shape
  fs::path intrinsics;  // with a depth-file shape
};

struct InitArgs {
  fs::path mask;
  fs::path intrinsics;
  std::string init = "balloon";
  double kappa = 1.0;
  double radius_scale = 1.0;
  int balloon_iters = BalloonOptions{}.max_iters;
  fs::path out = "init_depth.pfm";
};

struct ReconstructArgs {
  fs::path input;
  fs::path mask;
  fs::path intrinsics;
  int images = 0;  // 0: all images found
  std::string init = "balloon";
  double kappa = 1.0;
  double radius_scale = 1.0;
  fs::path init_depth;
  fs::path gt_normals;
  std::uint64_t seed = 0;
  SolverConfig solver;
  bool verbose = false;
  fs::path out = "result";
};

struct EvaluateArgs {
  fs::path estimate;
  fs::path ground_truth;
  fs::path mask;
  fs::path intrinsics;
  fs::path report = "evaluation.json";
};

struct ServeArgs {
  fs::path mask;
  fs::path intrinsics;
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path ui_dir;
  fs::path config_out = "tuner_config.json";
};

inline std::vector<fs::path> find_images(const fs::path& dir) {
  static const std::regex pattern(R"(image_\d+\.(png|pfm))", std::regex::icase);
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && std::regex_match(e.path().filename().string(), pattern)) {
      out.push_back(e.path());
    }
  }
  if (ec) throw Error("cannot list " + dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string image_name(int i, const char* ext) {
  std::ostringstream s;
  s << "image_" << std::setw(3) << std::setfill('0') << i << ext;
  return s.str();
}

inline int cmd_render(const RenderArgs& a, std::ostream& out) {
  if (a.images < 1) throw Error("--images must be at least 1");
  if (a.size < 8) throw Error("--size must be at least 8");
  const double s = a.size;
  CameraIntrinsics k{s, s, (s - 1) / 2, (s - 1) / 2};
  SyntheticShape shape;
  if (a.shape == "gaussian-bump") {
    BumpParams p;
    p.sigma *= s / 128.0;
    p.mask_radius *= s / 128.0;
    shape = gaussian_bump(a.size, a.size, k, p);
  } else if (a.shape == "hemisphere") {
    shape = sphere_cap(a.size, a.size, k);
  } else if (fs::path(a.shape).extension() == ".pfm") {
    if (a.mask.empty() || a.intrinsics.empty()) {
      throw Error("a depth-file shape needs --mask and --intrinsics");
    }
    shape.domain = read_mask(a.mask);
    k = read_intrinsics(a.intrinsics);
    shape.depth = read_depth(a.shape, shape.domain);
  } else {
    throw Error("unknown shape: " + a.shape);
  }
  const AlbedoMaps rho = albedo_pattern(a.albedo, shape.domain, 3);
  std::mt19937_64 rng(a.seed);
  SyntheticDataset data;
  std::optional<LightingSet> lighting;
  if (a.lighting == "sh") {
    LightingSet l = random_sh_lighting(a.images, 3, rng);
    normalize_exposure(l, rho, perspective_normals(shape.depth, k, shape.domain).n);
    data = make_synthetic_dataset(shape.depth, rho, l, k, shape.domain);
    lighting = l;
  } else if (a.lighting == "env") {
    std::vector<EnvironmentMap> envs;
    for (int i = 0; i < a.images; ++i) envs.push_back(random_environment_map(rng));
    data = make_synthetic_dataset(shape.depth, rho, envs, k, shape.domain);
    double peak = 0.0;
    for (double x : data.images.values()) peak = std::max(peak, x);
    if (peak > 0.0) {
      for (double& x : data.images.values()) x *= 0.9 / peak;
    }
  } else {
    throw Error("unknown lighting: " + a.lighting);
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw Error("cannot create " + a.out.string());
  for (int i = 0; i < data.images.images(); ++i) {
    Eigen::MatrixXd img(shape.domain.size(), 3);
    for (int c = 0; c < 3; ++c) img.col(c) = data.images.channel(i, c);
    write_png(a.out / image_name(i, ".png"), scatter(img, shape.domain), 16);
  }
  write_mask(a.out / "mask.png", shape.domain);
  write_json(a.out / "intrinsics.json", intrinsics_json(k));
  write_depth(a.out / "gt_depth.pfm", shape.depth, shape.domain);
  write_pfm(a.out / "gt_normals.pfm", scatter(data.normals.n, shape.domain));
  write_png(a.out / "gt_albedo.png", scatter(rho, shape.domain), 16);
  if (lighting) write_json(a.out / "gt_lighting.json", lighting_json(*lighting));
  out << "wrote " << data.images.images() << " images (" << shape.domain.size()
      << " masked pixels) to " << a.out.string() << '\n';
  return 0;
}

inline DepthMap initial_depth(const std::string& kind, const PixelDomain& domain,
                              const CameraIntrinsics& k, double kappa, double radius_scale,
                              const fs::path& file, const BalloonOptions& bopt = {}) {
  if (kind == "balloon") return init_depth_balloon(domain, k, kappa, bopt).depth;
  if (kind == "hemisphere") return init_depth_hemisphere(domain, k, radius_scale);
  if (kind == "file") {
    if (file.empty()) throw Error("--init file needs --init-depth");
    return read_depth(file, domain);
  }
  throw Error("unknown initializer: " + kind);
}

inline int cmd_init(const InitArgs& a, std::ostream& out) {
  if (a.init == "balloon" && !(a.kappa > 0.0)) throw Error("--kappa must be positive");
  const PixelDomain domain = read_mask(a.mask);
  const CameraIntrinsics k = read_intrinsics(a.intrinsics);
  BalloonOptions bopt;
  bopt.max_iters = a.balloon_iters;
  const DepthMap z = initial_depth(a.init, domain, k, a.kappa, a.radius_scale, {}, bopt);
  write_depth(a.out, z, domain);
  out << std::setprecision(10) << "mean depth " << z.values.mean() << ", wrote "
      << a.out.string() << '\n';
  return 0;
}

inline int cmd_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  if (a.init == "balloon" && !(a.kappa > 0.0)) throw Error("--kappa must be positive");
  a.solver.validate();
  std::vector<fs::path> paths = find_images(a.input);
  if (paths.empty()) throw Error("no image_NNN.png/pfm files in " + a.input.string());
  if (a.images > 0) {
    if (static_cast<std::size_t>(a.images) > paths.size()) {
      throw Error("--images exceeds the number of available images");
    }
    paths.resize(static_cast<std::size_t>(a.images));
  }
  const Scene scene = load_scene(paths, a.mask.empty() ? a.input / "mask.png" : a.mask,
                                 a.intrinsics.empty() ? a.input / "intrinsics.json" : a.intrinsics);
  const auto t0 = std::chrono::steady_clock::now();
  const DepthMap init = initial_depth(a.init, scene.domain, scene.intrinsics, a.kappa,
                                      a.radius_scale, a.init_depth);
  const Problem p(scene.images, scene.domain, scene.intrinsics);
  const SolverState s = solve(p, init, a.solver, [&](const IterationReport& r, const SolverState&) {
    if (a.verbose) {
      std::cerr << "iter " << r.iteration << (r.warmup ? " (warmup)" : "") << " energy "
                << r.energy << " depth step " << r.depth.step << '\n';
    }
  });
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_outputs(s.depth, s.albedo, s.lighting, scene.domain, scene.intrinsics, a.out);
  RunInfo info;
  info.seconds = seconds;
  info.extra["init"] = a.init;
  info.extra["kappa"] = a.kappa;
  info.extra["images"] = scene.images.images();
  info.extra["pixels"] = scene.domain.size();
  info.extra["seed"] = a.seed;
  fs::path gt = a.gt_normals;
  if (gt.empty() && fs::exists(a.input / "gt_normals.pfm")) gt = a.input / "gt_normals.pfm";
  if (!gt.empty()) {
    const Eigen::MatrixXd gt_n = gather(read_pfm(gt), scene.domain);
    if (gt_n.cols() != 3) throw Error("ground-truth normals must have 3 channels");
    info.mae_degrees = mean_angular_error(perspective_normals(s.depth, scene.intrinsics,
                                                              scene.domain).n,
                                          gt_n, scene.domain);
  }
  write_json(a.out / "report.json", report(s, a.solver, info));
  std::ofstream csv(a.out / "energy.csv");
  write_energy_csv(csv, s);
  out << "iterations " << s.energy_history.back().iteration << ", final energy "
      << s.energy_history.back().energy;
  if (info.mae_degrees) out << ", MAE " << std::fixed << std::setprecision(2) << *info.mae_degrees;
  out << '\n';
  return 0;
}

/// Normals from a 3-channel normal map or a 1-channel perspective depth map.
inline NormalMatrix normals_from_file(const fs::path& path, const PixelDomain& domain,
                                      const CameraIntrinsics* k) {
  const Image img = read_pfm(path);
  const Eigen::MatrixXd v = gather(img, domain);
  if (img.channels == 3) return v;
  if (!k) throw Error("a depth map needs --intrinsics to derive normals");
  DepthMap z{Projection::perspective, v.col(0)};
  z.validate();
  return perspective_normals(z, *k, domain).n;
}

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const PixelDomain domain = read_mask(a.mask);
  std::optional<CameraIntrinsics> k;
  if (!a.intrinsics.empty()) k = read_intrinsics(a.intrinsics);
  const NormalMatrix est = normals_from_file(a.estimate, domain, k ? &*k : nullptr);
  const NormalMatrix gt = normals_from_file(a.ground_truth, domain, k ? &*k : nullptr);
  const double mae = mean_angular_error(est, gt, domain);
  write_json(a.report, {{"mae_degrees", mae},
                        {"pixels", domain.size()},
                        {"estimate", a.estimate.string()},
                        {"ground_truth", a.ground_truth.string()}});
  out << "MAE " << std::fixed << std::setprecision(2) << mae << "\xC2\xB0\n";
  return 0;
}

namespace detail {
inline std::atomic<httplib::Server*> active_server{nullptr};
inline void stop_server(int) {
  if (httplib::Server* s = active_server.load()) s->stop();
}
}  // namespace detail

inline int cmd_serve(const ServeArgs& a, std::ostream& out) {
  TunerOptions opt;
  opt.config_path = a.config_out;
  opt.ui_dir = a.ui_dir;
  TunerService service(read_mask(a.mask), read_intrinsics(a.intrinsics), opt);
  httplib::Server server;
  service.install(server);
  if (!server.bind_to_port(a.host, a.port)) {
    throw Error("cannot bind " + a.host + ":" + std::to_string(a.port) + " (port in use?)");
  }
  detail::active_server = &server;
  std::signal(SIGINT, detail::stop_server);
  std::signal(SIGTERM, detail::stop_server);
  out << "serving on http://" << a.host << ':' << a.port << '\n' << std::flush;
  server.listen_after_bind();
  detail::active_server = nullptr;
  out << "stopped\n";
  return 0;
}

/// Parses and runs one command; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Photometric stereo under harmonic lighting"};
  app.require_subcommand(1);

  RenderArgs render;
  auto* r = app.add_subcommand("render", "Render a synthetic dataset");
  r->add_option("--shape", render.shape, "gaussian-bump, hemisphere, or a depth .pfm")
      ->capture_default_str();
  r->add_option("--albedo", render.albedo, "constant, white, bars, rectcircle, checker")
      ->capture_default_str();
  r->add_option("--lighting", render.lighting, "sh or env")
      ->check(CLI::IsMember({"sh", "env"}))
      ->capture_default_str();
  r->add_option("--size", render.size, "Image width and height")->capture_default_str();
  r->add_option("--images", render.images, "Number of images")->capture_default_str();
  r->add_option("--seed", render.seed, "Random seed")->capture_default_str();
  r->add_option("--mask", render.mask, "Mask for a depth-file shape");
  r->add_option("--intrinsics", render.intrinsics, "Intrinsics for a depth-file shape");
  r->add_option("--out", render.out, "Output directory")->capture_default_str();

  InitArgs init;
  auto* in = app.add_subcommand("init", "Compute an initial depth map");
  in->add_option("--mask", init.mask)->required();
  in->add_option("--intrinsics", init.intrinsics)->required();
  in->add_option("--init", init.init)
      ->check(CLI::IsMember({"balloon", "hemisphere"}))
      ->capture_default_str();
  in->add_option("--kappa", init.kappa, "Volume ratio, V = kappa N")->capture_default_str();
  in->add_option("--radius-scale", init.radius_scale)->capture_default_str();
  in->add_option("--balloon-iters", init.balloon_iters)->capture_default_str();
  in->add_option("--out", init.out)->capture_default_str();

  ReconstructArgs rec;
  auto* rc = app.add_subcommand("reconstruct", "Recover depth, albedo and lighting");
  rc->add_option("--input", rec.input, "Directory with image_NNN.png, mask.png, intrinsics.json")
      ->required();
  rc->add_option("--mask", rec.mask);
  rc->add_option("--intrinsics", rec.intrinsics);
  rc->add_option("--images", rec.images, "Use the first N images (0: all)")->capture_default_str();
  rc->add_option("--init", rec.init)
      ->check(CLI::IsMember({"balloon", "hemisphere", "file"}))
      ->capture_default_str();
  rc->add_option("--kappa", rec.kappa)->capture_default_str();
  rc->add_option("--radius-scale", rec.radius_scale)->capture_default_str();
  rc->add_option("--init-depth", rec.init_depth, "Depth .pfm for --init file");
  rc->add_option("--gt-normals", rec.gt_normals, "Ground-truth normals .pfm");
  rc->add_option("--mu", rec.solver.tv_weight)->capture_default_str();
  rc->add_option("--lambda", rec.solver.cauchy_scale)->capture_default_str();
  rc->add_option("--gamma", rec.solver.huber_threshold)->capture_default_str();
  rc->add_option("--warmup-iters", rec.solver.warmup_iters)->capture_default_str();
  rc->add_option("--max-iters", rec.solver.max_outer_iters)->capture_default_str();
  rc->add_option("--cg-tol", rec.solver.cg_tol)->capture_default_str();
  rc->add_option("--tol", rec.solver.outer_tol, "Relative energy change to stop")
      ->capture_default_str();
  rc->add_option("--seed", rec.seed)->capture_default_str();
  rc->add_flag("--lagged-line-search", rec.solver.lagged_line_search);
  rc->add_flag("-v,--verbose", rec.verbose);
  rc->add_option("--out", rec.out)->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Mean angular error against ground truth");
  e->add_option("--estimate", ev.estimate, "Normals (3-channel) or depth (1-channel) .pfm")
      ->required();
  e->add_option("--gt", ev.ground_truth, "Ground truth, same formats")->required();
  e->add_option("--mask", ev.mask)->required();
  e->add_option("--intrinsics", ev.intrinsics, "Needed when a depth map is given");
  e->add_option("--report", ev.report)->capture_default_str();

  ServeArgs sv;
  auto* s = app.add_subcommand("serve", "Serve the kappa tuner API");
  s->add_option("--mask", sv.mask)->required();
  s->add_option("--intrinsics", sv.intrinsics)->required();
  s->add_option("--host", sv.host)->capture_default_str();
  s->add_option("--port", sv.port)->capture_default_str();
  s->add_option("--ui-dir", sv.ui_dir, "Static UI assets");
  s->add_option("--config-out", sv.config_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    return app.exit(pe, out, err);
  }
  try {
    if (r->parsed()) return cmd_render(render, out);
    if (in->parsed()) return cmd_init(init, out);
    if (rc->parsed()) return cmd_reconstruct(rec, out);
    if (e->parsed()) return cmd_evaluate(ev, out);
    if (s->parsed()) return cmd_serve(sv, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("shps");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace shps
