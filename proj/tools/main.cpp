// rgbdreg: register, evaluate, render, benchmark and synthesize RGB-D pairs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "report_json.hpp"
#include "rgbdreg/correspondence.hpp"
#include "rgbdreg/io.hpp"
#include "rgbdreg/pipeline.hpp"
#include "rgbdreg/synthdata.hpp"

namespace fs = std::filesystem;
using namespace rgbdreg;
using rgbdreg::cli::json;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string json_out;
  bool timing = true;
};

/// Flags shared by every command that runs the pipeline. Unset flags leave
/// the config file's values alone.
struct PipelineFlags {
  std::optional<std::string> descriptor;
  std::optional<int> feature_dim;
  std::optional<int> k;
  std::optional<int> subsets;
  std::optional<int> subset_size;
  bool no_randomized = false;
  bool no_ratio_test = false;
  std::optional<std::string> render_mode;
  std::optional<int> splat_radius;
  std::optional<double> outlier_features;

  void attach(CLI::App& app) {
    app.add_option("--descriptor", descriptor, "patch | file:<dir> (dir holds 0.rfm, 1.rfm)");
    app.add_option("--feature-dim", feature_dim, "descriptor dimension F");
    app.add_option("--k", k, "number of correspondences kept (even)");
    app.add_option("--subsets", subsets, "random subsets t");
    app.add_option("--subset-size", subset_size, "correspondences per subset");
    app.add_flag("--no-randomized", no_randomized, "single fit on all correspondences");
    app.add_flag("--no-ratio-test", no_ratio_test, "weight matches by 1 - D1");
    app.add_option("--render-mode", render_mode, "cross | joint");
    app.add_option("--splat-radius", splat_radius, "square splat half-width in pixels");
    app.add_option("--outlier-features", outlier_features,
                   "fraction of frame-1 features replaced by copies of other features");
  }

  PipelineConfig resolve(const GlobalOptions& g) const {
    PipelineConfig c;
    if (!g.config_path.empty()) apply_config_text(c, io::read_text(g.config_path));
    if (descriptor) c.descriptor = *descriptor;
    if (feature_dim) c.descriptor_config.dim = *feature_dim;
    if (k) c.top_k = *k;
    if (subsets) c.fit.num_subsets = *subsets;
    if (subset_size) c.fit.subset_size = *subset_size;
    if (no_randomized) c.fit.use_randomization = false;
    if (no_ratio_test) c.ratio_test = false;
    if (render_mode) c.render_mode = parse_render_mode(*render_mode);
    if (splat_radius) c.render.splat_radius = *splat_radius;
    if (outlier_features) c.outlier_feature_fraction = *outlier_features;
    if (g.seed) c.seed = *g.seed;
    validate(c);
    return c;
  }
};

json config_json(const PipelineConfig& c) {
  return {{"descriptor", c.descriptor},
          {"feature_dim", c.descriptor_config.dim},
          {"k", c.top_k},
          {"subsets", c.fit.num_subsets},
          {"subset_size", c.fit.subset_size},
          {"randomized", c.fit.use_randomization},
          {"ratio_test", c.ratio_test},
          {"render_mode", to_string(c.render_mode)},
          {"splat_radius", c.render.splat_radius},
          {"loss_weights",
           {{"photometric", c.loss_weights.photometric},
            {"depth", c.loss_weights.depth},
            {"correspondence", c.loss_weights.correspondence}}},
          {"outlier_features", c.outlier_feature_fraction},
          {"seed", c.seed}};
}

void emit(const json& j, const GlobalOptions& g) {
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!g.json_out.empty()) {
    std::ofstream os(g.json_out, std::ios::binary);
    if (!os) throw InputError("cannot write " + g.json_out);
    os << text;
  }
}

/// Pair directories under `root` (those holding 0/ and 1/), sorted by name.
std::vector<fs::path> list_pairs(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError("dataset directory " + root.string() + " not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::is_directory(e.path() / "0") && fs::is_directory(e.path() / "1"))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw InputError("no pair directories (with 0/ and 1/) under " + root.string());
  return out;
}

const RigidTransform& require_truth(const FramePair& pair, const fs::path& dir) {
  if (!pair.relative) throw InputError(dir.string() + ": ground truth needs 0/pose.txt and 1/pose.txt");
  return *pair.relative;
}

json run_register(const fs::path& pair_dir, const PipelineConfig& config, const GlobalOptions& g,
                  const std::string& pose_out, const std::string& matches_out) {
  const auto pair = io::load_pair(pair_dir);
  const auto result = register_frames(pair.frame0, pair.frame1, config);
  io::write_pose(pose_out.empty() ? pair_dir / "predicted_pose.txt" : fs::path(pose_out),
                 result.estimate);
  if (!matches_out.empty()) {
    std::ofstream os(matches_out);
    if (!os) throw InputError("cannot write " + matches_out);
    write_correspondences(os, result.correspondences);
  }
  json out = cli::pair_json(result, g.timing);
  out["pair"] = pair_dir.filename().string();
  out["config"] = config_json(config);
  if (pair.relative) {
    const auto report = evaluate_pair(result, *pair.relative, config.seed);
    const json metrics = cli::report_json(report, g.timing);
    for (const auto& item : metrics.items())
      if (item.key() != "time_ms") out[item.key()] = item.value();
  }
  return out;
}

json run_evaluate(const fs::path& dataset, const PipelineConfig& config, const GlobalOptions& g) {
  json pairs = json::array();
  std::vector<RegistrationReport> reports;
  for (const auto& dir : list_pairs(dataset)) {
    const auto pair = io::load_pair(dir);
    const auto& truth = require_truth(pair, dir);
    const auto result = register_frames(pair.frame0, pair.frame1, config);
    reports.push_back(evaluate_pair(result, truth, config.seed));
    json entry = cli::report_json(reports.back(), g.timing);
    entry["pair"] = dir.filename().string();
    entry["pose"] = cli::pose_json(result.estimate);
    entry["losses"] = cli::losses_json(result.losses);
    pairs.push_back(entry);
  }
  return {{"config", config_json(config)},
          {"pairs", pairs},
          {"summary", cli::summary_json(aggregate(reports), g.timing)}};
}

json run_render(const fs::path& pair_dir, const PipelineConfig& config, const std::string& pose_path,
                const fs::path& out_dir) {
  const auto pair = io::load_pair(pair_dir);
  RigidTransform pose;
  std::string source;
  if (!pose_path.empty()) {
    pose = io::read_pose(pose_path);
    source = "file";
  } else if (pair.relative) {
    pose = *pair.relative;
    source = "ground_truth";
  } else {
    throw InputError("render needs --pose or ground-truth pose files in " + pair_dir.string());
  }
  const auto matched = match_frames(pair.frame0, pair.frame1, config);
  const auto [view1, view2] = cross_render(matched.cloud0, matched.cloud1, pose,
                                           pair.frame0.intrinsics(), config.render_mode,
                                           config.render);
  const double corr = weighted_error(matched.correspondences.entries, pose);
  const RenderedView views[] = {{&view1, &pair.frame0}, {&view2, &pair.frame1}};
  const auto losses = consistency_losses(views, corr, config.loss_weights);

  fs::create_directories(out_dir);
  for (const auto& [name, r] : {std::pair{"view1", &view1}, {"view2", &view2}}) {
    io::write_color_png(out_dir / (std::string(name) + "_color.png"), r->color);
    io::write_depth_png(out_dir / (std::string(name) + "_depth.png"), r->depth);
    io::write_mask_png(out_dir / (std::string(name) + "_valid.png"), r->valid);
  }
  return {{"pair", pair_dir.filename().string()},
          {"pose_source", source},
          {"render_mode", to_string(config.render_mode)},
          {"losses", cli::losses_json(losses)},
          {"output", out_dir.string()}};
}

json run_benchmark(const fs::path& dataset, const PipelineConfig& config, const GlobalOptions& g,
                   const std::vector<int>& sweep, int repeats) {
  std::vector<LabeledPair> pairs;
  for (const auto& dir : list_pairs(dataset)) {
    auto pair = io::load_pair(dir);
    const RigidTransform truth = require_truth(pair, dir);
    pairs.push_back({std::move(pair.frame0), std::move(pair.frame1), truth});
  }
  if (pairs.size() < 10) {
    throw InputError("benchmark needs at least 10 pairs with ground truth, found " +
                     std::to_string(pairs.size()));
  }
  for (int t : sweep)
    if (t < 1) throw ConfigError("subset counts must be positive");
  json rows = json::array();
  for (const auto& row : subset_sweep(pairs, config, sweep, repeats)) {
    json r = {{"subsets", row.subsets},
              {"rot_err_deg", {{"mean", row.summary.rotation.mean}, {"median", row.summary.rotation.median}}},
              {"trans_err_cm", {{"mean", row.summary.translation.mean}, {"median", row.summary.translation.median}}},
              {"chamfer_cm", {{"mean", row.summary.chamfer.mean}, {"median", row.summary.chamfer.median}}}};
    r["time_ms"] = g.timing ? json{{"fit", row.mean_fit_ms}, {"total", row.mean_total_ms}}
                            : json::object();
    rows.push_back(r);
  }
  return {{"config", config_json(config)}, {"pairs", pairs.size()}, {"rows", rows}};
}

struct SynthOptions {
  double rot_deg = 10.0;
  double trans_m = 0.2;
  std::string size = "60x80";
  std::string out;
  int count = 1;
  double depth_noise = 0.0;
  double dropout = 0.0;
  double max_rot_deg = -1.0;
  double max_trans_m = -1.0;
};

std::pair<int, int> parse_size(const std::string& s) {
  int h = 0, w = 0;
  char x = 0;
  std::istringstream is(s);
  if (!(is >> h >> x >> w) || x != 'x' || !is.eof() || h < 2 || w < 2) {
    throw ConfigError("--size expects HxW, got '" + s + "'");
  }
  return {h, w};
}

json spec_json(const SceneSpec& s) {
  json prims = json::array();
  for (const auto& p : s.primitives) {
    prims.push_back({{"kind", p.kind == Primitive::Kind::kBox ? "box" : "plane"},
                     {"center", {p.center.x(), p.center.y(), p.center.z()}},
                     {"size", {p.size.x(), p.size.y(), p.size.z()}},
                     {"texture_seed", p.texture_seed}});
  }
  return {{"seed", s.seed},
          {"width", s.width},
          {"height", s.height},
          {"focal_scale", s.focal_scale},
          {"rotation_deg", s.rotation_deg},
          {"translation_m", s.translation_m},
          {"depth_noise_sigma", s.depth_noise_sigma},
          {"depth_dropout", s.depth_dropout},
          {"base_pose", cli::pose_json(s.base_pose)},
          {"primitives", prims}};
}

json run_synth(const SynthOptions& o, std::uint64_t seed) {
  if (o.out.empty()) throw ConfigError("synth needs --out");
  if (o.count < 1) throw ConfigError("--count must be positive");
  const auto [h, w] = parse_size(o.size);
  const fs::path root = o.out;
  json written = json::array();
  for (int i = 0; i < o.count; ++i) {
    auto spec = SceneSpec::random_room(seed + static_cast<std::uint64_t>(i), w, h);
    spec.rotation_deg = o.rot_deg;
    spec.translation_m = o.trans_m;
    // Ranged magnitudes are drawn per pair from the pair's seed.
    if (o.max_rot_deg >= 0.0 || o.max_trans_m >= 0.0) {
      std::mt19937_64 rng(splitmix64(spec.seed ^ 0x5a9e7ULL));
      if (o.max_rot_deg >= 0.0) spec.rotation_deg = o.max_rot_deg * uniform01(rng);
      if (o.max_trans_m >= 0.0) spec.translation_m = o.max_trans_m * uniform01(rng);
    }
    spec.depth_noise_sigma = o.depth_noise;
    spec.depth_dropout = o.dropout;
    const auto pair = generate_pair(spec);
    char name[32];
    std::snprintf(name, sizeof name, "pair_%04d", i);
    const fs::path dir = o.count == 1 ? root : root / name;
    io::write_pair(dir, pair);
    json meta = spec_json(spec);
    meta["relative_pose"] = cli::pose_json(*pair.relative);
    std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
    written.push_back(dir.string());
  }
  return {{"pairs", written}};
}

int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::kNumerical ? kExitNumerical : kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D pair registration: descriptors, ratio-test matching, randomized weighted "
               "Procrustes, splat rendering and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "seed for sampling, subsets and synthesis");
  app.add_option("--config", g.config_path, "key = value config file; flags override it")
      ->check(CLI::ExistingFile);
  app.add_option("--json-out", g.json_out, "also write the JSON report to this file");
  bool no_timing = false;
  app.add_flag("--no-timing", no_timing, "leave time_ms empty so output bytes are reproducible");

  PipelineFlags flags;
  std::string pair_dir, dataset_dir, pose_out, matches_out, pose_in, render_out;
  std::vector<int> sweep = kDefaultSubsetSweep;
  int repeats = 3;
  SynthOptions synth;

  auto* reg = app.add_subcommand("register", "register one pair directory");
  reg->add_option("pair", pair_dir, "pair directory with 0/ and 1/")->required();
  reg->add_option("--pose-out", pose_out, "predicted pose file (default <pair>/predicted_pose.txt)");
  reg->add_option("--matches-out", matches_out, "write correspondences as text");
  flags.attach(*reg);

  auto* eval = app.add_subcommand("evaluate", "register and score every pair under a directory");
  eval->add_option("dataset", dataset_dir, "directory of pair directories")->required();
  flags.attach(*eval);

  auto* render = app.add_subcommand("render", "cross-render a pair and report the losses");
  render->add_option("pair", pair_dir, "pair directory")->required();
  render->add_option("--pose", pose_in, "3x4 pose mapping frame 0 into frame 1 (default: ground truth)");
  render->add_option("--out", render_out, "output directory")->required();
  flags.attach(*render);

  auto* bench = app.add_subcommand("benchmark", "subset-count sweep over a dataset");
  bench->add_option("dataset", dataset_dir, "directory of at least 10 pairs with ground truth")
      ->required();
  bench->add_option("--sweep", sweep, "subset counts")->delimiter(',');
  bench->add_option("--repeats", repeats, "fit repetitions per pair; the fastest is timed");
  flags.attach(*bench);

  auto* syn = app.add_subcommand("synth", "generate synthetic pairs");
  syn->add_option("--out", synth.out, "output directory")->required();
  syn->add_option("--rot-deg", synth.rot_deg, "rotation between the views, degrees");
  syn->add_option("--trans-m", synth.trans_m, "translation between the views, meters");
  syn->add_option("--max-rot-deg", synth.max_rot_deg, "draw rotation uniformly from [0, max]");
  syn->add_option("--max-trans-m", synth.max_trans_m, "draw translation uniformly from [0, max]");
  syn->add_option("--size", synth.size, "image size HxW");
  syn->add_option("--count", synth.count, "number of pairs (pair_NNNN subdirectories when > 1)");
  syn->add_option("--depth-noise", synth.depth_noise, "Gaussian depth noise sigma, meters");
  syn->add_option("--dropout", synth.dropout, "per-pixel depth dropout probability");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }
  g.timing = !no_timing;

  try {
    json out;
    if (*reg) {
      out = run_register(pair_dir, flags.resolve(g), g, pose_out, matches_out);
    } else if (*eval) {
      out = run_evaluate(dataset_dir, flags.resolve(g), g);
    } else if (*render) {
      out = run_render(pair_dir, flags.resolve(g), pose_in, render_out);
    } else if (*bench) {
      out = run_benchmark(dataset_dir, flags.resolve(g), g, sweep, repeats);
    } else if (*syn) {
      out = run_synth(synth, g.seed.value_or(0));
    }
    emit(out, g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
