// rdn: synth | train | describe | match | eval
//
// Configuration precedence: command-line flags > RDN_* environment
// variables > config file (key = value lines).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rdn/io.hpp"
#include "rdn/matching.hpp"
#include "rdn/model.hpp"
#include "rdn/runconfig.hpp"
#include "rdn/synth.hpp"
#include "rdn/trainer.hpp"

namespace fs = std::filesystem;
using namespace rdn;

namespace {

// flags > env > file, applied per key.
struct Layered {
  RunConfig cfg;

  std::int64_t pick_int(const CLI::Option* opt, std::int64_t flag_value,
                        const std::string& key, std::int64_t fallback) const {
    if (opt && opt->count() > 0) return flag_value;
    return cfg.get_int(key, fallback);
  }
  double pick_double(const CLI::Option* opt, double flag_value,
                     const std::string& key, double fallback) const {
    if (opt && opt->count() > 0) return flag_value;
    return cfg.get_double(key, fallback);
  }
  std::string pick_str(const CLI::Option* opt, const std::string& flag_value,
                       const std::string& key,
                       const std::string& fallback) const {
    if (opt && opt->count() > 0) return flag_value;
    return cfg.get(key, fallback);
  }
};

RdnConfig profile_config(const std::string& profile, std::uint64_t seed) {
  RdnConfig c;
  if (profile == "full") {
    c = RdnConfig::full();
  } else if (profile == "quarter") {
    c = RdnConfig::quarter();
  } else {
    throw ConfigError("unknown profile '" + profile + "' (full|quarter)");
  }
  c.seed = seed;
  return c;
}

std::vector<double> parse_thresholds(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw ConfigError("empty threshold list");
  return out;
}

std::string pair_name(int index, const std::string& suffix) {
  char name[64];
  std::snprintf(name, sizeof name, "pair_%04d_%s", index, suffix.c_str());
  return name;
}

TrainingSample load_sample(const ManifestEntry& e) {
  TrainingSample s;
  s.image1 = read_image(e.image1);
  s.image2 = read_image(e.image2);
  s.corrs = read_correspondences(e.corrs);
  return s;
}

// Side-by-side overlay with match segments, presentation only.
void write_overlay(const Tensor& a, const Tensor& b,
                   const std::vector<Match>& matches,
                   const std::vector<Keypoint>& kps_a,
                   const std::vector<Keypoint>& kps_b,
                   const std::string& path) {
  const int h = std::max(a.height, b.height);
  Tensor canvas(h, a.width + b.width, 3);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      for (int c = 0; c < 3; ++c) canvas.at(y, x, c) = a.at(y, x, c);
    }
  }
  for (int y = 0; y < b.height; ++y) {
    for (int x = 0; x < b.width; ++x) {
      for (int c = 0; c < 3; ++c) canvas.at(y, x + a.width, c) = b.at(y, x, c);
    }
  }
  for (const Match& m : matches) {
    const Keypoint& ka = kps_a.at(m.idx_a);
    const Keypoint kb{kps_b.at(m.idx_b).x + a.width, kps_b.at(m.idx_b).y};
    const int steps = std::max(std::abs(kb.x - ka.x), std::abs(kb.y - ka.y));
    for (int s = 0; s <= steps; ++s) {
      const double t = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
      const int y = static_cast<int>(std::lround(ka.y + t * (kb.y - ka.y)));
      const int x = static_cast<int>(std::lround(ka.x + t * (kb.x - ka.x)));
      if (y < 0 || y >= canvas.height || x < 0 || x >= canvas.width) continue;
      canvas.at(y, x, 0) = 0.0;
      canvas.at(y, x, 1) = 1.0;
      canvas.at(y, x, 2) = 0.0;
    }
  }
  write_image(canvas, path);
}

int cmd_synth(const Layered& layered, const CLI::Option* seed_opt,
              std::int64_t seed_flag, const CLI::Option* count_opt,
              std::int64_t count_flag, const std::vector<std::string>& images,
              int flat_fixture_size, int source_size,
              const std::string& out_dir, int grid_stride,
              const WarpSpec& warp_flags) {
  const std::uint64_t seed =
      static_cast<std::uint64_t>(layered.pick_int(seed_opt, seed_flag, "seed", 0));
  const std::int64_t count =
      layered.pick_int(count_opt, count_flag, "count", 1);
  if (count < 0) throw ConfigError("--count must be >= 0");

  fs::create_directories(out_dir);
  std::vector<Tensor> sources;
  for (const std::string& p : images) sources.push_back(read_image(p));

  std::vector<ManifestEntry> manifest;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t pair_seed =
        seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(i) + 1));
    Tensor source;
    if (!sources.empty()) {
      source = sources[i % sources.size()];
    } else if (flat_fixture_size > 0) {
      source = flat_fixture(flat_fixture_size, pair_seed);
    } else {
      source = random_texture(source_size, source_size, pair_seed);
    }
    WarpSpec spec = warp_flags;
    spec.seed = pair_seed;
    const TrainingPair pair = make_pair(source, spec, grid_stride);

    // Manifest entries stay relative so identical seeds give
    // byte-identical corpora in any directory.
    ManifestEntry e;
    e.image1 = pair_name(i, "1.ppm");
    e.image2 = pair_name(i, "2.ppm");
    e.model = pair_name(i, "model.txt");
    e.corrs = pair_name(i, "corr.txt");
    write_image(pair.image1, (fs::path(out_dir) / e.image1).string());
    write_image(pair.image2, (fs::path(out_dir) / e.image2).string());
    write_model(pair.h, (fs::path(out_dir) / e.model).string());
    write_correspondences(pair.corrs, (fs::path(out_dir) / e.corrs).string());
    manifest.push_back(std::move(e));
  }
  write_manifest(manifest, (fs::path(out_dir) / "manifest.txt").string());
  return 0;
}

int cmd_train(const Layered& layered, const std::string& manifest_path,
              const CLI::Option* epochs_opt, std::int64_t epochs_flag,
              const CLI::Option* lr_opt, double lr_flag,
              const CLI::Option* seed_opt, std::int64_t seed_flag,
              const CLI::Option* profile_opt, const std::string& profile_flag,
              const std::string& weights_out, const std::string& curve_out) {
  TrainConfig tc;
  tc.epochs = static_cast<int>(layered.pick_int(epochs_opt, epochs_flag, "epochs", 50));
  tc.lr0 = layered.pick_double(lr_opt, lr_flag, "lr", 1e-3);
  tc.seed = static_cast<std::uint64_t>(layered.pick_int(seed_opt, seed_flag, "seed", 0));
  const std::string profile =
      layered.pick_str(profile_opt, profile_flag, "profile", "quarter");
  const RdnConfig mc = profile_config(profile, tc.seed);

  std::vector<TrainingSample> dataset;
  for (const ManifestEntry& e : read_manifest(manifest_path)) {
    dataset.push_back(load_sample(e));
  }
  TrainResult result = train(dataset, init_weights(mc), mc, tc);
  save_weights(result.weights, weights_out);
  write_loss_curve(result.curve,
                   curve_out.empty() ? weights_out + ".curve" : curve_out);
  for (const EpochStat& e : result.curve) {
    std::cout << e.epoch << '\t' << e.mean_loss << '\t' << e.lr << '\n';
  }
  return 0;
}

int cmd_describe(const Layered& layered, const std::string& weights_path,
                 const std::string& image_path, const CLI::Option* stride_opt,
                 std::int64_t stride_flag, const CLI::Option* margin_opt,
                 std::int64_t margin_flag, const std::string& out_path) {
  const int stride =
      static_cast<int>(layered.pick_int(stride_opt, stride_flag, "stride", 8));
  const int margin =
      static_cast<int>(layered.pick_int(margin_opt, margin_flag, "margin", 16));
  const RdnWeights weights = load_weights(weights_path);
  const RdnConfig config = config_from_weights(weights);
  const Tensor image = read_image(image_path);
  const DescriptorField field = describe(image, weights, config);
  SparseDescriptors d;
  d.keypoints = uniform_grid(image.height, image.width, stride, margin);
  d.descriptors = sample_descriptors(field, d.keypoints);
  write_descriptors(d, out_path);
  return 0;
}

int cmd_match(const Layered& layered, const std::string& a_path,
              const std::string& b_path, const std::string& model_kind,
              const CLI::Option* threshold_opt, double threshold_flag,
              const CLI::Option* seed_opt, std::int64_t seed_flag,
              const std::string& out_path, const std::string& model_out,
              bool no_mutual, double ratio, const std::string& image_a,
              const std::string& image_b, const std::string& overlay) {
  const double threshold =
      layered.pick_double(threshold_opt, threshold_flag, "threshold", 3.0);
  const std::uint64_t seed =
      static_cast<std::uint64_t>(layered.pick_int(seed_opt, seed_flag, "seed", 0));

  const SparseDescriptors a = read_descriptors(a_path);
  const SparseDescriptors b = read_descriptors(b_path);
  std::vector<Match> matches =
      mutual_nn_match(a.descriptors, b.descriptors, !no_mutual);
  if (ratio > 0.0) {
    matches = ratio_filter(a.descriptors, b.descriptors, matches, ratio);
  }

  if (model_kind != "none") {
    const ModelKind kind = model_kind == "homography"
                               ? ModelKind::kHomography
                               : ModelKind::kFundamental;
    std::vector<PointPair> pairs;
    for (const Match& m : matches) {
      const Keypoint& ka = a.keypoints.at(m.idx_a);
      const Keypoint& kb = b.keypoints.at(m.idx_b);
      pairs.push_back({static_cast<double>(ka.x), static_cast<double>(ka.y),
                       static_cast<double>(kb.x), static_cast<double>(kb.y)});
    }
    const RansacResult result = ransac(pairs, kind, threshold, 2000, seed);
    std::vector<Match> inliers;
    for (int idx : result.inlier_indices) inliers.push_back(matches[idx]);
    matches = std::move(inliers);
    write_model(result.model,
                model_out.empty() ? out_path + ".model" : model_out);
  }
  write_matches(matches, a.keypoints, b.keypoints, out_path);
  if (!overlay.empty()) {
    if (image_a.empty() || image_b.empty()) {
      throw ConfigError("--overlay needs --image-a and --image-b");
    }
    write_overlay(read_image(image_a), read_image(image_b), matches,
                  a.keypoints, b.keypoints, overlay);
  }
  return 0;
}

constexpr double kFlatGradientThreshold = 0.01;

int cmd_eval(const Layered& layered, const std::string& manifest_path,
             const std::string& weights_path, const CLI::Option* thr_opt,
             const std::string& thr_flag, const CLI::Option* ablation_opt,
             const std::string& ablation_flag, const CLI::Option* stride_opt,
             std::int64_t stride_flag, const CLI::Option* margin_opt,
             std::int64_t margin_flag, const std::string& out_path) {
  const std::vector<double> thresholds =
      parse_thresholds(layered.pick_str(thr_opt, thr_flag, "thresholds", "1,3,5"));
  const std::string ablation =
      layered.pick_str(ablation_opt, ablation_flag, "ablation", "full");
  if (ablation != "full" && ablation != "fen-only") {
    throw ConfigError("unknown ablation '" + ablation + "' (full|fen-only)");
  }
  const int stride =
      static_cast<int>(layered.pick_int(stride_opt, stride_flag, "stride", 8));
  const int margin =
      static_cast<int>(layered.pick_int(margin_opt, margin_flag, "margin", 16));

  const RdnWeights weights = load_weights(weights_path);
  const RdnConfig config = config_from_weights(weights);

  std::ostringstream report;
  report << "# rdn eval: ablation=" << ablation
         << " flat-threshold=" << kFlatGradientThreshold
         << " stride=" << stride << " margin=" << margin << "\n";
  report << "# scope\tpair\ttau\taccuracy\tcorrect\tmatches\n";

  struct Bucket {
    std::vector<long> correct;
    long matches = 0;
  };
  std::vector<Bucket> agg(3);  // overall, flat, textured
  for (Bucket& b : agg) b.correct.assign(thresholds.size(), 0);

  const std::vector<ManifestEntry> manifest = read_manifest(manifest_path);
  int pair_index = 0;
  for (const ManifestEntry& e : manifest) {
    const Tensor img1 = read_image(e.image1);
    const Tensor img2 = read_image(e.image2);
    const PlanarModel model = read_model(e.model);
    DescriptorField f1 = describe(img1, weights, config);
    DescriptorField f2 = describe(img2, weights, config);
    if (ablation == "fen-only") {
      f1 = fen_only_field(f1, config.epsilon);
      f2 = fen_only_field(f2, config.epsilon);
    }
    const std::vector<Keypoint> kps1 =
        uniform_grid(img1.height, img1.width, stride, margin);
    const std::vector<Keypoint> kps2 =
        uniform_grid(img2.height, img2.width, stride, margin);
    const std::vector<Match> matches = mutual_nn_match(
        sample_descriptors(f1, kps1), sample_descriptors(f2, kps2));

    // Per-pair stratified counting.
    std::vector<Bucket> local(3);
    for (Bucket& b : local) b.correct.assign(thresholds.size(), 0);
    for (const Match& m : matches) {
      const Keypoint& ka = kps1.at(m.idx_a);
      const Keypoint& kb = kps2.at(m.idx_b);
      double px, py;
      project_point(model.m, ka.x, ka.y, px, py);
      const double err = std::hypot(px - kb.x, py - kb.y);
      const bool flat =
          mean_gradient_magnitude(img1, ka) < kFlatGradientThreshold;
      for (int scope : {0, flat ? 1 : 2}) {
        ++local[scope].matches;
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
          if (err <= thresholds[t]) ++local[scope].correct[t];
        }
      }
    }
    const char* names[3] = {"pair", "pair-flat", "pair-textured"};
    for (int scope = 0; scope < 3; ++scope) {
      agg[scope].matches += local[scope].matches;
      for (std::size_t t = 0; t < thresholds.size(); ++t) {
        agg[scope].correct[t] += local[scope].correct[t];
        const double acc = local[scope].matches
                               ? static_cast<double>(local[scope].correct[t]) /
                                     local[scope].matches
                               : 0.0;
        report << names[scope] << '\t' << pair_index << '\t' << thresholds[t]
               << '\t' << acc << '\t' << local[scope].correct[t] << '\t'
               << local[scope].matches << '\n';
      }
    }
    ++pair_index;
  }
  const char* names[3] = {"aggregate", "aggregate-flat", "aggregate-textured"};
  for (int scope = 0; scope < 3; ++scope) {
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      const double acc =
          agg[scope].matches
              ? static_cast<double>(agg[scope].correct[t]) / agg[scope].matches
              : 0.0;
      report << names[scope] << "\t-\t" << thresholds[t] << '\t' << acc << '\t'
             << agg[scope].correct[t] << '\t' << agg[scope].matches << '\n';
    }
  }
  if (out_path.empty()) {
    std::cout << report.str();
  } else {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << report.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"region-based descriptor network toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "config file (key = value lines)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic pair corpus");
  std::vector<std::string> synth_images;
  std::int64_t synth_count = 1, synth_seed = 0;
  int synth_flat = 0, synth_size = 64, synth_stride = 8;
  std::string synth_out_dir = "corpus";
  WarpSpec warp;
  synth->add_option("--image", synth_images, "source image(s), PGM/PPM");
  auto* synth_count_opt = synth->add_option("--count", synth_count, "number of pairs");
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "corpus seed");
  synth->add_option("--out-dir", synth_out_dir, "output directory");
  synth->add_option("--flat-fixture", synth_flat,
                    "use flat-region fixtures of this size as sources");
  synth->add_option("--size", synth_size,
                    "random-texture source size when no --image given");
  synth->add_option("--grid-stride", synth_stride, "correspondence grid stride");
  synth->add_option("--max-rotation", warp.max_rotation_deg, "degrees");
  synth->add_option("--max-scale-log", warp.max_scale_log, "log scale range");
  synth->add_option("--max-translation", warp.max_translation, "pixels");
  synth->add_option("--max-perspective", warp.max_perspective,
                    "corner jitter fraction");
  synth->add_option("--brightness", warp.brightness_range, "brightness range");
  synth->add_option("--contrast", warp.contrast_range, "contrast range");
  synth->add_option("--noise-sigma", warp.noise_sigma, "noise sigma");

  // train
  auto* train_cmd = app.add_subcommand("train", "train on a pair manifest");
  std::string train_manifest, train_profile = "quarter";
  std::string train_weights_out = "rdn.weights", train_curve_out;
  std::int64_t train_epochs = 50, train_seed = 0;
  double train_lr = 1e-3;
  train_cmd->add_option("--manifest", train_manifest, "pair manifest")->required();
  auto* train_epochs_opt = train_cmd->add_option("--epochs", train_epochs, "epochs");
  auto* train_lr_opt = train_cmd->add_option("--lr", train_lr, "initial learning rate");
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "training seed");
  auto* train_profile_opt =
      train_cmd->add_option("--profile", train_profile, "full|quarter");
  train_cmd->add_option("--weights-out", train_weights_out, "weights output path");
  train_cmd->add_option("--curve-out", train_curve_out, "loss curve output path");

  // describe
  auto* describe_cmd =
      app.add_subcommand("describe", "extract grid-sampled descriptors");
  std::string desc_weights, desc_image, desc_out = "descriptors.rdnd";
  std::int64_t desc_stride = 8, desc_margin = 16;
  describe_cmd->add_option("--weights", desc_weights, "weights file")->required();
  describe_cmd->add_option("--image", desc_image, "input image")->required();
  auto* desc_stride_opt = describe_cmd->add_option("--stride", desc_stride, "grid stride");
  auto* desc_margin_opt = describe_cmd->add_option("--margin", desc_margin, "grid margin");
  describe_cmd->add_option("--out", desc_out, "descriptor output path");

  // match
  auto* match_cmd = app.add_subcommand("match", "match two descriptor files");
  std::string match_a, match_b, match_model = "homography";
  std::string match_out = "matches.txt", match_model_out;
  std::string match_image_a, match_image_b, match_overlay;
  std::int64_t match_seed = 0;
  double match_threshold = 3.0, match_ratio = 0.0;
  bool match_no_mutual = false;
  match_cmd->add_option("--a", match_a, "descriptor file A")->required();
  match_cmd->add_option("--b", match_b, "descriptor file B")->required();
  match_cmd->add_option("--model", match_model, "homography|fundamental|none")
      ->check(CLI::IsMember({"homography", "fundamental", "none"}));
  auto* match_thr_opt =
      match_cmd->add_option("--threshold", match_threshold, "inlier threshold");
  auto* match_seed_opt = match_cmd->add_option("--seed", match_seed, "RANSAC seed");
  match_cmd->add_option("--out", match_out, "match output path");
  match_cmd->add_option("--model-out", match_model_out, "model output path");
  match_cmd->add_flag("--no-mutual", match_no_mutual,
                      "one-directional nearest neighbors");
  match_cmd->add_option("--ratio", match_ratio, "Lowe ratio test (0 = off)");
  match_cmd->add_option("--image-a", match_image_a, "image A for --overlay");
  match_cmd->add_option("--image-b", match_image_b, "image B for --overlay");
  match_cmd->add_option("--overlay", match_overlay, "side-by-side overlay PPM");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "matching accuracy on a manifest");
  std::string eval_manifest, eval_weights, eval_thresholds = "1,3,5";
  std::string eval_ablation = "full", eval_out;
  std::int64_t eval_stride = 8, eval_margin = 16;
  eval_cmd->add_option("--manifest", eval_manifest, "pair manifest")->required();
  eval_cmd->add_option("--weights", eval_weights, "weights file")->required();
  auto* eval_thr_opt =
      eval_cmd->add_option("--thresholds", eval_thresholds, "comma-separated px");
  auto* eval_abl_opt =
      eval_cmd->add_option("--ablation", eval_ablation, "full|fen-only");
  auto* eval_stride_opt = eval_cmd->add_option("--stride", eval_stride, "grid stride");
  auto* eval_margin_opt = eval_cmd->add_option("--margin", eval_margin, "grid margin");
  eval_cmd->add_option("--out", eval_out, "report path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    Layered layered;
    if (config_path.empty() && fs::exists("rdn.conf")) config_path = "rdn.conf";
    layered.cfg = RunConfig::load(config_path);

    if (synth->parsed()) {
      return cmd_synth(layered, synth_seed_opt, synth_seed, synth_count_opt,
                       synth_count, synth_images, synth_flat, synth_size,
                       synth_out_dir, synth_stride, warp);
    }
    if (train_cmd->parsed()) {
      return cmd_train(layered, train_manifest, train_epochs_opt, train_epochs,
                       train_lr_opt, train_lr, train_seed_opt, train_seed,
                       train_profile_opt, train_profile, train_weights_out,
                       train_curve_out);
    }
    if (describe_cmd->parsed()) {
      return cmd_describe(layered, desc_weights, desc_image, desc_stride_opt,
                          desc_stride, desc_margin_opt, desc_margin, desc_out);
    }
    if (match_cmd->parsed()) {
      return cmd_match(layered, match_a, match_b, match_model, match_thr_opt,
                       match_threshold, match_seed_opt, match_seed, match_out,
                       match_model_out, match_no_mutual, match_ratio,
                       match_image_a, match_image_b, match_overlay);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(layered, eval_manifest, eval_weights, eval_thr_opt,
                      eval_thresholds, eval_abl_opt, eval_ablation,
                      eval_stride_opt, eval_stride, eval_margin_opt,
                      eval_margin, eval_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
