// SPDX-License-Identifier: Apache-2.0
//
// iocf: synthesize data, train, evaluate, run tiled inference, print dataset
// statistics and serve the annotation API.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "iocf/checkpoint.hpp"
#include "iocf/config.hpp"
#include "iocf/error.hpp"
#include "iocf/infer.hpp"
#include "iocf/server.hpp"
#include "iocf/synth.hpp"
#include "iocf/train.hpp"

namespace fs = std::filesystem;
using namespace iocf;

namespace {

struct SynthArgs {
  fs::path out;
  SynthOptions opt;
};

struct TrainArgs {
  fs::path data;
  fs::path out = "model.ckpt";
  fs::path log;
  fs::path config;
  std::string preset = "desk";
  std::vector<std::string> overrides;
  std::string val_split = "val";
  bool quiet = false;
};

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";
  std::optional<double> threshold;
  bool json = false;
};

struct InferArgs {
  fs::path checkpoint;
  fs::path image;
  fs::path out;
  std::optional<double> threshold;
};

struct StatsArgs {
  fs::path data;
  bool json = false;
};

struct ServeArgs {
  fs::path data;
  std::string host = "127.0.0.1";
  std::optional<int> port;
  std::optional<fs::path> static_dir;
};

std::size_t checkpoint_crop(const Checkpoint& c) {
  if (c.meta.contains("train") && c.meta["train"].contains("crop")) return c.meta["train"]["crop"].get<std::size_t>();
  return paper_train_config().crop;
}

double checkpoint_threshold(const Checkpoint& c, std::optional<double> flag) {
  if (flag) return *flag;
  if (c.meta.contains("train") && c.meta["train"].contains("threshold")) return c.meta["train"]["threshold"].get<double>();
  return paper_train_config().threshold;
}

int run_synth(const SynthArgs& a) {
  const SplitManifest m = generate_split(a.opt, a.out);
  std::cout << "wrote " << m.train.size() + m.val.size() + m.test.size() << " images to " << a.out.string() << "\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  TrainConfig cfg = preset_config(a.preset);
  if (!a.config.empty()) apply_config_file(cfg, a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  const DatasetLayout layout{a.data};
  const auto train_split = load_split(layout, "train");
  std::vector<Sample> val_split;
  if (cfg.eval_every != 0 && !a.val_split.empty()) val_split = load_split(layout, a.val_split);

  IocFormer model(cfg.model, cfg.seed);
  TrainOutputs outputs;
  outputs.checkpoint = a.out;
  if (!a.log.empty()) outputs.loss_log = a.log;
  const std::size_t total = cfg.total_steps(train_split.size());
  std::cerr << "training " << to_string(cfg.model.variant) << " for " << total << " steps on " << train_split.size()
            << " images (" << model.parameters().scalar_count() << " parameters)\n";
  const std::size_t every = std::max<std::size_t>(1, total / 20);
  const auto result = train(model, cfg, train_split, val_split, outputs, [&](const StepLog& s) {
    if (!a.quiet && (s.step % every == 0 || s.step == 1)) std::cerr << to_csv_row(s) << "\n";
  });
  std::cout << "checkpoint " << a.out.string() << "\n";
  if (result.best_val_mae) {
    std::cout << "best val mae " << *result.best_val_mae << " at step " << result.best_step << " -> "
              << best_checkpoint_path(a.out).string() << "\n";
  }
  return 0;
}

int run_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const IocFormer model = restore_model(ckpt);
  const auto samples = load_split(DatasetLayout{a.data}, a.split);
  if (samples.empty()) throw UsageError("split '" + a.split + "' has no images");
  const auto ev = evaluate_samples(ModelPredictor(model), samples, checkpoint_crop(ckpt), checkpoint_threshold(ckpt, a.threshold));
  std::cout << (a.json ? to_json(ev.report) + "\n" : to_text(ev.report));
  return 0;
}

int run_infer(const InferArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const IocFormer model = restore_model(ckpt);
  const Image image = read_ppm(a.image);
  const auto pred = predict_image(ModelPredictor(model), image, checkpoint_crop(ckpt), checkpoint_threshold(ckpt, a.threshold));
  const fs::path out = a.out.empty() ? fs::path(a.image).replace_extension(".pred.json") : a.out;
  write_predictions(a.image.filename().string(), image.width, image.height, pred.merged.points, out);
  std::cout << "count " << pred.count << "\n";
  std::cout << "tiles " << pred.plan.origins.size() << ", dropped in padding " << pred.merged.dropped_in_padding << "\n";
  std::cout << "predictions " << out.string() << "\n";
  return 0;
}

int run_stats(const StatsArgs& a) {
  const DatasetLayout layout{a.data};
  const SplitManifest m = read_manifest(layout.manifest());
  std::vector<AnnotationDoc> docs;
  for (const auto* list : {&m.train, &m.val, &m.test})
    for (const auto& name : *list) docs.push_back(read_annotations(layout.annotation(name)));
  if (docs.empty()) throw UsageError("dataset has no images");
  const auto stats = dataset_stats(docs);
  if (a.json) {
    std::cout << to_json(stats).dump(2) << "\n";
  } else {
    std::cout << "images=" << stats.images << "\ntotal=" << stats.total_points << "\nmin=" << stats.min_count
              << "\naverage=" << stats.average << "\nmax=" << stats.max_count << "\nhist_0_50=" << stats.histogram[0]
              << "\nhist_51_100=" << stats.histogram[1] << "\nhist_101_200=" << stats.histogram[2]
              << "\nhist_over_200=" << stats.histogram[3] << "\n";
  }
  return 0;
}

int run_serve(const ServeArgs& a) {
  int port = 8080;
  if (const char* env = std::getenv("IOCF_PORT")) {
    try {
      port = std::stoi(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("IOCF_PORT is not a port number: ") + env);
    }
  }
  if (a.port) port = *a.port;
  AnnotationService service(a.data);
  HttpServer server(service, a.static_dir);
  const int bound = server.bind(a.host, port);
  std::cout << "serving " << a.data.string() << " on http://" << a.host << ":" << bound << "\n" << std::flush;
  server.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Indiscernible object counting: synthetic data, training, evaluation and annotation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic dataset with train/val/test splits");
  c_synth->add_option("--out", synth.out, "Dataset directory")->required();
  c_synth->add_option("--train", synth.opt.sizes.train, "Training images")->capture_default_str();
  c_synth->add_option("--val", synth.opt.sizes.val, "Validation images")->capture_default_str();
  c_synth->add_option("--test", synth.opt.sizes.test, "Test images")->capture_default_str();
  c_synth->add_option("--width", synth.opt.scene.width, "Image width")->capture_default_str();
  c_synth->add_option("--height", synth.opt.scene.height, "Image height")->capture_default_str();
  c_synth->add_option("--count-min", synth.opt.count_min, "Fewest objects per image")->capture_default_str();
  c_synth->add_option("--count-max", synth.opt.count_max, "Most objects per image")->capture_default_str();
  c_synth->add_option("--indiscernibility", synth.opt.scene.indiscernibility, "0 = high contrast, 1 = texture-matched")
      ->capture_default_str();
  c_synth->add_option("--radius-min", synth.opt.scene.radius_min, "Smallest blob semi-axis")->capture_default_str();
  c_synth->add_option("--radius-max", synth.opt.scene.radius_max, "Largest blob semi-axis")->capture_default_str();
  c_synth->add_option("--min-separation", synth.opt.scene.min_separation, "Minimum center distance")->capture_default_str();
  c_synth->add_option("--seed", synth.opt.seed, "Random seed")->capture_default_str();
  c_synth->add_option("--threads", synth.opt.threads, "Worker threads (0 = all cores)")->capture_default_str();
  c_synth->add_flag("--png", synth.opt.png_previews, "Also write PNG copies of every image");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model on a dataset directory");
  c_train->add_option("--data", tr.data, "Dataset directory")->required();
  c_train->add_option("--out", tr.out, "Checkpoint path")->capture_default_str();
  c_train->add_option("--log", tr.log, "Loss log CSV path");
  c_train->add_option("--preset", tr.preset, "Base settings: desk or paper")->capture_default_str();
  c_train->add_option("--config", tr.config, "key = value config file applied over the preset");
  c_train->add_option("--set", tr.overrides, "Override one setting, key=value (repeatable)");
  c_train->add_option("--val-split", tr.val_split, "Split used for best-checkpoint selection")->capture_default_str();
  c_train->add_flag("--quiet", tr.quiet, "Suppress per-step progress");
  c_train->footer("Settings: " + [] {
    std::string keys;
    for (const auto& k : setting_keys()) keys += (keys.empty() ? "" : ", ") + k;
    return keys;
  }());

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate count metrics of a checkpoint on one split");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
  c_eval->add_option("--data", ev.data, "Dataset directory")->required();
  c_eval->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  c_eval->add_option("--threshold", ev.threshold, "Score threshold (default: the checkpoint's)");
  c_eval->add_flag("--json", ev.json, "Print JSON instead of key=value lines");

  InferArgs inf;
  auto* c_infer = app.add_subcommand("infer", "Run tiled inference on one PPM image");
  c_infer->add_option("--checkpoint", inf.checkpoint, "Checkpoint path")->required();
  c_infer->add_option("--image", inf.image, "Input image (binary PPM)")->required();
  c_infer->add_option("--out", inf.out, "Prediction JSON path (default: <image>.pred.json)");
  c_infer->add_option("--threshold", inf.threshold, "Score threshold (default: the checkpoint's)");

  StatsArgs st;
  auto* c_stats = app.add_subcommand("stats", "Print dataset count statistics");
  c_stats->add_option("--data", st.data, "Dataset directory")->required();
  c_stats->add_flag("--json", st.json, "Print JSON");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Serve the annotation API (and UI assets) for a dataset");
  c_serve->add_option("--data", sv.data, "Dataset directory")->required();
  c_serve->add_option("--host", sv.host, "Listen address")->capture_default_str();
  c_serve->add_option("--port", sv.port, "Port (default: $IOCF_PORT or 8080)");
  c_serve->add_option("--static", sv.static_dir, "Directory of built UI assets served at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_train->parsed()) return run_train(tr);
    if (c_eval->parsed()) return run_eval(ev);
    if (c_infer->parsed()) return run_infer(inf);
    if (c_stats->parsed()) return run_stats(st);
    if (c_serve->parsed()) return run_serve(sv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
