// mvkd: train a ViT teacher, distill it into a hybrid conv/transformer
// student, then evaluate, explain and benchmark the result.
//
// Subcommands: synth, train-teacher, train-baseline, distill, eval, gradcam,
// bench. See --help on each; all accept --seed, --config (JSON), --out.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvkd/bench.hpp"
#include "mvkd/checkpoint.hpp"
#include "mvkd/dataset.hpp"
#include "mvkd/gradcam.hpp"
#include "mvkd/losses.hpp"
#include "mvkd/metrics.hpp"
#include "mvkd/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code_for(mvkd::ErrorKind kind) {
  using K = mvkd::ErrorKind;
  switch (kind) {
    case K::InvalidConfig:
    case K::InvalidParameter:
      return 1;  // bad flags / config file
    case K::EmptyDataset:
    case K::InvalidDataset:
    case K::DecodeError:
    case K::StratificationError:
    case K::FormatError:
    case K::CorruptCheckpoint:
    case K::UnsupportedModel:
    case K::IoError:
      return 2;  // bad data or files
    default:
      return 3;  // runtime / numeric
  }
}

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::optional<std::string> out_dir;
  std::string name;
};

void add_common(CLI::App* cmd, CommonFlags& flags, const std::string& default_name) {
  flags.name = default_name;
  cmd->add_option("--seed", flags.seed, "Seed for init, shuffling and synthesis");
  cmd->add_option("--config", flags.config_path, "JSON config file (flags override it)");
  cmd->add_option("--out", flags.out_dir, "Output root directory (default: runs)");
  cmd->add_option("--name", flags.name, "Run directory name under --out");
}

// defaults <- config file <- flags, in that order.
mvkd::RunConfig resolve_config(const CommonFlags& flags) {
  mvkd::RunConfig cfg;
  if (!flags.config_path.empty()) {
    std::ifstream in(flags.config_path);
    if (!in) mvkd::raise(mvkd::ErrorKind::IoError, "cannot open config: " + flags.config_path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
      mvkd::raise(mvkd::ErrorKind::InvalidConfig, "config is not valid JSON: " + flags.config_path);
    }
    cfg.apply_json(j);
  }
  if (flags.seed) cfg.set_seed(*flags.seed);
  if (flags.out_dir) cfg.out_dir = *flags.out_dir;
  return cfg;
}

fs::path prepare_run_dir(const mvkd::RunConfig& cfg, const std::string& name) {
  const fs::path dir = fs::path(cfg.out_dir) / name;
  fs::create_directories(dir);
  std::ofstream out(dir / "config.resolved.json");
  out << cfg.to_json().dump(2) << '\n';
  if (!out) mvkd::raise(mvkd::ErrorKind::IoError, "cannot write config.resolved.json");
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) mvkd::raise(mvkd::ErrorKind::IoError, "cannot write " + path.string());
}

void write_history_jsonl(const fs::path& path, const mvkd::TrainState& state) {
  std::ofstream out(path);
  for (const auto& rec : state.history) {
    out << json{{"epoch", rec.epoch},
                {"train_loss", rec.train_loss},
                {"val_acc", rec.val_acc},
                {"lr", rec.lr},
                {"wall_time_s", rec.wall_time_s}}
               .dump()
        << '\n';
  }
  if (!out) mvkd::raise(mvkd::ErrorKind::IoError, "cannot write " + path.string());
}

mvkd::FolderDataset open_dataset(const mvkd::RunConfig& cfg, const std::string& data_dir) {
  mvkd::DatasetManifest manifest = mvkd::load_image_folder(data_dir);
  manifest = mvkd::split_dataset(manifest, cfg.split_fractions, cfg.distill.seed);
  return mvkd::FolderDataset(data_dir, std::move(manifest), cfg.image_size);
}

void save_training_run(const fs::path& dir, const mvkd::TrainResult& result,
                       const mvkd::Dataset& dataset, std::uint64_t seed) {
  mvkd::save_checkpoint(result.model, mvkd::history_to_meta(result.state, seed),
                        (dir / "checkpoint.mvkd").string());
  write_history_jsonl(dir / "history.jsonl", result.state);
  write_text(dir / "manifest.json", json(dataset.manifest()).dump(2) + "\n");
  std::cout << "best val_acc " << result.state.best_val << " (epoch " << result.state.best_epoch
            << ") over " << result.state.history.size() << " epochs\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Soft-target knowledge distillation for fire classifiers"};
  app.require_subcommand(1);
  int exit_code = 0;

  // ---- synth -------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Write a synthetic fire dataset as a PPM folder tree");
  CommonFlags synth_flags;
  add_common(synth, synth_flags, "dataset");
  std::optional<int> synth_per_class, synth_classes, synth_size;
  std::optional<std::string> synth_hardness;
  synth->add_option("--per-class", synth_per_class, "Images per class (default 100)");
  synth->add_option("--classes", synth_classes, "2 or 12 (default 2)");
  synth->add_option("--hardness", synth_hardness, "easy | hard (default easy)")
      ->check(CLI::IsMember({"easy", "hard"}));
  synth->add_option("--image-size", synth_size, "Square image size (default 64)");
  synth->callback([&] {
    mvkd::RunConfig cfg = resolve_config(synth_flags);
    if (synth_per_class) cfg.synth.num_per_class = *synth_per_class;
    if (synth_classes) cfg.synth.num_classes = *synth_classes;
    if (synth_size) cfg.synth.image_size = *synth_size;
    if (synth_hardness) {
      cfg.synth.hardness =
          *synth_hardness == "hard" ? mvkd::SynthHardness::Hard : mvkd::SynthHardness::Easy;
    }
    const fs::path dir = prepare_run_dir(cfg, synth_flags.name);
    const auto names = mvkd::synth_class_names(cfg.synth.num_classes);
    for (int label = 0; label < cfg.synth.num_classes; ++label) {
      fs::create_directories(dir / names[static_cast<std::size_t>(label)]);
      for (int i = 0; i < cfg.synth.num_per_class; ++i) {
        char file[32];
        std::snprintf(file, sizeof(file), "img_%05d.ppm", i);
        mvkd::write_ppm((dir / names[static_cast<std::size_t>(label)] / file).string(),
                        mvkd::tensor_to_image(mvkd::synth_image(cfg.synth, label, i)));
      }
    }
    std::cout << "wrote " << cfg.synth.num_classes * cfg.synth.num_per_class << " images to " << dir
              << "\n";
  });

  // ---- shared trainer flags ----------------------------------------------
  struct TrainFlags {
    CommonFlags common;
    std::string data_dir;
    std::optional<int> epochs, batch_size, patience, classes, image_size;
    std::optional<double> lr, alpha, temperature, scale;
    std::optional<std::string> student_kind;
  };
  auto add_train_flags = [](CLI::App* cmd, TrainFlags& flags, const std::string& default_name) {
    add_common(cmd, flags.common, default_name);
    cmd->add_option("--data", flags.data_dir, "Dataset root (class-per-folder PPM tree)")
        ->required();
    cmd->add_option("--epochs", flags.epochs, "Epoch budget (default 300, early stopping applies)");
    cmd->add_option("--batch-size", flags.batch_size, "Mini-batch size (default 16)");
    cmd->add_option("--patience", flags.patience, "Early-stopping patience (default 10)");
    cmd->add_option("--classes", flags.classes, "Number of classes (default 2)");
    cmd->add_option("--image-size", flags.image_size, "Model input size (default 64)");
    cmd->add_option("--lr", flags.lr, "Learning rate (default 1e-4)");
    cmd->add_option("--scale", flags.scale, "Student width multiplier (default 0.25)");
    cmd->add_option("--student-kind", flags.student_kind, "student_s | student_xs")
        ->check(CLI::IsMember({"student_s", "student_xs"}));
  };
  auto apply_train_flags = [](const TrainFlags& flags, mvkd::RunConfig& cfg, bool teacher_phase) {
    if (flags.epochs) (teacher_phase ? cfg.distill.epochs_teacher : cfg.distill.epochs_student) =
        *flags.epochs;
    if (flags.batch_size) cfg.distill.batch_size = *flags.batch_size;
    if (flags.patience) cfg.distill.patience = *flags.patience;
    if (flags.classes) {
      cfg.student.num_classes = *flags.classes;
      cfg.teacher.num_classes = *flags.classes;
    }
    if (flags.image_size) {
      cfg.image_size = *flags.image_size;
      cfg.student.input_h = cfg.student.input_w = *flags.image_size;
      cfg.teacher.input_h = cfg.teacher.input_w = *flags.image_size;
    }
    if (flags.lr) {
      (teacher_phase ? cfg.distill.lr_teacher : cfg.distill.lr_student) = *flags.lr;
    }
    if (flags.scale) cfg.student.scale = *flags.scale;
    if (flags.student_kind) {
      json patch = {{"student", {{"kind", *flags.student_kind}}}};
      cfg.apply_json(patch);
    }
    cfg.validate();
  };

  // ---- train-teacher -------------------------------------------------------
  auto* tt = app.add_subcommand("train-teacher", "Phase 1: supervised ViT teacher training");
  auto tt_flags = std::make_shared<TrainFlags>();
  add_train_flags(tt, *tt_flags, "teacher");
  tt->callback([&, tt_flags] {
    mvkd::RunConfig cfg = resolve_config(tt_flags->common);
    apply_train_flags(*tt_flags, cfg, /*teacher_phase=*/true);
    const fs::path dir = prepare_run_dir(cfg, tt_flags->common.name);
    mvkd::FolderDataset dataset = open_dataset(cfg, tt_flags->data_dir);
    mvkd::TrainResult result = mvkd::train_teacher(dataset, cfg.distill, cfg.teacher);
    save_training_run(dir, result, dataset, cfg.distill.seed);
  });

  // ---- train-baseline (student without KD) ---------------------------------
  auto* tb = app.add_subcommand("train-baseline", "Student trained on labels only (no KD)");
  auto tb_flags = std::make_shared<TrainFlags>();
  add_train_flags(tb, *tb_flags, "baseline");
  tb->callback([&, tb_flags] {
    mvkd::RunConfig cfg = resolve_config(tb_flags->common);
    apply_train_flags(*tb_flags, cfg, /*teacher_phase=*/false);
    const fs::path dir = prepare_run_dir(cfg, tb_flags->common.name);
    mvkd::FolderDataset dataset = open_dataset(cfg, tb_flags->data_dir);
    mvkd::TrainResult result = mvkd::train_student_baseline(dataset, cfg.distill, cfg.student);
    save_training_run(dir, result, dataset, cfg.distill.seed);
  });

  // ---- distill ---------------------------------------------------------------
  auto* ds = app.add_subcommand("distill", "Phase 2: soft-target distillation into the student");
  auto ds_flags = std::make_shared<TrainFlags>();
  std::string teacher_ckpt;
  add_train_flags(ds, *ds_flags, "distill");
  ds->add_option("--teacher", teacher_ckpt, "Teacher checkpoint from train-teacher")->required();
  ds->add_option("--alpha", ds_flags->alpha, "KD loss weight (default 0.1)");
  ds->add_option("--temperature", ds_flags->temperature, "Softmax temperature (default 2)");
  ds->callback([&, ds_flags] {
    mvkd::RunConfig cfg = resolve_config(ds_flags->common);
    if (ds_flags->alpha) cfg.distill.alpha = *ds_flags->alpha;
    if (ds_flags->temperature) cfg.distill.temperature = *ds_flags->temperature;
    apply_train_flags(*ds_flags, cfg, /*teacher_phase=*/false);
    const fs::path dir = prepare_run_dir(cfg, ds_flags->common.name);
    mvkd::FolderDataset dataset = open_dataset(cfg, ds_flags->data_dir);
    mvkd::Model<float> teacher = mvkd::load_checkpoint(teacher_ckpt).model;
    mvkd::TrainResult result = mvkd::distill_student(dataset, cfg.distill, cfg.student, teacher);
    save_training_run(dir, result, dataset, cfg.distill.seed);
  });

  // ---- eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  CommonFlags ev_common;
  add_common(ev, ev_common, "eval");
  std::string ev_checkpoint, ev_data, ev_split = "test";
  ev->add_option("--checkpoint", ev_checkpoint, "Model checkpoint")->required();
  ev->add_option("--data", ev_data, "Dataset root")->required();
  ev->add_option("--split", ev_split, "train | val | test (default test)")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->callback([&] {
    mvkd::RunConfig cfg = resolve_config(ev_common);
    mvkd::Model<float> model = mvkd::load_checkpoint(ev_checkpoint).model;
    cfg.image_size = model.config().input_h;
    const fs::path dir = prepare_run_dir(cfg, ev_common.name);
    mvkd::FolderDataset dataset = open_dataset(cfg, ev_data);
    const mvkd::Split split = ev_split == "train" ? mvkd::Split::Train
                              : ev_split == "val" ? mvkd::Split::Val
                                                  : mvkd::Split::Test;
    const auto indices = dataset.manifest().split_indices(split);
    const auto predictions =
        mvkd::predict_labels(model, dataset, split, cfg.distill.batch_size);
    std::vector<int> truths;
    truths.reserve(indices.size());
    for (auto idx : indices) {
      truths.push_back(dataset.manifest().entries[static_cast<std::size_t>(idx)].label);
    }
    const mvkd::ConfusionMatrix cm = mvkd::confusion_matrix(
        truths, predictions, dataset.num_classes(), dataset.manifest().class_names);
    const mvkd::MetricsReport report = mvkd::metrics(cm);
    write_text(dir / "metrics.json", json(report).dump(2) + "\n");
    write_text(dir / "confusion.csv", cm.to_csv());
    write_text(dir / "manifest.json", json(dataset.manifest()).dump(2) + "\n");
    std::cout << "split " << ev_split << ": accuracy " << report.accuracy << ", macro_f1 "
              << report.macro_f1 << " over " << report.sample_count << " samples\n";
  });

  // ---- gradcam ------------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcam", "Export a Grad-CAM overlay for one image");
  CommonFlags gc_common;
  add_common(gc, gc_common, "gradcam");
  std::string gc_checkpoint, gc_image, gc_layer = "features";
  int gc_class = -1;
  gc->add_option("--checkpoint", gc_checkpoint, "Model checkpoint")->required();
  gc->add_option("--image", gc_image, "Input PPM image")->required();
  gc->add_option("--class-index", gc_class, "Target class (default: predicted class)");
  gc->add_option("--layer", gc_layer, "Captured layer name (default: features)");
  gc->callback([&] {
    mvkd::RunConfig cfg = resolve_config(gc_common);
    const fs::path dir = prepare_run_dir(cfg, gc_common.name);
    mvkd::Model<float> model = mvkd::load_checkpoint(gc_checkpoint).model;
    const mvkd::Tensor<float> image =
        mvkd::preprocess(mvkd::read_ppm(gc_image), model.config().input_h);
    int target = gc_class;
    if (target < 0) {
      mvkd::NoGradGuard no_grad;
      const auto logits = model.forward(
          mvkd::reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)}));
      target = 0;
      for (std::int64_t k = 1; k < logits.dim(1); ++k) {
        if (logits.data()[k] > logits.data()[target]) target = static_cast<int>(k);
      }
    }
    const mvkd::Heatmap heatmap = mvkd::grad_cam(model, image, target, gc_layer);
    mvkd::render_overlay(heatmap, mvkd::tensor_to_image(image), (dir / "overlay.ppm").string());
    std::cout << "wrote " << (dir / "overlay.ppm") << " (class " << target << ")\n";
  });

  // ---- bench -----------------------------------------------------------------------
  auto* bn = app.add_subcommand("bench", "Measure inference throughput of a checkpoint");
  CommonFlags bn_common;
  add_common(bn, bn_common, "bench");
  std::string bn_checkpoint, bn_csv;
  mvkd::BenchOptions bn_options;
  bn->add_option("--checkpoint", bn_checkpoint, "Model checkpoint")->required();
  bn->add_option("--batch", bn_options.batch, "Batch size (default 1)");
  bn->add_option("--warmup", bn_options.warmup_iters, "Warmup iterations (default 20)");
  bn->add_option("--iters", bn_options.measured_iters, "Measured iterations (default 100)");
  bn->add_option("--threads", bn_options.threads, "Parallel inference workers (default 1)");
  bn->add_option("--csv", bn_csv, "Append the report to this CSV file");
  bn->callback([&] {
    mvkd::RunConfig cfg = resolve_config(bn_common);
    const fs::path dir = prepare_run_dir(cfg, bn_common.name);
    mvkd::Model<float> model = mvkd::load_checkpoint(bn_checkpoint).model;
    const mvkd::BenchReport report = mvkd::bench_fps(model, bn_options);
    write_text(dir / "bench.json", json(report).dump(2) + "\n");
    if (!bn_csv.empty()) {
      const bool fresh = !fs::exists(bn_csv);
      std::ofstream csv(bn_csv, std::ios::app);
      if (fresh) csv << mvkd::bench_csv_header() << '\n';
      csv << mvkd::bench_csv_row(report) << '\n';
      if (!csv) mvkd::raise(mvkd::ErrorKind::IoError, "cannot append to " + bn_csv);
    }
    std::cout << report.model_id << ": " << report.fps << " fps, p50 " << report.p50_ms
              << " ms, size " << report.model_size_bytes << " bytes\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints usage text / help
    return code == 0 ? 0 : 1;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mvkd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
