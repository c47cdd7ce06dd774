#include "mvkd/train.hpp"

#include <chrono>
#include <functional>

#include <nlohmann/json.hpp>

#include "mvkd/losses.hpp"

namespace mvkd {

void DistillConfig::validate() const {
  if (!(temperature > 0)) raise(ErrorKind::InvalidConfig, "temperature must be > 0");
  if (alpha < 0 || alpha > 1) raise(ErrorKind::InvalidConfig, "alpha must lie in [0,1]");
  if (lr_teacher <= 0 || lr_student <= 0) raise(ErrorKind::InvalidConfig, "learning rates must be > 0");
  if (weight_decay < 0) raise(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
  if (batch_size < 1) raise(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (epochs_teacher < 0 || epochs_student < 0) raise(ErrorKind::InvalidConfig, "epochs must be >= 0");
  if (patience < 1) raise(ErrorKind::InvalidConfig, "patience must be >= 1");
}

void to_json(nlohmann::json& j, const DistillConfig& cfg) {
  j = nlohmann::json{{"temperature", cfg.temperature},
                     {"alpha", cfg.alpha},
                     {"lr_teacher", cfg.lr_teacher},
                     {"lr_student", cfg.lr_student},
                     {"weight_decay", cfg.weight_decay},
                     {"batch_size", cfg.batch_size},
                     {"epochs_teacher", cfg.epochs_teacher},
                     {"epochs_student", cfg.epochs_student},
                     {"patience", cfg.patience},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, DistillConfig& cfg) {
  j.at("temperature").get_to(cfg.temperature);
  j.at("alpha").get_to(cfg.alpha);
  j.at("lr_teacher").get_to(cfg.lr_teacher);
  j.at("lr_student").get_to(cfg.lr_student);
  j.at("weight_decay").get_to(cfg.weight_decay);
  j.at("batch_size").get_to(cfg.batch_size);
  j.at("epochs_teacher").get_to(cfg.epochs_teacher);
  j.at("epochs_student").get_to(cfg.epochs_student);
  j.at("patience").get_to(cfg.patience);
  j.at("seed").get_to(cfg.seed);
}

EarlyStop early_stopping_check(TrainState& state, double new_val_metric, int patience) {
  if (patience < 1) raise(ErrorKind::InvalidParameter, "patience must be >= 1");
  if (new_val_metric > state.best_val || state.best_epoch < 0) {
    state.best_val = new_val_metric;
    state.best_epoch = state.epoch;
    state.epochs_since_improve = 0;
    return EarlyStop::Continue;
  }
  ++state.epochs_since_improve;
  return state.epochs_since_improve >= patience ? EarlyStop::Stop : EarlyStop::Continue;
}

std::vector<int> predict_labels(const Model<float>& model, const Dataset& dataset, Split split,
                                int batch_size) {
  NoGradGuard no_grad;
  const auto indices = dataset.manifest().split_indices(split);
  if (indices.empty()) raise(ErrorKind::EmptyDataset, std::string("split '") + to_string(split) + "' is empty");
  std::vector<int> predictions;
  predictions.reserve(indices.size());
  std::size_t cursor = 0;
  while (cursor < indices.size()) {
    const std::size_t count = std::min(static_cast<std::size_t>(batch_size), indices.size() - cursor);
    std::vector<float> buffer;
    Shape image_shape;
    for (std::size_t i = 0; i < count; ++i) {
      Sample s = dataset.sample(indices[cursor + i]);
      if (i == 0) {
        image_shape = s.image.shape();
        buffer.reserve(count * static_cast<std::size_t>(s.image.size()));
      }
      buffer.insert(buffer.end(), s.image.data().begin(), s.image.data().end());
    }
    Tensor<float> images = Tensor<float>::from_data(
        {static_cast<std::int64_t>(count), image_shape[0], image_shape[1], image_shape[2]},
        std::move(buffer));
    Tensor<float> logits = model.forward(images);
    const std::int64_t c = logits.dim(1);
    for (std::size_t i = 0; i < count; ++i) {
      const float* row = logits.data().data() + static_cast<std::int64_t>(i) * c;
      int best = 0;
      for (std::int64_t k = 1; k < c; ++k) {
        if (row[k] > row[best]) best = static_cast<int>(k);
      }
      predictions.push_back(best);
    }
    cursor += count;
  }
  return predictions;
}

double evaluate_accuracy(const Model<float>& model, const Dataset& dataset, Split split,
                         int batch_size) {
  const auto indices = dataset.manifest().split_indices(split);
  const auto predictions = predict_labels(model, dataset, split, batch_size);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& entry = dataset.manifest().entries[static_cast<std::size_t>(indices[i])];
    if (predictions[i] == entry.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

namespace {

using BatchLossFn = std::function<Tensor<float>(const Model<float>& model, const Tensor<float>& images,
                                                const std::vector<int>& labels)>;

TrainResult run_training(const Dataset& dataset, const ModelConfig& model_cfg, int epochs,
                         double lr, const DistillConfig& cfg, const BatchLossFn& batch_loss) {
  cfg.validate();
  if (dataset.manifest().split_indices(Split::Train).empty()) {
    raise(ErrorKind::EmptyDataset, "train split is empty");
  }
  if (dataset.manifest().split_indices(Split::Val).empty() && epochs > 0) {
    raise(ErrorKind::EmptyDataset, "val split is empty");
  }
  if (model_cfg.num_classes != dataset.num_classes()) {
    raise(ErrorKind::InvalidConfig, "model classes (" + std::to_string(model_cfg.num_classes) +
                                        ") != dataset classes (" +
                                        std::to_string(dataset.num_classes()) + ")");
  }

  TrainResult result;
  result.model = Model<float>::build(model_cfg, cfg.seed);

  AdamWConfig opt_cfg;
  opt_cfg.lr = lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW<float> optimizer(result.model.params(), opt_cfg);

  std::vector<std::vector<float>> best_params;
  const auto snapshot = [&] {
    best_params.clear();
    for (const auto& [name, t] : result.model.params().entries()) best_params.push_back(t.data());
  };

  const auto wall_clock = [] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double t0 = wall_clock();
    double loss_sum = 0;
    std::int64_t seen = 0;
    BatchIterator batches(dataset, Split::Train, cfg.batch_size, cfg.seed, epoch);
    while (auto batch = batches.next()) {
      optimizer.zero_grad();
      Tensor<float> loss = batch_loss(result.model, batch->images, batch->labels);
      loss.backward();
      optimizer.step();
      const auto batch_n = static_cast<std::int64_t>(batch->labels.size());
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch_n);
      seen += batch_n;
    }
    const double val_acc = evaluate_accuracy(result.model, dataset, Split::Val, cfg.batch_size);

    result.state.epoch = epoch;
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(seen);
    record.val_acc = val_acc;
    record.lr = lr;
    record.wall_time_s = wall_clock() - t0;
    result.state.history.push_back(record);

    const int best_before = result.state.best_epoch;
    const EarlyStop decision = early_stopping_check(result.state, val_acc, cfg.patience);
    if (result.state.best_epoch != best_before) snapshot();
    if (decision == EarlyStop::Stop) break;
  }
  result.state.epoch = static_cast<int>(result.state.history.size());

  if (!best_params.empty()) {
    // Copy into the live nodes: layer structs share them by handle.
    std::size_t i = 0;
    for (const auto& [name, t] : result.model.params().entries()) {
      result.model.params().find(name)->mutable_data() = std::move(best_params[i++]);
    }
  }
  return result;
}

}  // namespace

TrainResult train_teacher(const Dataset& dataset, const DistillConfig& cfg,
                          const ModelConfig& teacher_cfg) {
  return run_training(dataset, teacher_cfg, cfg.epochs_teacher, cfg.lr_teacher, cfg,
                      [](const Model<float>& model, const Tensor<float>& images,
                         const std::vector<int>& labels) {
                        return cross_entropy(model.forward(images, /*train_mode=*/true), labels);
                      });
}

TrainResult train_student_baseline(const Dataset& dataset, const DistillConfig& cfg,
                                   const ModelConfig& student_cfg) {
  return run_training(dataset, student_cfg, cfg.epochs_student, cfg.lr_student, cfg,
                      [](const Model<float>& model, const Tensor<float>& images,
                         const std::vector<int>& labels) {
                        return cross_entropy(model.forward(images, /*train_mode=*/true), labels);
                      });
}

TrainResult distill_student(const Dataset& dataset, const DistillConfig& cfg,
                            const ModelConfig& student_cfg, const Model<float>& teacher) {
  if (!teacher.defined()) raise(ErrorKind::InvalidConfig, "teacher model is undefined");
  if (teacher.config().num_classes != student_cfg.num_classes) {
    raise(ErrorKind::InvalidConfig, "teacher and student class counts differ");
  }
  const double temperature = cfg.temperature;
  const double alpha = cfg.alpha;
  return run_training(
      dataset, student_cfg, cfg.epochs_student, cfg.lr_student, cfg,
      [&teacher, temperature, alpha](const Model<float>& model, const Tensor<float>& images,
                                     const std::vector<int>& labels) {
        Tensor<float> teacher_logits;
        {
          NoGradGuard no_grad;  // inference mode: no graph, no updates
          teacher_logits = teacher.forward(images);
        }
        Tensor<float> student_logits = model.forward(images, /*train_mode=*/true);
        return kd_total_loss(student_logits, teacher_logits, labels, temperature, alpha);
      });
}

nlohmann::json history_to_meta(const TrainState& state, std::uint64_t seed) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& rec : state.history) {
    history.push_back({{"epoch", rec.epoch}, {"train_loss", rec.train_loss}, {"val_acc", rec.val_acc}});
  }
  return nlohmann::json{{"epoch", state.epoch},
                        {"best_epoch", state.best_epoch},
                        {"best_val", state.best_val},
                        {"seed", seed},
                        {"history", std::move(history)}};
}

}  // namespace mvkd
