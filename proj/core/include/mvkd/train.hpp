#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mvkd/dataset.hpp"
#include "mvkd/model.hpp"
#include "mvkd/optimizer.hpp"

namespace mvkd {

// Every knob of the two-phase teacher-training / distillation procedure.
struct DistillConfig {
  double temperature = 2.0;
  double alpha = 0.1;
  double lr_teacher = 1e-4;
  double lr_student = 1e-4;
  double weight_decay = 1e-3;
  int batch_size = 16;
  int epochs_teacher = 300;
  int epochs_student = 300;
  int patience = 10;
  std::uint64_t seed = 42;

  void validate() const;
};

void to_json(nlohmann::json& j, const DistillConfig& cfg);
void from_json(const nlohmann::json& j, DistillConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_acc = 0;
  double lr = 0;
  double wall_time_s = 0;  // informational only; excluded from determinism checks
};

struct TrainState {
  int epoch = 0;  // epochs completed
  double best_val = 0;
  int best_epoch = -1;
  int epochs_since_improve = 0;
  std::vector<EpochRecord> history;
};

enum class EarlyStop { Continue, Stop };

// Strict-improvement rule: ties count as non-improvements; stop after
// `patience` consecutive epochs without a new best.
EarlyStop early_stopping_check(TrainState& state, double new_val_metric, int patience);

// Deterministic top-1 accuracy over a split (entries in manifest order).
double evaluate_accuracy(const Model<float>& model, const Dataset& dataset, Split split,
                         int batch_size);

// Predicted labels for a split, same order as manifest().split_indices(split).
std::vector<int> predict_labels(const Model<float>& model, const Dataset& dataset, Split split,
                                int batch_size);

struct TrainResult {
  Model<float> model;  // parameters restored to the best validation epoch
  TrainState state;
};

// Phase 1: supervised teacher training with cross-entropy.
TrainResult train_teacher(const Dataset& dataset, const DistillConfig& cfg,
                          const ModelConfig& teacher_cfg);

// Student trained on labels only (the no-KD baseline).
TrainResult train_student_baseline(const Dataset& dataset, const DistillConfig& cfg,
                                   const ModelConfig& student_cfg);

// Phase 2: student trained against the combined soft-target objective; the
// teacher runs in inference mode and is never updated.
TrainResult distill_student(const Dataset& dataset, const DistillConfig& cfg,
                            const ModelConfig& student_cfg, const Model<float>& teacher);

nlohmann::json history_to_meta(const TrainState& state, std::uint64_t seed);

}  // namespace mvkd
