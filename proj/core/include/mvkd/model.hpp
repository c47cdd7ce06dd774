#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mvkd/blocks.hpp"

namespace mvkd {

enum class ModelKind { StudentS, StudentXS, TeacherVit32 };

const char* to_string(ModelKind kind) noexcept;
ModelKind model_kind_from_string(const std::string& name);  // UnsupportedModel on unknown

// Architecture hyperparameters. Student widths/dims are base values scaled
// by `scale` (rounded to multiples of 8, floor 8; embed dims to multiples of
// the head count). Teacher fields are explicit and unscaled.
struct ModelConfig {
  ModelKind kind = ModelKind::StudentS;
  int num_classes = 2;
  int input_h = 224;
  int input_w = 224;
  double scale = 1.0;

  // Student (MobileViT-style) topology.
  int stem_channels = 16;
  std::array<int, 5> stage_channels{32, 64, 96, 128, 160};
  int stage2_repeats = 3;
  std::array<int, 3> mvit_dims{144, 192, 240};
  std::array<int, 3> mvit_depths{2, 4, 3};
  std::array<int, 3> mvit_patches{2, 2, 2};
  int final_channels = 640;
  int expansion = 4;
  int heads = 4;
  double mlp_ratio = 2.0;

  // Teacher (ViT patch-32) topology.
  int teacher_patch = 32;
  int teacher_dim = 768;
  int teacher_depth = 12;
  int teacher_heads = 12;
  double teacher_mlp_ratio = 4.0;

  static ModelConfig student_s(int num_classes = 2);
  static ModelConfig student_xs(int num_classes = 2);
  static ModelConfig teacher_vit32(int num_classes = 2);
  // Desk-scale presets: 64x64 input, scale 0.25 students, shallow teacher.
  static ModelConfig desk(ModelKind kind, int num_classes = 2);
  // Minimal configs for gradient checking (32x32 input, ~8-channel stages).
  static ModelConfig tiny(ModelKind kind, int num_classes = 2);

  void validate() const;  // InvalidConfig on violations

  int scaled_channels(int base) const;
  int scaled_dim(int base) const;

  bool is_student() const { return kind != ModelKind::TeacherVit32; }
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

namespace detail_model {

template <typename T>
struct StudentNet {
  Conv2dLayer<T> stem;
  MobileNetV2Block<T> stage1;
  std::vector<MobileNetV2Block<T>> stage2;
  MobileNetV2Block<T> down3, down4, down5;
  MobileViTBlock<T> mvit3, mvit4, mvit5;
  Conv2dLayer<T> final_conv;
  LinearLayer<T> head;
};

template <typename T>
struct TeacherNet {
  PatchEmbed<T> embed;
  std::vector<TransformerLayer<T>> encoder;
  LayerNormLayer<T> final_norm;
  LinearLayer<T> head;
};

template <typename T>
struct ModelImpl {
  ModelConfig cfg;
  ParamStore<T> params;
  std::optional<StudentNet<T>> student;
  std::optional<TeacherNet<T>> teacher;
};

}  // namespace detail_model

// Named spatial activations captured during a forward pass, in order.
template <typename T>
using ActivationTrace = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
class Model {
 public:
  Model() = default;

  // (config, seed) fully determine the parameters.
  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x, bool train_mode = false) const;
  // Also records named intermediate tensors (still attached to the graph).
  Tensor<T> forward_with_activations(const Tensor<T>& x, ActivationTrace<T>& trace) const;

  const ModelConfig& config() const { return impl_->cfg; }
  ParamStore<T>& params() { return impl_->params; }
  const ParamStore<T>& params() const { return impl_->params; }
  std::int64_t param_count() const { return impl_->params.param_count(); }
  bool defined() const { return impl_ != nullptr; }

 private:
  std::shared_ptr<detail_model::ModelImpl<T>> impl_;
};

using Modelf = Model<float>;
using Modeld = Model<double>;

}  // namespace mvkd
