#include "mvkd/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace mvkd {

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::StudentS: return "student_s";
    case ModelKind::StudentXS: return "student_xs";
    case ModelKind::TeacherVit32: return "teacher_vit32";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "student_s") return ModelKind::StudentS;
  if (name == "student_xs") return ModelKind::StudentXS;
  if (name == "teacher_vit32") return ModelKind::TeacherVit32;
  raise(ErrorKind::UnsupportedModel, "unknown model kind: " + name);
}

namespace {

int round_multiple(double value, int multiple, int floor_value) {
  const int rounded = static_cast<int>(std::lround(value / multiple)) * multiple;
  return std::max(floor_value, rounded);
}

}  // namespace

ModelConfig ModelConfig::student_s(int num_classes) {
  ModelConfig cfg;
  cfg.kind = ModelKind::StudentS;
  cfg.num_classes = num_classes;
  cfg.input_h = cfg.input_w = 256;  // divisible through all five stride-2 stages
  return cfg;
}

ModelConfig ModelConfig::student_xs(int num_classes) {
  ModelConfig cfg = student_s(num_classes);
  cfg.kind = ModelKind::StudentXS;
  cfg.stage_channels = {32, 48, 64, 80, 96};
  cfg.mvit_dims = {96, 120, 144};
  cfg.final_channels = 384;
  return cfg;
}

ModelConfig ModelConfig::teacher_vit32(int num_classes) {
  ModelConfig cfg;
  cfg.kind = ModelKind::TeacherVit32;
  cfg.num_classes = num_classes;
  cfg.input_h = cfg.input_w = 224;  // 7x7 grid of 32-pixel patches
  return cfg;
}

ModelConfig ModelConfig::desk(ModelKind kind, int num_classes) {
  ModelConfig cfg = kind == ModelKind::StudentXS  ? student_xs(num_classes)
                    : kind == ModelKind::StudentS ? student_s(num_classes)
                                                  : teacher_vit32(num_classes);
  cfg.input_h = cfg.input_w = 64;
  if (cfg.is_student()) {
    cfg.scale = 0.25;
    cfg.heads = 2;
  } else {
    cfg.teacher_dim = 48;
    cfg.teacher_depth = 4;
    cfg.teacher_heads = 4;
  }
  return cfg;
}

ModelConfig ModelConfig::tiny(ModelKind kind, int num_classes) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.num_classes = num_classes;
  // 64x64 keeps every attention stage above one token, so gradient checks
  // exercise real softmax paths.
  cfg.input_h = cfg.input_w = 64;
  if (cfg.is_student()) {
    cfg.stem_channels = 8;
    cfg.stage_channels = {8, 8, 8, 8, 8};
    cfg.stage2_repeats = 1;
    cfg.mvit_dims = {8, 8, 8};
    cfg.mvit_depths = {1, 1, 1};
    cfg.mvit_patches = {2, 2, 1};
    cfg.final_channels = 16;
    cfg.expansion = 2;
    cfg.heads = 2;
    cfg.mlp_ratio = 1.0;
  } else {
    cfg.teacher_patch = 32;
    cfg.teacher_dim = 8;
    cfg.teacher_depth = 1;
    cfg.teacher_heads = 2;
    cfg.teacher_mlp_ratio = 1.0;
  }
  return cfg;
}

int ModelConfig::scaled_channels(int base) const {
  return round_multiple(base * scale, 8, 8);
}

int ModelConfig::scaled_dim(int base) const {
  const int unit = std::max(8, heads);
  return round_multiple(base * scale, unit, unit);
}

void ModelConfig::validate() const {
  if (num_classes < 2) raise(ErrorKind::InvalidConfig, "num_classes must be >= 2");
  if (input_h < 8 || input_w < 8) raise(ErrorKind::InvalidConfig, "input size must be >= 8");
  if (scale <= 0) raise(ErrorKind::InvalidConfig, "scale must be > 0");
  if (is_student()) {
    if (heads < 1) raise(ErrorKind::InvalidConfig, "heads must be >= 1");
    // Stem + four stride-2 stages: feature maps at the MobileViT blocks sit
    // at input/8, /16 and /32 and must divide by their patch sizes.
    const int down[3] = {8, 16, 32};
    for (int i = 0; i < 3; ++i) {
      if (input_h % (down[i] * mvit_patches[i]) != 0 || input_w % (down[i] * mvit_patches[i]) != 0) {
        raise(ErrorKind::InvalidConfig,
              "input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                  " incompatible with stage " + std::to_string(i + 3) + " patch " +
                  std::to_string(mvit_patches[i]));
      }
      if (scaled_dim(mvit_dims[i]) % heads != 0) {
        raise(ErrorKind::InvalidConfig, "embed dim not divisible by heads");
      }
      if (mvit_depths[i] < 1 || mvit_patches[i] < 1) {
        raise(ErrorKind::InvalidConfig, "mvit depth/patch must be >= 1");
      }
    }
    if (stage2_repeats < 1 || expansion < 1) {
      raise(ErrorKind::InvalidConfig, "stage2_repeats and expansion must be >= 1");
    }
  } else {
    if (teacher_patch < 1 || input_h % teacher_patch != 0 || input_w % teacher_patch != 0) {
      raise(ErrorKind::InvalidConfig, "input size must be divisible by teacher patch");
    }
    if (teacher_heads < 1 || teacher_dim % teacher_heads != 0) {
      raise(ErrorKind::InvalidConfig, "teacher_dim must be divisible by teacher_heads");
    }
    if (teacher_depth < 1) raise(ErrorKind::InvalidConfig, "teacher_depth must be >= 1");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"kind", to_string(cfg.kind)},
                     {"num_classes", cfg.num_classes},
                     {"input_h", cfg.input_h},
                     {"input_w", cfg.input_w},
                     {"scale", cfg.scale},
                     {"stem_channels", cfg.stem_channels},
                     {"stage_channels", cfg.stage_channels},
                     {"stage2_repeats", cfg.stage2_repeats},
                     {"mvit_dims", cfg.mvit_dims},
                     {"mvit_depths", cfg.mvit_depths},
                     {"mvit_patches", cfg.mvit_patches},
                     {"final_channels", cfg.final_channels},
                     {"expansion", cfg.expansion},
                     {"heads", cfg.heads},
                     {"mlp_ratio", cfg.mlp_ratio},
                     {"teacher_patch", cfg.teacher_patch},
                     {"teacher_dim", cfg.teacher_dim},
                     {"teacher_depth", cfg.teacher_depth},
                     {"teacher_heads", cfg.teacher_heads},
                     {"teacher_mlp_ratio", cfg.teacher_mlp_ratio}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
  j.at("num_classes").get_to(cfg.num_classes);
  j.at("input_h").get_to(cfg.input_h);
  j.at("input_w").get_to(cfg.input_w);
  j.at("scale").get_to(cfg.scale);
  j.at("stem_channels").get_to(cfg.stem_channels);
  j.at("stage_channels").get_to(cfg.stage_channels);
  j.at("stage2_repeats").get_to(cfg.stage2_repeats);
  j.at("mvit_dims").get_to(cfg.mvit_dims);
  j.at("mvit_depths").get_to(cfg.mvit_depths);
  j.at("mvit_patches").get_to(cfg.mvit_patches);
  j.at("final_channels").get_to(cfg.final_channels);
  j.at("expansion").get_to(cfg.expansion);
  j.at("heads").get_to(cfg.heads);
  j.at("mlp_ratio").get_to(cfg.mlp_ratio);
  j.at("teacher_patch").get_to(cfg.teacher_patch);
  j.at("teacher_dim").get_to(cfg.teacher_dim);
  j.at("teacher_depth").get_to(cfg.teacher_depth);
  j.at("teacher_heads").get_to(cfg.teacher_heads);
  j.at("teacher_mlp_ratio").get_to(cfg.teacher_mlp_ratio);
}

template <typename T>
Model<T> Model<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto impl = std::make_shared<detail_model::ModelImpl<T>>();
  impl->cfg = cfg;
  Rng init_rng = Rng(seed).stream("init");
  auto& params = impl->params;

  if (cfg.is_student()) {
    detail_model::StudentNet<T> net;
    const int stem = cfg.scaled_channels(cfg.stem_channels);
    const std::array<int, 5> ch = {
        cfg.scaled_channels(cfg.stage_channels[0]), cfg.scaled_channels(cfg.stage_channels[1]),
        cfg.scaled_channels(cfg.stage_channels[2]), cfg.scaled_channels(cfg.stage_channels[3]),
        cfg.scaled_channels(cfg.stage_channels[4])};
    const std::array<int, 3> dims = {cfg.scaled_dim(cfg.mvit_dims[0]), cfg.scaled_dim(cfg.mvit_dims[1]),
                                     cfg.scaled_dim(cfg.mvit_dims[2])};
    const int final_ch = cfg.scaled_channels(cfg.final_channels);

    net.stem = Conv2dLayer<T>(params, "stem", 3, stem, 3, 2, 1, 1, init_rng);
    net.stage1 = MobileNetV2Block<T>(params, "stage1.block0", stem, ch[0], cfg.expansion, 1, init_rng);
    net.stage2.emplace_back(params, "stage2.block0", ch[0], ch[1], cfg.expansion, 2, init_rng);
    for (int i = 1; i < cfg.stage2_repeats; ++i) {
      net.stage2.emplace_back(params, "stage2.block" + std::to_string(i), ch[1], ch[1], cfg.expansion,
                              1, init_rng);
    }
    net.down3 = MobileNetV2Block<T>(params, "stage3.down", ch[1], ch[2], cfg.expansion, 2, init_rng);
    net.mvit3 = MobileViTBlock<T>(params, "stage3.mvit", ch[2], dims[0], cfg.mvit_depths[0],
                                  cfg.mvit_patches[0], cfg.heads, cfg.mlp_ratio, init_rng);
    net.down4 = MobileNetV2Block<T>(params, "stage4.down", ch[2], ch[3], cfg.expansion, 2, init_rng);
    net.mvit4 = MobileViTBlock<T>(params, "stage4.mvit", ch[3], dims[1], cfg.mvit_depths[1],
                                  cfg.mvit_patches[1], cfg.heads, cfg.mlp_ratio, init_rng);
    net.down5 = MobileNetV2Block<T>(params, "stage5.down", ch[3], ch[4], cfg.expansion, 2, init_rng);
    net.mvit5 = MobileViTBlock<T>(params, "stage5.mvit", ch[4], dims[2], cfg.mvit_depths[2],
                                  cfg.mvit_patches[2], cfg.heads, cfg.mlp_ratio, init_rng);
    net.final_conv = Conv2dLayer<T>(params, "final_conv", ch[4], final_ch, 1, 1, 0, 1, init_rng);
    net.head = LinearLayer<T>(params, "head", final_ch, cfg.num_classes, init_rng);
    impl->student = std::move(net);
  } else {
    detail_model::TeacherNet<T> net;
    net.embed = PatchEmbed<T>(params, "embed", cfg.teacher_patch, cfg.input_h, cfg.input_w,
                              cfg.teacher_dim, init_rng);
    net.encoder.reserve(static_cast<std::size_t>(cfg.teacher_depth));
    for (int i = 0; i < cfg.teacher_depth; ++i) {
      net.encoder.emplace_back(params, "encoder." + std::to_string(i), cfg.teacher_dim,
                               cfg.teacher_heads, cfg.teacher_mlp_ratio, Activation::Gelu, init_rng);
    }
    net.final_norm = LayerNormLayer<T>(params, "final_norm", cfg.teacher_dim);
    net.head = LinearLayer<T>(params, "head", cfg.teacher_dim, cfg.num_classes, init_rng);
    impl->teacher = std::move(net);
  }

  Model<T> model;
  model.impl_ = std::move(impl);
  return model;
}

template <typename T>
Tensor<T> Model<T>::forward_with_activations(const Tensor<T>& x, ActivationTrace<T>& trace) const {
  const ModelConfig& cfg = impl_->cfg;
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != cfg.input_h || x.dim(3) != cfg.input_w) {
    raise(ErrorKind::ShapeMismatch, "input " + shape_str(x.shape()) + " does not match config " +
                                        std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w));
  }
  auto record = [&trace](const std::string& name, const Tensor<T>& t) {
    trace.emplace_back(name, t);
  };

  if (impl_->student) {
    const auto& net = *impl_->student;
    Tensor<T> h = silu(net.stem.forward(x));
    record("stem", h);
    h = net.stage1.forward(h);
    record("stage1", h);
    for (const auto& block : net.stage2) h = block.forward(h);
    record("stage2", h);
    h = net.mvit3.forward(net.down3.forward(h));
    record("stage3", h);
    h = net.mvit4.forward(net.down4.forward(h));
    record("stage4", h);
    h = net.mvit5.forward(net.down5.forward(h));
    record("stage5", h);
    h = silu(net.final_conv.forward(h));
    record("features", h);
    Tensor<T> pooled = global_avg_pool(h);
    return net.head.forward(pooled);
  }

  const auto& net = *impl_->teacher;
  Tensor<T> tokens = net.embed.forward(x);
  record("tokens", tokens);
  for (const auto& layer : net.encoder) tokens = layer.forward(tokens);
  tokens = net.final_norm.forward(tokens);
  record("encoded", tokens);
  Tensor<T> cls = reshape(slice(tokens, 1, 0, 1), {tokens.dim(0), tokens.dim(2)});
  return net.head.forward(cls);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x, bool train_mode) const {
  // No dropout or stochastic layers: train and eval paths are identical.
  (void)train_mode;
  ActivationTrace<T> trace;
  return forward_with_activations(x, trace);
}

template class Model<float>;
template class Model<double>;

}  // namespace mvkd
