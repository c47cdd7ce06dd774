#include "mvkd/run_config.hpp"

#include <set>

#include <nlohmann/json.hpp>

namespace mvkd {

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& section) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      raise(ErrorKind::InvalidConfig, "unknown config key: " + section + key);
    }
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void apply_model_section(const nlohmann::json& j, ModelConfig& cfg, const std::string& section,
                         bool is_student) {
  reject_unknown_keys(j,
                      {"kind", "num_classes", "input_size", "scale", "stem_channels",
                       "stage_channels", "stage2_repeats", "mvit_dims", "mvit_depths", "mvit_patches",
                       "final_channels", "expansion", "heads", "mlp_ratio", "teacher_patch",
                       "teacher_dim", "teacher_depth", "teacher_heads", "teacher_mlp_ratio"},
                      section);
  if (j.contains("kind")) {
    const ModelKind kind = model_kind_from_string(j.at("kind").get<std::string>());
    if (is_student != (kind != ModelKind::TeacherVit32)) {
      raise(ErrorKind::InvalidConfig, section + "kind: wrong family for this section");
    }
    if (kind != cfg.kind) {
      // Swap the per-kind topology baselines, keep everything else.
      const ModelConfig preset = kind == ModelKind::StudentXS  ? ModelConfig::student_xs()
                                 : kind == ModelKind::StudentS ? ModelConfig::student_s()
                                                               : ModelConfig::teacher_vit32();
      cfg.kind = kind;
      cfg.stage_channels = preset.stage_channels;
      cfg.mvit_dims = preset.mvit_dims;
      cfg.final_channels = preset.final_channels;
    }
  }
  maybe(j, "num_classes", cfg.num_classes);
  if (j.contains("input_size")) {
    int s = 0;
    j.at("input_size").get_to(s);
    cfg.input_h = cfg.input_w = s;
  }
  maybe(j, "scale", cfg.scale);
  maybe(j, "stem_channels", cfg.stem_channels);
  maybe(j, "stage_channels", cfg.stage_channels);
  maybe(j, "stage2_repeats", cfg.stage2_repeats);
  maybe(j, "mvit_dims", cfg.mvit_dims);
  maybe(j, "mvit_depths", cfg.mvit_depths);
  maybe(j, "mvit_patches", cfg.mvit_patches);
  maybe(j, "final_channels", cfg.final_channels);
  maybe(j, "expansion", cfg.expansion);
  maybe(j, "heads", cfg.heads);
  maybe(j, "mlp_ratio", cfg.mlp_ratio);
  maybe(j, "teacher_patch", cfg.teacher_patch);
  maybe(j, "teacher_dim", cfg.teacher_dim);
  maybe(j, "teacher_depth", cfg.teacher_depth);
  maybe(j, "teacher_heads", cfg.teacher_heads);
  maybe(j, "teacher_mlp_ratio", cfg.teacher_mlp_ratio);
}

SynthHardness hardness_from_string(const std::string& name) {
  if (name == "easy") return SynthHardness::Easy;
  if (name == "hard") return SynthHardness::Hard;
  raise(ErrorKind::InvalidConfig, "hardness must be 'easy' or 'hard', got " + name);
}

}  // namespace

void RunConfig::apply_json(const nlohmann::json& j) {
  if (!j.is_object()) raise(ErrorKind::InvalidConfig, "config root must be a JSON object");
  reject_unknown_keys(j, {"student", "teacher", "distill", "data", "synth", "seed", "out"}, "");

  if (j.contains("student")) apply_model_section(j.at("student"), student, "student.", true);
  if (j.contains("teacher")) apply_model_section(j.at("teacher"), teacher, "teacher.", false);

  if (j.contains("distill")) {
    const auto& d = j.at("distill");
    reject_unknown_keys(d,
                        {"temperature", "alpha", "lr_teacher", "lr_student", "weight_decay",
                         "batch_size", "epochs_teacher", "epochs_student", "patience", "seed"},
                        "distill.");
    maybe(d, "temperature", distill.temperature);
    maybe(d, "alpha", distill.alpha);
    maybe(d, "lr_teacher", distill.lr_teacher);
    maybe(d, "lr_student", distill.lr_student);
    maybe(d, "weight_decay", distill.weight_decay);
    maybe(d, "batch_size", distill.batch_size);
    maybe(d, "epochs_teacher", distill.epochs_teacher);
    maybe(d, "epochs_student", distill.epochs_student);
    maybe(d, "patience", distill.patience);
    maybe(d, "seed", distill.seed);
  }

  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown_keys(d, {"root", "image_size", "split_fractions"}, "data.");
    maybe(d, "root", data_root);
    maybe(d, "image_size", image_size);
    maybe(d, "split_fractions", split_fractions);
  }

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown_keys(s, {"num_per_class", "num_classes", "hardness", "image_size", "seed"},
                        "synth.");
    maybe(s, "num_per_class", synth.num_per_class);
    maybe(s, "num_classes", synth.num_classes);
    if (s.contains("hardness")) {
      synth.hardness = hardness_from_string(s.at("hardness").get<std::string>());
    }
    maybe(s, "image_size", synth.image_size);
    maybe(s, "seed", synth.seed);
  }

  if (j.contains("seed")) set_seed(j.at("seed").get<std::uint64_t>());
  maybe(j, "out", out_dir);
}

void RunConfig::set_seed(std::uint64_t seed) {
  distill.seed = seed;
  synth.seed = seed;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["student"] = student;
  j["teacher"] = teacher;
  j["distill"] = distill;
  j["data"] = {{"root", data_root}, {"image_size", image_size}, {"split_fractions", split_fractions}};
  j["synth"] = {{"num_per_class", synth.num_per_class},
                {"num_classes", synth.num_classes},
                {"hardness", synth.hardness == SynthHardness::Easy ? "easy" : "hard"},
                {"image_size", synth.image_size},
                {"seed", synth.seed}};
  j["out"] = out_dir;
  return j;
}

void RunConfig::validate() const {
  student.validate();
  teacher.validate();
  distill.validate();
  if (image_size < 8) raise(ErrorKind::InvalidConfig, "data.image_size must be >= 8");
  if (student.num_classes != teacher.num_classes) {
    raise(ErrorKind::InvalidConfig, "student and teacher num_classes differ");
  }
  if (student.input_h != image_size || teacher.input_h != image_size) {
    raise(ErrorKind::InvalidConfig, "model input_size must equal data.image_size");
  }
}

}  // namespace mvkd
