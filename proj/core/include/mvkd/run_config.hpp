#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "mvkd/dataset.hpp"
#include "mvkd/model.hpp"
#include "mvkd/train.hpp"

namespace mvkd {

// Merged configuration for a CLI run. Precedence: CLI flag > config file >
// defaults. Every field has a default; apply_json() rejects unknown keys so
// typos fail before any work starts.
struct RunConfig {
  ModelConfig student = ModelConfig::desk(ModelKind::StudentS, 2);
  ModelConfig teacher = ModelConfig::desk(ModelKind::TeacherVit32, 2);
  DistillConfig distill = [] {
    DistillConfig d;
    d.batch_size = 16;
    return d;
  }();

  std::string data_root;
  int image_size = 64;
  std::array<double, 3> split_fractions{0.7, 0.2, 0.1};
  SynthSpec synth;

  std::string out_dir = "runs";

  // Merge a config file (sections: student, teacher, distill, data, synth,
  // seed, out). Unknown keys raise InvalidConfig.
  void apply_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Applies the shared seed to distill.seed and synth.seed.
  void set_seed(std::uint64_t seed);

  void validate() const;
};

}  // namespace mvkd
