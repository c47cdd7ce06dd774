#pragma once

#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "mvkd/model.hpp"

namespace mvkd {

// Checkpoint layout:
//   bytes 0..5   magic "MVKD1\n"
//   bytes 6..13  little-endian u64: header length in bytes
//   header       JSON: {"config": ModelConfig,
//                       "tensors": [{name, shape, dtype, offset, nbytes}...],
//                       "meta": free-form training metadata}
//   payload      concatenated little-endian IEEE-754 f32 buffers, in
//                directory order, offsets relative to the payload start.
inline constexpr char kCheckpointMagic[6] = {'M', 'V', 'K', 'D', '1', '\n'};

struct LoadedCheckpoint {
  Model<float> model;
  nlohmann::json meta;
};

void save_checkpoint(const Model<float>& model, const nlohmann::json& meta, std::ostream& out);
void save_checkpoint(const Model<float>& model, const nlohmann::json& meta, const std::string& path);

LoadedCheckpoint load_checkpoint(std::istream& in);
LoadedCheckpoint load_checkpoint(const std::string& path);

// Size of the serialized model with empty metadata: 4 bytes per parameter
// plus magic/header overhead.
std::int64_t model_size_bytes(const Model<float>& model);

}  // namespace mvkd
