#include "mvkd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace mvkd {

namespace {

void write_u64_le(std::ostream& out, std::uint64_t value) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  char bytes[8];
  in.read(bytes, 8);
  if (!in) raise(ErrorKind::CorruptCheckpoint, "truncated header length");
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) {
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return value;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const nlohmann::json& meta, std::ostream& out) {
  nlohmann::json header;
  header["config"] = model.config();
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : model.params().entries()) {
    const std::uint64_t nbytes = static_cast<std::uint64_t>(tensor.size()) * 4;
    dir.push_back({{"name", name},
                   {"shape", tensor.shape()},
                   {"dtype", "f32"},
                   {"offset", offset},
                   {"nbytes", nbytes}});
    offset += nbytes;
  }
  header["tensors"] = std::move(dir);
  header["meta"] = meta;

  const std::string header_text = header.dump();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u64_le(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, tensor] : model.params().entries()) {
    // Host is little-endian; raw f32 bytes are the wire format.
    out.write(reinterpret_cast<const char*>(tensor.data().data()),
              static_cast<std::streamsize>(tensor.data().size() * sizeof(float)));
  }
  if (!out) raise(ErrorKind::IoError, "checkpoint write failed");
}

void save_checkpoint(const Model<float>& model, const nlohmann::json& meta, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::IoError, "cannot open " + path + " for writing");
  save_checkpoint(model, meta, out);
}

LoadedCheckpoint load_checkpoint(std::istream& in) {
  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    raise(ErrorKind::FormatError, "bad checkpoint magic");
  }
  const std::uint64_t header_len = read_u64_le(in);
  if (header_len > (1ULL << 30)) raise(ErrorKind::CorruptCheckpoint, "implausible header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) raise(ErrorKind::CorruptCheckpoint, "truncated header");

  nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
  if (header.is_discarded()) raise(ErrorKind::FormatError, "header is not valid JSON");

  ModelConfig cfg;
  try {
    cfg = header.at("config").get<ModelConfig>();
  } catch (const Error&) {
    throw;  // UnsupportedModel from the kind lookup
  } catch (const std::exception& e) {
    raise(ErrorKind::FormatError, std::string("bad config block: ") + e.what());
  }

  Model<float> model = Model<float>::build(cfg, 0);

  const auto& dir = header.at("tensors");
  const auto& entries = model.params().entries();
  if (dir.size() != entries.size()) {
    raise(ErrorKind::CorruptCheckpoint, "tensor directory size does not match the architecture");
  }

  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& rec = dir[i];
    const auto& [name, tensor] = entries[i];
    if (rec.at("name").get<std::string>() != name) {
      raise(ErrorKind::CorruptCheckpoint, "directory entry " + std::to_string(i) + " names " +
                                              rec.at("name").get<std::string>() + ", expected " + name);
    }
    if (rec.at("dtype").get<std::string>() != "f32") {
      raise(ErrorKind::CorruptCheckpoint, "unsupported dtype for " + name);
    }
    if (rec.at("shape").get<Shape>() != tensor.shape()) {
      raise(ErrorKind::CorruptCheckpoint, "shape mismatch for " + name);
    }
    const auto offset = rec.at("offset").get<std::uint64_t>();
    const auto nbytes = rec.at("nbytes").get<std::uint64_t>();
    // Entries must tile the payload contiguously in order: non-overlapping
    // and directory order == payload order.
    if (offset != expected_offset || nbytes != static_cast<std::uint64_t>(tensor.size()) * 4) {
      raise(ErrorKind::CorruptCheckpoint, "directory bounds invalid for " + name);
    }
    expected_offset += nbytes;
  }

  for (auto& [name, tensor] : model.params().entries()) {
    auto& mutable_tensor = *model.params().find(name);
    in.read(reinterpret_cast<char*>(mutable_tensor.mutable_data().data()),
            static_cast<std::streamsize>(mutable_tensor.size() * sizeof(float)));
    if (!in) raise(ErrorKind::CorruptCheckpoint, "payload truncated while reading " + name);
  }
  // Nothing may trail the payload.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) raise(ErrorKind::CorruptCheckpoint, "trailing bytes after payload");

  LoadedCheckpoint result;
  result.model = std::move(model);
  result.meta = header.value("meta", nlohmann::json::object());
  return result;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot open " + path);
  return load_checkpoint(in);
}

std::int64_t model_size_bytes(const Model<float>& model) {
  std::ostringstream out(std::ios::binary);
  save_checkpoint(model, nlohmann::json::object(), out);
  return static_cast<std::int64_t>(out.str().size());
}

}  // namespace mvkd
