#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mvkd/image_io.hpp"
#include "mvkd/rng.hpp"
#include "mvkd/tensor.hpp"

namespace mvkd {

enum class Split { Train, Val, Test };
const char* to_string(Split split) noexcept;

struct Sample {
  Tensor<float> image;  // [3,S,S], values in [0,1] before normalization
  int label = 0;
  std::string source_id;
};

struct ManifestEntry {
  std::string source_id;
  int label = 0;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::vector<std::string> class_names;  // lexicographic
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  std::array<double, 3> split_fractions{0.7, 0.2, 0.1};

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<std::int64_t> split_indices(Split split) const;
};

void to_json(nlohmann::json& j, const DatasetManifest& manifest);
void from_json(const nlohmann::json& j, DatasetManifest& manifest);

// Scans a class-per-folder image tree (root/<class>/<file>.ppm). Classes are
// sorted lexicographically, entries by relative path; no split assigned yet.
DatasetManifest load_image_folder(const std::string& root);

// Stratified split: within each class, a seeded shuffle, then floor(n*f_val)
// to val and floor(n*f_test) to test, remainder to train.
DatasetManifest split_dataset(const DatasetManifest& manifest,
                              std::array<double, 3> fractions = {0.7, 0.2, 0.1},
                              std::uint64_t seed = 0);

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual const DatasetManifest& manifest() const = 0;
  virtual Sample sample(std::int64_t entry_index) const = 0;
  int num_classes() const { return manifest().num_classes(); }
};

// Decodes and preprocesses folder images on demand.
class FolderDataset final : public Dataset {
 public:
  FolderDataset(std::string root, DatasetManifest manifest, int image_size);
  const DatasetManifest& manifest() const override { return manifest_; }
  Sample sample(std::int64_t entry_index) const override;

 private:
  std::string root_;
  DatasetManifest manifest_;
  int image_size_;
};

enum class SynthHardness { Easy, Hard };

struct SynthSpec {
  int num_per_class = 100;
  int num_classes = 2;  // 2 or 12
  SynthHardness hardness = SynthHardness::Easy;
  int image_size = 64;
  std::uint64_t seed = 7;
};

// Procedural stand-in for the fire benchmarks. Two-class mode renders warm
// gaussian blob clusters over dark textured backgrounds ("fire") against
// plain backgrounds (easy) or sharp warm disk distractors (hard). The
// 12-class mode varies blob count and cluster quadrant per class.
// Deterministic per (seed, class, index).
Tensor<float> synth_image(const SynthSpec& spec, int class_index, int index);

std::vector<std::string> synth_class_names(int num_classes);

class SynthDataset final : public Dataset {
 public:
  SynthDataset(const SynthSpec& spec, std::array<double, 3> fractions = {0.7, 0.2, 0.1},
               std::uint64_t split_seed = 0);
  const DatasetManifest& manifest() const override { return manifest_; }
  Sample sample(std::int64_t entry_index) const override;
  const SynthSpec& spec() const { return spec_; }

 private:
  SynthSpec spec_;
  DatasetManifest manifest_;
};

struct Batch {
  Tensor<float> images;  // [b,3,S,S]
  std::vector<int> labels;
  std::vector<std::int64_t> entry_indices;
};

// Seeded per-epoch shuffle (permutation keyed by seed XOR epoch); yields all
// samples of a split exactly once, the final partial batch included.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, Split split, int batch_size, std::uint64_t seed, int epoch);
  std::optional<Batch> next();

 private:
  const Dataset* dataset_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
  int batch_size_;
};

}  // namespace mvkd
