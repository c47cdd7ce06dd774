#include "mvkd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include <nlohmann/json.hpp>

namespace mvkd {

namespace fs = std::filesystem;

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

namespace {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  raise(ErrorKind::FormatError, "unknown split name: " + s);
}

}  // namespace

std::vector<std::int64_t> DatasetManifest::split_indices(Split split) const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

void to_json(nlohmann::json& j, const DatasetManifest& manifest) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"source_id", e.source_id}, {"label", e.label}, {"split", to_string(e.split)}});
  }
  j = nlohmann::json{{"class_names", manifest.class_names},
                     {"seed", manifest.seed},
                     {"split_fractions", manifest.split_fractions},
                     {"entries", std::move(entries)}};
}

void from_json(const nlohmann::json& j, DatasetManifest& manifest) {
  j.at("class_names").get_to(manifest.class_names);
  j.at("seed").get_to(manifest.seed);
  j.at("split_fractions").get_to(manifest.split_fractions);
  manifest.entries.clear();
  for (const auto& e : j.at("entries")) {
    ManifestEntry entry;
    e.at("source_id").get_to(entry.source_id);
    e.at("label").get_to(entry.label);
    entry.split = split_from_string(e.at("split").get<std::string>());
    manifest.entries.push_back(std::move(entry));
  }
}

DatasetManifest load_image_folder(const std::string& root) {
  if (!fs::is_directory(root)) raise(ErrorKind::InvalidDataset, root + " is not a directory");

  std::vector<std::string> class_names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  }
  std::sort(class_names.begin(), class_names.end());
  if (class_names.size() < 2) {
    raise(ErrorKind::InvalidDataset, root + ": need at least 2 class subdirectories");
  }

  DatasetManifest manifest;
  manifest.class_names = class_names;
  for (std::size_t label = 0; label < class_names.size(); ++label) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / class_names[label])) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
        files.push_back(class_names[label] + "/" + entry.path().filename().string());
      }
    }
    if (files.empty()) {
      raise(ErrorKind::InvalidDataset, "class directory has no .ppm images: " + class_names[label]);
    }
    std::sort(files.begin(), files.end());
    for (auto& f : files) {
      manifest.entries.push_back({std::move(f), static_cast<int>(label), Split::Train});
    }
  }
  return manifest;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, std::array<double, 3> fractions,
                              std::uint64_t seed) {
  double sum = 0;
  for (double f : fractions) {
    if (f <= 0) raise(ErrorKind::InvalidParameter, "split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) raise(ErrorKind::InvalidParameter, "split fractions must sum to 1");

  DatasetManifest out = manifest;
  out.seed = seed;
  out.split_fractions = fractions;

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    by_class[out.entries[i].label].push_back(i);
  }

  for (auto& [label, indices] : by_class) {
    const std::size_t n = indices.size();
    if (n < 3) {
      raise(ErrorKind::StratificationError,
            "class " + std::to_string(label) + " has only " + std::to_string(n) + " samples");
    }
    Rng rng = Rng(seed).stream("split", static_cast<std::uint64_t>(label));
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
      std::swap(indices[i], indices[j]);
    }
    // floor keeps the remainder (the largest share) in train, so tiny
    // classes never end up with an empty train split. The epsilon guards
    // against representation error in n * fraction.
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[1] + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[2] + 1e-9));
    for (std::size_t i = 0; i < n; ++i) {
      out.entries[indices[i]].split =
          i < n_val ? Split::Val : (i < n_val + n_test ? Split::Test : Split::Train);
    }
  }
  return out;
}

FolderDataset::FolderDataset(std::string root, DatasetManifest manifest, int image_size)
    : root_(std::move(root)), manifest_(std::move(manifest)), image_size_(image_size) {
  if (image_size_ < 8) raise(ErrorKind::InvalidParameter, "image size must be >= 8");
}

Sample FolderDataset::sample(std::int64_t entry_index) const {
  const auto& entry = manifest_.entries.at(static_cast<std::size_t>(entry_index));
  const std::string path = (fs::path(root_) / entry.source_id).string();
  Sample s;
  s.image = preprocess(read_ppm(path), image_size_);
  s.label = entry.label;
  s.source_id = entry.source_id;
  return s;
}

// ---- synthetic generator -----------------------------------------------------

namespace {

struct Archetype {
  const char* name;
  int blobs;
  int quadrant;  // 0=ne 1=nw 2=se 3=sw
};

// Lexicographically ordered by name; index == label.
constexpr Archetype kArchetypes[12] = {
    {"b1_ne", 1, 0}, {"b1_nw", 1, 1}, {"b1_se", 1, 2}, {"b1_sw", 1, 3},
    {"b3_ne", 3, 0}, {"b3_nw", 3, 1}, {"b3_se", 3, 2}, {"b3_sw", 3, 3},
    {"b5_ne", 5, 0}, {"b5_nw", 5, 1}, {"b5_se", 5, 2}, {"b5_sw", 5, 3},
};

void validate_synth_spec(const SynthSpec& spec) {
  if (spec.num_per_class < 3) raise(ErrorKind::InvalidParameter, "num_per_class must be >= 3");
  if (spec.num_classes != 2 && spec.num_classes != 12) {
    raise(ErrorKind::InvalidParameter, "synthetic dataset supports 2 or 12 classes");
  }
  if (spec.image_size < 8) raise(ErrorKind::InvalidParameter, "image size must be >= 8");
}

struct Canvas {
  int size;
  std::vector<float>& data;  // [3,S,S]
  float* plane(int c) { return data.data() + static_cast<std::size_t>(c) * size * size; }
};

void render_background(Canvas canvas, Rng& rng) {
  const int s = canvas.size;
  const float base[3] = {static_cast<float>(rng.uniform(0.04, 0.16)),
                         static_cast<float>(rng.uniform(0.05, 0.18)),
                         static_cast<float>(rng.uniform(0.06, 0.20))};
  const double dir_x = rng.uniform(-1.0, 1.0);
  const double dir_y = rng.uniform(-1.0, 1.0);
  const double grad_amp = rng.uniform(0.02, 0.08);
  const double noise_amp = rng.uniform(0.02, 0.05);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double t = dir_x * (static_cast<double>(x) / s - 0.5) +
                       dir_y * (static_cast<double>(y) / s - 0.5);
      const float offs = static_cast<float>(grad_amp * t + noise_amp * rng.uniform(-1.0, 1.0));
      for (int c = 0; c < 3; ++c) canvas.plane(c)[y * s + x] = base[c] + offs;
    }
  }
}

// Cluster of additive warm gaussian blobs with lobed (irregular) envelopes.
void render_fire_cluster(Canvas canvas, Rng& rng, int count, double cx_lo, double cx_hi,
                         double cy_lo, double cy_hi) {
  const int s = canvas.size;
  const double ccx = rng.uniform(cx_lo, cx_hi) * s;
  const double ccy = rng.uniform(cy_lo, cy_hi) * s;
  for (int i = 0; i < count; ++i) {
    const double bx = ccx + rng.normal(0.0, 0.07) * s;
    const double by = ccy + rng.normal(0.0, 0.07) * s;
    const double radius = rng.uniform(0.05, 0.11) * s;
    const double sigma2 = 2.0 * (radius * 0.6) * (radius * 0.6);
    const float peak_r = static_cast<float>(rng.uniform(0.70, 1.0));
    const float peak_g = static_cast<float>(peak_r * rng.uniform(0.45, 0.75));
    const float peak_b = static_cast<float>(peak_g * rng.uniform(0.25, 0.65));
    const int lobes = 2 + static_cast<int>(rng.below(4));
    const double phase = rng.uniform(0.0, 6.2831853);
    const double wobble = rng.uniform(0.25, 0.50);
    const double gain = rng.uniform(0.50, 1.0);
    const float peak[3] = {peak_r, peak_g, peak_b};
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double dx = x - bx, dy = y - by;
        const double r2 = dx * dx + dy * dy;
        if (r2 > 9.0 * sigma2) continue;
        const double theta = std::atan2(dy, dx);
        const double envelope = std::max(0.0, 1.0 + wobble * std::sin(lobes * theta + phase));
        const float intensity = static_cast<float>(gain * std::exp(-r2 / sigma2) * envelope);
        for (int c = 0; c < 3; ++c) canvas.plane(c)[y * s + x] += peak[c] * intensity;
      }
    }
  }
}

// Sharp-edged warm disk: fire-like color statistics, un-fire-like geometry.
void render_disk_distractor(Canvas canvas, Rng& rng) {
  const int s = canvas.size;
  const double cx = rng.uniform(0.15, 0.85) * s;
  const double cy = rng.uniform(0.15, 0.85) * s;
  const double radius = rng.uniform(0.07, 0.14) * s;
  const float col_r = static_cast<float>(rng.uniform(0.70, 1.0));
  const float col_g = static_cast<float>(col_r * rng.uniform(0.45, 0.75));
  const float col_b = static_cast<float>(col_g * rng.uniform(0.25, 0.65));
  const float col[3] = {col_r, col_g, col_b};
  const double alpha = rng.uniform(0.70, 0.95);
  const double edge = rng.uniform(0.8, 1.6);  // edge ramp in pixels
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double r = std::hypot(x - cx, y - cy);
      const double cover = r <= radius ? 1.0 : std::max(0.0, (radius + edge - r) / edge);
      if (cover <= 0) continue;
      const float a = static_cast<float>(alpha * cover);
      for (int c = 0; c < 3; ++c) {
        float& px = canvas.plane(c)[y * s + x];
        px = (1.0f - a) * px + a * col[c];
      }
    }
  }
}

void quadrant_bounds(int quadrant, double& cx_lo, double& cx_hi, double& cy_lo, double& cy_hi) {
  const bool east = quadrant == 0 || quadrant == 2;
  const bool north = quadrant == 0 || quadrant == 1;
  cx_lo = east ? 0.55 : 0.15;
  cx_hi = east ? 0.85 : 0.45;
  cy_lo = north ? 0.15 : 0.55;
  cy_hi = north ? 0.45 : 0.85;
}

}  // namespace

std::vector<std::string> synth_class_names(int num_classes) {
  if (num_classes == 2) return {"fire", "non_fire"};
  if (num_classes == 12) {
    std::vector<std::string> names;
    for (const auto& a : kArchetypes) names.emplace_back(a.name);
    return names;
  }
  raise(ErrorKind::InvalidParameter, "synthetic dataset supports 2 or 12 classes");
}

Tensor<float> synth_image(const SynthSpec& spec, int class_index, int index) {
  validate_synth_spec(spec);
  if (class_index < 0 || class_index >= spec.num_classes) {
    raise(ErrorKind::InvalidParameter, "class index out of range");
  }
  const int s = spec.image_size;
  std::vector<float> data(static_cast<std::size_t>(3) * s * s, 0.0f);
  Canvas canvas{s, data};
  Rng rng = Rng(spec.seed).stream("synth", static_cast<std::uint64_t>(class_index),
                                  static_cast<std::uint64_t>(index));
  render_background(canvas, rng);

  if (spec.num_classes == 2) {
    if (class_index == 0) {  // fire
      const int blobs = 3 + static_cast<int>(rng.below(5));
      render_fire_cluster(canvas, rng, blobs, 0.25, 0.75, 0.25, 0.75);
    } else if (spec.hardness == SynthHardness::Hard) {
      render_disk_distractor(canvas, rng);
    }
  } else {
    const auto& arch = kArchetypes[class_index];
    double cx_lo, cx_hi, cy_lo, cy_hi;
    quadrant_bounds(arch.quadrant, cx_lo, cx_hi, cy_lo, cy_hi);
    render_fire_cluster(canvas, rng, arch.blobs, cx_lo, cx_hi, cy_lo, cy_hi);
    if (spec.hardness == SynthHardness::Hard) render_disk_distractor(canvas, rng);
  }

  if (spec.hardness == SynthHardness::Hard) {
    // Global illumination jitter, drawn per image irrespective of class.
    // Scaling keeps the warm R>G>B ordering intact.
    const float gain = static_cast<float>(rng.uniform(0.55, 1.45));
    for (auto& v : data) v *= gain;
  }

  for (auto& v : data) v = std::clamp(v, 0.0f, 1.0f);
  return Tensor<float>::from_data({3, s, s}, std::move(data));
}

SynthDataset::SynthDataset(const SynthSpec& spec, std::array<double, 3> fractions,
                           std::uint64_t split_seed)
    : spec_(spec) {
  validate_synth_spec(spec);
  DatasetManifest manifest;
  manifest.class_names = synth_class_names(spec.num_classes);
  char buffer[16];
  for (int label = 0; label < spec.num_classes; ++label) {
    for (int i = 0; i < spec.num_per_class; ++i) {
      std::snprintf(buffer, sizeof(buffer), "%05d", i);
      manifest.entries.push_back(
          {"synth/" + manifest.class_names[static_cast<std::size_t>(label)] + "/" + buffer, label,
           Split::Train});
    }
  }
  manifest_ = split_dataset(manifest, fractions, split_seed);
}

Sample SynthDataset::sample(std::int64_t entry_index) const {
  const auto& entry = manifest_.entries.at(static_cast<std::size_t>(entry_index));
  const int index = static_cast<int>(entry_index % spec_.num_per_class);
  Sample s;
  s.image = synth_image(spec_, entry.label, index);
  s.label = entry.label;
  s.source_id = entry.source_id;
  return s;
}

// ---- batching -----------------------------------------------------------------

BatchIterator::BatchIterator(const Dataset& dataset, Split split, int batch_size, std::uint64_t seed,
                             int epoch)
    : dataset_(&dataset), batch_size_(batch_size) {
  if (batch_size < 1) raise(ErrorKind::InvalidParameter, "batch_size must be >= 1");
  order_ = dataset.manifest().split_indices(split);
  if (order_.empty()) {
    raise(ErrorKind::EmptyDataset, std::string("split '") + to_string(split) + "' is empty");
  }
  Rng rng = Rng(seed ^ static_cast<std::uint64_t>(epoch)).stream("shuffle");
  for (std::size_t i = order_.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(order_[i], order_[j]);
  }
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t count = std::min(static_cast<std::size_t>(batch_size_), order_.size() - cursor_);
  Batch batch;
  batch.labels.reserve(count);
  batch.entry_indices.reserve(count);
  std::vector<float> buffer;
  Shape image_shape;
  for (std::size_t i = 0; i < count; ++i) {
    const std::int64_t entry = order_[cursor_ + i];
    Sample s = dataset_->sample(entry);
    if (i == 0) {
      image_shape = s.image.shape();
      buffer.reserve(count * static_cast<std::size_t>(s.image.size()));
    } else if (s.image.shape() != image_shape) {
      raise(ErrorKind::ShapeMismatch, "inconsistent image shapes in batch");
    }
    const auto& v = s.image.data();
    buffer.insert(buffer.end(), v.begin(), v.end());
    batch.labels.push_back(s.label);
    batch.entry_indices.push_back(entry);
  }
  cursor_ += count;
  Shape batched{static_cast<std::int64_t>(count), image_shape[0], image_shape[1], image_shape[2]};
  batch.images = Tensor<float>::from_data(batched, std::move(buffer));
  return batch;
}

}  // namespace mvkd
