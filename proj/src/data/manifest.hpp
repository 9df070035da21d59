#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "data/image.hpp"
#include "nn/tensor.hpp"

namespace ddnet::data {

// Dataset label codes. The class index used by the networks is the only other
// representation: Alert <-> 1 <-> 0, Drowsy <-> 2 <-> 1.
enum class Label { alert = 1, drowsy = 2 };
inline constexpr std::size_t kNumClasses = 2;

std::size_t class_index(Label label);
Label label_from_index(std::size_t index);
std::optional<Label> label_from_code(long code);
const char* label_name(Label label);

enum class Split { unassigned, train, validation, test };

const char* split_name(Split split);
Split split_from_name(const std::string& name);

struct Sample {
  std::string path;  // as written in the manifest
  Label label = Label::alert;
  Split split = Split::unassigned;
};

struct DatasetManifest {
  std::vector<Sample> samples;
  std::array<std::size_t, kNumClasses> class_counts{};
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;  // relative sample paths resolve against this
  std::vector<std::string> warnings;

  bool has_splits() const;
  std::vector<std::size_t> indices(Split split) const;
  std::filesystem::path resolve(const Sample& s) const;
  std::size_t count(Split split, Label label) const;
};

struct ManifestOptions {
  // Strict mode turns unknown labels, duplicates and missing files into
  // errors; otherwise the row is skipped with a warning.
  bool strict = true;
  bool check_files = true;
};

// CSV with header `path,label` and optionally a third `split` column.
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                               const ManifestOptions& options = {});
DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});

std::string format_manifest(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

// Seeded shuffle then contiguous assignment: floor(train * n) train,
// floor(validation * n) validation, the remainder test. Stratified mode applies
// the rule within each class.
DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                              std::uint64_t seed, bool stratified = true);

// Loads, resizes and caches network-ready images per manifest sample.
class ImageStore {
 public:
  explicit ImageStore(const DatasetManifest& manifest, std::size_t channels = 1,
                      std::size_t budget_bytes = std::size_t{1} << 30);

  // Channel-replicated CHW pixels of sample `index`.
  const std::vector<double>& pixels(std::size_t index);
  std::size_t channels() const { return channels_; }

 private:
  const DatasetManifest& manifest_;
  std::size_t channels_;
  std::size_t budget_;
  std::size_t used_ = 0;
  std::vector<std::vector<double>> cache_;
  std::vector<double> scratch_;
};

// Preprocesses a decoded image into CHW network input (resize + replicate).
std::vector<double> to_network_input(const Image& image, std::size_t channels);

struct Batch {
  nn::Tensor images;                // N x C x 90 x 90
  std::vector<std::size_t> labels;  // class indices
  std::vector<std::size_t> samples; // manifest indices
};

// Mini-batches of one split, reshuffled per epoch from (seed, epoch). The last
// batch may be short. Images load lazily on access.
class BatchSequence {
 public:
  BatchSequence(const DatasetManifest& manifest, Split split, std::size_t batch_size,
                std::uint64_t seed, std::uint64_t epoch, ImageStore& store);

  std::size_t size() const { return (order_.size() + batch_size_ - 1) / batch_size_; }
  const std::vector<std::size_t>& order() const { return order_; }
  Batch operator[](std::size_t i) const;

 private:
  const DatasetManifest& manifest_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  ImageStore& store_;
};

// Assembles a batch from explicit manifest indices, in the given order.
Batch load_batch(const DatasetManifest& manifest, const std::vector<std::size_t>& indices,
                 ImageStore& store);

}  // namespace ddnet::data
