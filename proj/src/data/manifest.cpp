#include "data/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace ddnet::data {
namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t floor_share(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

void assign_contiguous(std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                       const SplitRatios& r) {
  const std::size_t n = order.size();
  const std::size_t n_train = floor_share(r.train, n);
  const std::size_t n_val = floor_share(r.validation, n);
  for (std::size_t i = 0; i < n; ++i) {
    samples[order[i]].split = i < n_train           ? Split::train
                              : i < n_train + n_val ? Split::validation
                                                    : Split::test;
  }
}

}  // namespace

std::size_t class_index(Label label) { return label == Label::alert ? 0 : 1; }

Label label_from_index(std::size_t index) {
  if (index >= kNumClasses) fail(Errc::invalid_argument, "class index out of range");
  return index == 0 ? Label::alert : Label::drowsy;
}

std::optional<Label> label_from_code(long code) {
  if (code == 1) return Label::alert;
  if (code == 2) return Label::drowsy;
  return std::nullopt;
}

const char* label_name(Label label) { return label == Label::alert ? "Alert" : "Drowsy"; }

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "val") return Split::validation;
  if (name == "test") return Split::test;
  fail(Errc::invalid_argument, "unknown split '" + name + "'");
}

bool DatasetManifest::has_splits() const {
  return !samples.empty() && std::all_of(samples.begin(), samples.end(), [](const Sample& s) {
    return s.split != Split::unassigned;
  });
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const Sample& s) const {
  std::filesystem::path p(s.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::size_t DatasetManifest::count(Split split, Label label) const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [&](const Sample& s) {
    return s.split == split && s.label == label;
  }));
}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                               const ManifestOptions& options) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(Errc::parse, "manifest is empty (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_fields(line);
  const bool with_split = header == std::vector<std::string>{"path", "label", "split"};
  if (!with_split && header != std::vector<std::string>{"path", "label"}) {
    fail(Errc::parse, "manifest header must be 'path,label' or 'path,label,split', got '" + line + "'");
  }

  auto reject = [&](Errc code, const std::string& msg) {
    if (options.strict) fail(code, msg);
    m.warnings.push_back(msg);
  };

  std::set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    const std::string where = "manifest row " + std::to_string(row);
    if (f.size() != header.size()) {
      fail(Errc::parse, where + ": expected " + std::to_string(header.size()) + " fields");
    }
    long code = 0;
    try {
      std::size_t used = 0;
      code = std::stol(f[1], &used);
      if (used != f[1].size()) code = -1;
    } catch (...) {
      code = -1;
    }
    const auto label = label_from_code(code);
    if (!label) {
      reject(Errc::unknown_label, where + ": unknown label '" + f[1] + "'");
      continue;
    }
    if (!seen.insert(f[0]).second) {
      reject(Errc::duplicate_path, where + ": duplicate path '" + f[0] + "'");
      continue;
    }
    Sample s{f[0], *label, Split::unassigned};
    if (options.check_files && !std::filesystem::exists(m.resolve(s))) {
      reject(Errc::missing_file, where + ": missing file '" + f[0] + "'");
      continue;
    }
    if (with_split) {
      try {
        s.split = split_from_name(f[2]);
      } catch (const Error&) {
        fail(Errc::parse, where + ": unknown split '" + f[2] + "'");
      }
    }
    m.class_counts[class_index(s.label)]++;
    m.samples.push_back(std::move(s));
  }
  if (m.samples.empty()) fail(Errc::parse, "manifest has no samples");
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open manifest '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path(), options);
}

std::string format_manifest(const DatasetManifest& manifest) {
  const bool with_split = manifest.has_splits();
  std::string out = with_split ? "path,label,split\n" : "path,label\n";
  for (const auto& s : manifest.samples) {
    out += s.path + "," + std::to_string(static_cast<int>(s.label));
    if (with_split) out += std::string(",") + split_name(s.split);
    out += "\n";
  }
  return out;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write manifest '" + path.string() + "'");
  out << format_manifest(manifest);
}

DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                              std::uint64_t seed, bool stratified) {
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    fail(Errc::invalid_argument, "split ratios must be positive and sum to 1");
  }
  if (manifest.samples.size() < 3) {
    fail(Errc::invalid_argument, "need at least 3 samples to make 3 splits, got " +
                                     std::to_string(manifest.samples.size()));
  }
  DatasetManifest out = manifest;
  out.seed = seed;
  if (!stratified) {
    std::vector<std::size_t> order(out.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span(order));
    assign_contiguous(out.samples, order, ratios);
    return out;
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      if (class_index(out.samples[i].label) == c) order.push_back(i);
    }
    Rng rng(mix_seed(seed, c));
    rng.shuffle(std::span(order));
    assign_contiguous(out.samples, order, ratios);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> to_network_input(const Image& image, std::size_t channels) {
  const Image sized = (image.height == kInputSize && image.width == kInputSize)
                          ? image
                          : resize_bilinear(image, kInputSize, kInputSize);
  std::vector<double> out;
  out.reserve(channels * sized.pixels.size());
  for (std::size_t c = 0; c < channels; ++c) {
    out.insert(out.end(), sized.pixels.begin(), sized.pixels.end());
  }
  return out;
}

ImageStore::ImageStore(const DatasetManifest& manifest, std::size_t channels,
                       std::size_t budget_bytes)
    : manifest_(manifest), channels_(channels), budget_(budget_bytes),
      cache_(manifest.samples.size()) {}

const std::vector<double>& ImageStore::pixels(std::size_t index) {
  if (index >= cache_.size()) fail(Errc::invalid_argument, "sample index out of range");
  if (!cache_[index].empty()) return cache_[index];
  const auto& s = manifest_.samples[index];
  std::vector<double> px;
  try {
    px = to_network_input(load_pgm(manifest_.resolve(s)), channels_);
  } catch (const Error& e) {
    throw Error(e.code(), "cannot load image '" + s.path + "': " + e.what());
  }
  const std::size_t bytes = px.size() * sizeof(double);
  if (used_ + bytes <= budget_) {
    used_ += bytes;
    cache_[index] = std::move(px);
    return cache_[index];
  }
  scratch_ = std::move(px);
  return scratch_;
}

Batch load_batch(const DatasetManifest& manifest, const std::vector<std::size_t>& indices,
                 ImageStore& store) {
  if (indices.empty()) fail(Errc::empty_split, "cannot build an empty batch");
  const std::size_t plane = store.channels() * kInputSize * kInputSize;
  Batch b;
  b.images = nn::Tensor({indices.size(), store.channels(), kInputSize, kInputSize});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& px = store.pixels(indices[i]);
    std::copy(px.begin(), px.end(), b.images.raw() + i * plane);
    b.labels.push_back(class_index(manifest.samples[indices[i]].label));
  }
  b.samples = indices;
  return b;
}

BatchSequence::BatchSequence(const DatasetManifest& manifest, Split split, std::size_t batch_size,
                             std::uint64_t seed, std::uint64_t epoch, ImageStore& store)
    : manifest_(manifest), batch_size_(batch_size), order_(manifest.indices(split)), store_(store) {
  if (batch_size == 0) fail(Errc::invalid_argument, "batch size must be >= 1");
  if (order_.empty()) fail(Errc::empty_split, std::string("split '") + split_name(split) + "' is empty");
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(std::span(order_));
}

Batch BatchSequence::operator[](std::size_t i) const {
  if (i >= size()) fail(Errc::invalid_argument, "batch index out of range");
  const std::size_t begin = i * batch_size_;
  const std::size_t end = std::min(order_.size(), begin + batch_size_);
  return load_batch(manifest_, {order_.begin() + static_cast<std::ptrdiff_t>(begin),
                                order_.begin() + static_cast<std::ptrdiff_t>(end)},
                    store_);
}

}  // namespace ddnet::data
