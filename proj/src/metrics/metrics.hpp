#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ddnet::metrics {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  std::size_t classes() const { return names_.size(); }
  const std::vector<std::string>& class_names() const { return names_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const;
  std::uint64_t total() const;

  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);
  // Elementwise sum; class names must agree.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

// Default names are "0".."K-1".
ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted, std::size_t classes,
                                 std::vector<std::string> class_names = {});

// A zero denominator yields 0 with the matching flag set, never NaN.
struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool precision_degenerate = false;
  bool recall_degenerate = false;
};

PrecisionRecall precision_recall(const ConfusionMatrix& cm, std::size_t class_index);
double f1(double precision, double recall);
double accuracy(const ConfusionMatrix& cm);

struct NamedMatrix {
  std::string model;
  ConfusionMatrix matrix;
};

enum class ReportFormat { text, json, csv };
ReportFormat report_format_from_name(const std::string& name);

struct ReportOptions {
  // Column order for per-class metrics; empty means class index order.
  std::vector<std::size_t> class_order;
};

// Per-model, per-class recall/precision/F1 plus accuracy. Text mirrors the
// usual comparison-table layout (P/R as percent with one decimal, F1 with three)
// followed by the raw matrices; json carries the counts so it can be re-read.
std::string report(const std::vector<NamedMatrix>& matrices, ReportFormat format,
                   const ReportOptions& options = {});

// Reads back the json produced by report().
std::vector<NamedMatrix> parse_json_report(const std::string& json);

}  // namespace ddnet::metrics
