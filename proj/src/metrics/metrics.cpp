#include "metrics/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "core/error.hpp"

namespace ddnet::metrics {
namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::vector<std::size_t> column_order(const ConfusionMatrix& cm, const ReportOptions& options) {
  if (options.class_order.empty()) {
    std::vector<std::size_t> order(cm.classes());
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
  }
  for (auto c : options.class_order) {
    if (c >= cm.classes()) fail(Errc::invalid_argument, "report class order out of range");
  }
  return options.class_order;
}

std::string render_text(const std::vector<NamedMatrix>& ms, const ReportOptions& options) {
  const auto order = column_order(ms.front().matrix, options);
  const auto& names = ms.front().matrix.class_names();
  std::size_t name_w = 5;
  for (const auto& m : ms) name_w = std::max(name_w, m.model.size());
  name_w += 2;
  const std::size_t cell = 10;
  const std::size_t group = cell * order.size();

  std::ostringstream os;
  bool any_flag = false;
  os << pad("Model", name_w) << "| " << pad("Recall", group) << "| " << pad("Precision", group)
     << "| " << pad("F1 Score", group) << "| Accuracy\n";
  os << pad("", name_w);
  for (int g = 0; g < 3; ++g) {
    os << "| ";
    for (auto c : order) os << pad(names[c], cell);
  }
  os << "|\n";
  for (const auto& m : ms) {
    std::vector<PrecisionRecall> pr;
    for (auto c : order) pr.push_back(precision_recall(m.matrix, c));
    os << pad(m.model, name_w) << "| ";
    for (const auto& v : pr) {
      std::string s = fixed(100.0 * v.recall, 1) + "%" + (v.recall_degenerate ? "*" : "");
      any_flag |= v.recall_degenerate;
      os << pad(s, cell);
    }
    os << "| ";
    for (const auto& v : pr) {
      std::string s = fixed(100.0 * v.precision, 1) + "%" + (v.precision_degenerate ? "*" : "");
      any_flag |= v.precision_degenerate;
      os << pad(s, cell);
    }
    os << "| ";
    for (const auto& v : pr) os << pad(fixed(f1(v.precision, v.recall), 3), cell);
    os << "| " << fixed(100.0 * accuracy(m.matrix), 2) << "%\n";
  }
  if (any_flag) os << "* zero denominator, reported as 0\n";
  for (const auto& m : ms) {
    const auto& cm = m.matrix;
    os << "\nConfusion matrix: " << m.model << " (rows = true, columns = predicted)\n";
    std::size_t w = 8;
    for (const auto& n : cm.class_names()) w = std::max(w, n.size() + 2);
    os << pad("", w);
    for (const auto& n : cm.class_names()) os << lpad(n, w);
    os << "\n";
    for (std::size_t t = 0; t < cm.classes(); ++t) {
      os << pad(cm.class_names()[t], w);
      for (std::size_t p = 0; p < cm.classes(); ++p) os << lpad(std::to_string(cm.at(t, p)), w);
      os << "\n";
    }
  }
  return os.str();
}

std::string render_json(const std::vector<NamedMatrix>& ms, const ReportOptions& options) {
  nlohmann::ordered_json doc;
  doc["models"] = nlohmann::ordered_json::array();
  for (const auto& m : ms) {
    const auto& cm = m.matrix;
    nlohmann::ordered_json entry;
    entry["model"] = m.model;
    entry["classes"] = cm.class_names();
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < cm.classes(); ++t) {
      auto row = nlohmann::ordered_json::array();
      for (std::size_t p = 0; p < cm.classes(); ++p) row.push_back(cm.at(t, p));
      rows.push_back(row);
    }
    entry["confusion"] = rows;
    auto per_class = nlohmann::ordered_json::array();
    for (auto c : column_order(cm, options)) {
      const auto pr = precision_recall(cm, c);
      nlohmann::ordered_json item;
      item["class"] = cm.class_names()[c];
      item["recall"] = pr.recall;
      item["precision"] = pr.precision;
      item["f1"] = f1(pr.precision, pr.recall);
      item["recall_degenerate"] = pr.recall_degenerate;
      item["precision_degenerate"] = pr.precision_degenerate;
      per_class.push_back(item);
    }
    entry["per_class"] = per_class;
    entry["accuracy"] = accuracy(cm);
    doc["models"].push_back(entry);
  }
  return doc.dump(2) + "\n";
}

std::string render_csv(const std::vector<NamedMatrix>& ms, const ReportOptions& options) {
  std::string out = "model,class,recall,precision,f1,accuracy\n";
  for (const auto& m : ms) {
    const double acc = accuracy(m.matrix);
    for (auto c : column_order(m.matrix, options)) {
      const auto pr = precision_recall(m.matrix, c);
      out += m.model + "," + m.matrix.class_names()[c] + "," + fixed(pr.recall, 6) + "," +
             fixed(pr.precision, 6) + "," + fixed(f1(pr.precision, pr.recall), 6) + "," +
             fixed(acc, 6) + "\n";
    }
  }
  return out;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {
  if (names_.empty()) fail(Errc::invalid_argument, "confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  if (truth >= classes() || predicted >= classes()) {
    fail(Errc::invalid_argument, "confusion matrix index out of range");
  }
  return counts_[truth * classes() + predicted];
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= classes() || predicted >= classes()) {
    fail(Errc::invalid_argument, "label (" + std::to_string(truth) + ", " +
                                     std::to_string(predicted) + ") outside [0, " +
                                     std::to_string(classes()) + ")");
  }
  counts_[truth * classes() + predicted] += n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (names_ != other.names_) fail(Errc::invalid_argument, "cannot merge matrices over different classes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted, std::size_t classes,
                                 std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) {
    fail(Errc::invalid_argument, "label lists differ in length: " + std::to_string(truth.size()) +
                                     " vs " + std::to_string(predicted.size()));
  }
  if (class_names.empty()) {
    for (std::size_t i = 0; i < classes; ++i) class_names.push_back(std::to_string(i));
  }
  if (class_names.size() != classes) fail(Errc::invalid_argument, "class name count mismatch");
  ConfusionMatrix cm(std::move(class_names));
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

PrecisionRecall precision_recall(const ConfusionMatrix& cm, std::size_t c) {
  if (c >= cm.classes()) fail(Errc::invalid_argument, "class index out of range");
  const std::uint64_t tp = cm.at(c, c);
  std::uint64_t predicted = 0, actual = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    predicted += cm.at(k, c);
    actual += cm.at(c, k);
  }
  PrecisionRecall r;
  if (predicted == 0) {
    r.precision_degenerate = true;
  } else {
    r.precision = static_cast<double>(tp) / static_cast<double>(predicted);
  }
  if (actual == 0) {
    r.recall_degenerate = true;
  } else {
    r.recall = static_cast<double>(tp) / static_cast<double>(actual);
  }
  return r;
}

double f1(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) fail(Errc::invalid_argument, "accuracy of an empty confusion matrix");
  std::uint64_t trace = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) trace += cm.at(k, k);
  return static_cast<double>(trace) / static_cast<double>(total);
}

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "text") return ReportFormat::text;
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  fail(Errc::invalid_argument, "unknown report format '" + name + "'");
}

std::string report(const std::vector<NamedMatrix>& matrices, ReportFormat format,
                   const ReportOptions& options) {
  if (matrices.empty()) fail(Errc::invalid_argument, "report needs at least one matrix");
  switch (format) {
    case ReportFormat::text: return render_text(matrices, options);
    case ReportFormat::json: return render_json(matrices, options);
    case ReportFormat::csv: return render_csv(matrices, options);
  }
  fail(Errc::invalid_argument, "unknown report format");
}

std::vector<NamedMatrix> parse_json_report(const std::string& json) {
  std::vector<NamedMatrix> out;
  try {
    const auto doc = nlohmann::json::parse(json);
    for (const auto& entry : doc.at("models")) {
      ConfusionMatrix cm(entry.at("classes").get<std::vector<std::string>>());
      const auto& rows = entry.at("confusion");
      if (rows.size() != cm.classes()) fail(Errc::parse, "confusion row count mismatch");
      for (std::size_t t = 0; t < cm.classes(); ++t) {
        if (rows[t].size() != cm.classes()) fail(Errc::parse, "confusion column count mismatch");
        for (std::size_t p = 0; p < cm.classes(); ++p) cm.add(t, p, rows[t][p].get<std::uint64_t>());
      }
      out.push_back({entry.at("model").get<std::string>(), std::move(cm)});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("report json: ") + e.what());
  }
  return out;
}

}  // namespace ddnet::metrics
