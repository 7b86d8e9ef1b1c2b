#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "serc/corpus.hpp"

namespace serc {

/// Rows are gold labels, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(Task task);

  Task task() const { return task_; }
  const LabelSet& labels() const { return LabelSet::of(task_); }
  int num_classes() const { return static_cast<int>(labels().size()); }

  void add(int gold, int pred, long count = 1);
  long at(int gold, int pred) const { return counts_[index(gold, pred)]; }
  long total() const;
  long diagonal() const;
  long support(int cls) const;    // row sum
  long predicted(int cls) const;  // column sum

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t index(int gold, int pred) const;

  Task task_;
  std::vector<long> counts_;
};

ConfusionMatrix confusion(std::span<const std::string> golds, std::span<const std::string> preds, Task task);
ConfusionMatrix confusion(std::span<const int> golds, std::span<const int> preds, Task task);

/// Percentages in [0, 100]; std::nullopt marks an undefined value.
struct ClassMetrics {
  std::string label;
  std::optional<double> precision;  // undefined when the class was never predicted
  std::optional<double> recall;     // undefined when the class has no gold instances
  std::optional<double> f1;
  long support = 0;
  long predicted = 0;

  /// Never predicted: the row renders '-' in every column.
  bool no_prediction() const { return predicted == 0; }
  /// Neither predicted nor present in gold.
  bool undefined() const { return predicted == 0 && support == 0; }
};

/// 2PR / (P + R), or 0 when P + R == 0.
double f1_score(double precision, double recall);

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

struct MicroMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double accuracy = 0;
};

/// Throws ValidationError on an empty matrix.
MicroMetrics micro_metrics(const ConfusionMatrix& cm);

struct Report {
  Task task = Task::Temporal6;
  std::vector<ClassMetrics> per_class;
  MicroMetrics micro;
  long n = 0;
};

Report make_report(const ConfusionMatrix& cm);

/// Round half away from zero to one decimal.
double round1(double percent);

enum class ReportFormat { Text, Json };
std::string render_report(const Report& report, ReportFormat format);

/// Inverse of the JSON rendering.
Report parse_report_json(std::string_view text);

}  // namespace serc
