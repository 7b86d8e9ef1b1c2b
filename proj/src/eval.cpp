#include "serc/eval.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "serc/error.hpp"

namespace serc {

ConfusionMatrix::ConfusionMatrix(Task task)
    : task_(task), counts_(LabelSet::of(task).size() * LabelSet::of(task).size(), 0) {}

std::size_t ConfusionMatrix::index(int gold, int pred) const {
  const int c = num_classes();
  if (gold < 0 || gold >= c || pred < 0 || pred >= c)
    throw ValidationError("class id out of range for task " + std::string(to_string(task_)));
  return static_cast<std::size_t>(gold * c + pred);
}

void ConfusionMatrix::add(int gold, int pred, long count) { counts_[index(gold, pred)] += count; }

long ConfusionMatrix::total() const {
  long n = 0;
  for (long v : counts_) n += v;
  return n;
}

long ConfusionMatrix::diagonal() const {
  long n = 0;
  for (int k = 0; k < num_classes(); ++k) n += at(k, k);
  return n;
}

long ConfusionMatrix::support(int cls) const {
  long n = 0;
  for (int p = 0; p < num_classes(); ++p) n += at(cls, p);
  return n;
}

long ConfusionMatrix::predicted(int cls) const {
  long n = 0;
  for (int g = 0; g < num_classes(); ++g) n += at(g, cls);
  return n;
}

ConfusionMatrix confusion(std::span<const int> golds, std::span<const int> preds, Task task) {
  if (golds.size() != preds.size())
    throw ValidationError("confusion: " + std::to_string(golds.size()) + " gold labels but " +
                          std::to_string(preds.size()) + " predictions");
  ConfusionMatrix cm(task);
  for (std::size_t i = 0; i < golds.size(); ++i) cm.add(golds[i], preds[i]);
  return cm;
}

ConfusionMatrix confusion(std::span<const std::string> golds, std::span<const std::string> preds, Task task) {
  if (golds.size() != preds.size())
    throw ValidationError("confusion: " + std::to_string(golds.size()) + " gold labels but " +
                          std::to_string(preds.size()) + " predictions");
  const auto& labels = LabelSet::of(task);
  ConfusionMatrix cm(task);
  for (std::size_t i = 0; i < golds.size(); ++i) cm.add(labels.id(golds[i]), labels.id(preds[i]));
  return cm;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out;
  for (int k = 0; k < cm.num_classes(); ++k) {
    ClassMetrics m;
    m.label = cm.labels().label(k);
    m.support = cm.support(k);
    m.predicted = cm.predicted(k);
    const double tp = static_cast<double>(cm.at(k, k));
    if (m.predicted > 0) m.precision = 100.0 * tp / static_cast<double>(m.predicted);
    if (m.support > 0) m.recall = 100.0 * tp / static_cast<double>(m.support);
    if (m.precision && m.recall) m.f1 = f1_score(*m.precision, *m.recall);
    out.push_back(std::move(m));
  }
  return out;
}

MicroMetrics micro_metrics(const ConfusionMatrix& cm) {
  const long n = cm.total();
  if (n == 0) throw ValidationError("micro metrics of an empty confusion matrix are undefined");
  // Single-label: pooled FP = pooled FN = n - TP, so P = R = F1 = accuracy.
  const double acc = 100.0 * static_cast<double>(cm.diagonal()) / static_cast<double>(n);
  return {acc, acc, acc, acc};
}

Report make_report(const ConfusionMatrix& cm) {
  return Report{cm.task(), per_class_metrics(cm), micro_metrics(cm), cm.total()};
}

double round1(double percent) { return std::round(percent * 10.0) / 10.0; }

namespace {

std::string cell(const std::optional<double>& v, bool blank) {
  if (blank || !v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", round1(*v));
  return buf;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string render_report(const Report& report, ReportFormat format) {
  if (format == ReportFormat::Json) {
    nlohmann::json j;
    j["task"] = std::string(to_string(report.task));
    j["per_class"] = nlohmann::json::array();
    for (const auto& m : report.per_class)
      j["per_class"].push_back({{"label", m.label},
                                {"precision", opt(m.precision)},
                                {"recall", opt(m.recall)},
                                {"f1", opt(m.f1)},
                                {"support", m.support},
                                {"predicted", m.predicted}});
    j["micro"] = {{"precision", report.micro.precision}, {"recall", report.micro.recall}, {"f1", report.micro.f1}};
    j["accuracy"] = report.micro.accuracy;
    j["n"] = report.n;
    return j.dump(2) + "\n";
  }

  std::size_t width = 5;
  for (const auto& m : report.per_class) width = std::max(width, m.label.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %7s %7s %7s %8s\n", static_cast<int>(width), "Class", "P", "R", "F1", "Support");
  out += line;
  for (const auto& m : report.per_class) {
    const bool blank = m.no_prediction();
    std::snprintf(line, sizeof line, "%-*s %7s %7s %7s %8ld\n", static_cast<int>(width), m.label.c_str(),
                  cell(m.precision, blank).c_str(), cell(m.recall, blank).c_str(), cell(m.f1, blank).c_str(),
                  m.support);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-*s %7s %7s %7s %8ld\n", static_cast<int>(width), "Avg",
                cell(report.micro.precision, false).c_str(), cell(report.micro.recall, false).c_str(),
                cell(report.micro.f1, false).c_str(), report.n);
  out += line;
  std::snprintf(line, sizeof line, "Accuracy %.1f (n=%ld)\n", round1(report.micro.accuracy), report.n);
  out += line;
  return out;
}

Report parse_report_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Report r;
    r.task = task_from_string(j.at("task").get<std::string>());
    for (const auto& c : j.at("per_class")) {
      ClassMetrics m;
      m.label = c.at("label").get<std::string>();
      m.precision = opt_from(c.at("precision"));
      m.recall = opt_from(c.at("recall"));
      m.f1 = opt_from(c.at("f1"));
      m.support = c.at("support").get<long>();
      m.predicted = c.at("predicted").get<long>();
      r.per_class.push_back(std::move(m));
    }
    r.micro.precision = j.at("micro").at("precision").get<double>();
    r.micro.recall = j.at("micro").at("recall").get<double>();
    r.micro.f1 = j.at("micro").at("f1").get<double>();
    r.micro.accuracy = j.at("accuracy").get<double>();
    r.n = j.at("n").get<long>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report JSON is malformed: ") + e.what());
  }
}

}  // namespace serc
