#include "ontoprompt/evaluation.hpp"

#include <fstream>
#include <sstream>

#include "ontoprompt/errors.hpp"

namespace ontoprompt {
namespace {

std::optional<Ratio> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return Ratio(num, den);
}

std::optional<Ratio> harmonic_mean(const std::optional<Ratio>& a, const std::optional<Ratio>& b) {
  if (!a || !b) return std::nullopt;
  const Ratio sum = *a + *b;
  if (sum.numerator() == 0) return std::nullopt;
  return Ratio(2) * *a * *b / sum;
}

}  // namespace

std::string to_string(Label l) {
  switch (l) {
    case Label::kTP:
      return "TP";
    case Label::kTN:
      return "TN";
    case Label::kFP:
      return "FP";
    case Label::kFN:
      return "FN";
  }
  return "TP";
}

std::optional<Label> label_from_string(std::string_view s) {
  if (s == "TP") return Label::kTP;
  if (s == "TN") return Label::kTN;
  if (s == "FP") return Label::kFP;
  if (s == "FN") return Label::kFN;
  return std::nullopt;
}

Json to_json(const Judgment& j) {
  Json out = Json::object();
  out["question_id"] = j.question_id;
  out["intent"] = j.intent ? Json(*j.intent) : Json();
  out["answer_excerpt"] = j.answer_excerpt;
  out["label"] = to_string(j.label);
  return out;
}

Judgment judgment_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("$", "judgment must be an object");
  auto text = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw SchemaError(key, "expected a string");
    return it->get<std::string>();
  };
  Judgment out;
  out.question_id = text("question_id");
  out.answer_excerpt = j.contains("answer_excerpt") ? text("answer_excerpt") : std::string();
  if (auto it = j.find("intent"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError("intent", "expected a string or null");
    out.intent = it->get<std::string>();
  }
  const std::string label = text("label");
  auto l = label_from_string(label);
  if (!l) throw SchemaError("label", "unknown label '" + label + "' (expected TP, TN, FP or FN)");
  out.label = *l;
  return out;
}

std::vector<Judgment> load_judgments(std::string_view ndjson) {
  std::vector<Judgment> out;
  std::istringstream in{std::string(ndjson)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    Json j;
    try {
      j = parse_json(line);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    try {
      out.push_back(judgment_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError(where + "." + e.path(), e.what());
    }
  }
  return out;
}

std::vector<Judgment> load_judgments_file(const std::string& path) {
  return load_judgments(read_file(path));
}

JudgmentCounts tally(std::span<const Judgment> judgments) {
  JudgmentCounts c;
  for (const auto& j : judgments) {
    switch (j.label) {
      case Label::kTP:
        ++c.tp;
        break;
      case Label::kTN:
        ++c.tn;
        break;
      case Label::kFP:
        ++c.fp;
        break;
      case Label::kFN:
        ++c.fn;
        break;
    }
  }
  return c;
}

std::string to_fixed(const Ratio& value, int decimals) {
  std::int64_t scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const std::int64_t num = value.numerator();
  const std::int64_t den = value.denominator();
  const std::int64_t scaled = (2 * num * scale + den) / (2 * den);
  std::string out = std::to_string(scaled / scale);
  if (decimals <= 0) return out;
  std::string digits = std::to_string(scaled % scale);
  digits.insert(0, static_cast<std::size_t>(decimals) - digits.size(), '0');
  return out + "." + digits;
}

const Ratio& Metric::get() const {
  if (!value) throw UndefinedMetric(name);
  return *value;
}

MetricsReport compute_metrics(const JudgmentCounts& c) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) {
    throw PreconditionError("judgment counts must be non-negative");
  }
  MetricsReport r;
  r.counts = c;
  const std::int64_t correct = c.tp + c.tn;
  r.accuracy.value = ratio(correct, c.tp + c.tn + c.fp + c.fn);
  r.precision.value = ratio(c.tp, c.tp + c.fp);
  r.recall.value = ratio(c.tp, c.tp + c.fn);
  r.f1.value = harmonic_mean(r.precision.value, r.recall.value);
  r.precision_star.value = ratio(correct, correct + c.fp);
  r.recall_star.value = ratio(correct, correct + c.fn);
  r.f1_star.value = harmonic_mean(r.precision_star.value, r.recall_star.value);
  return r;
}

Json to_json(const MetricsReport& report) {
  Json counts = Json::object();
  counts["tp"] = report.counts.tp;
  counts["tn"] = report.counts.tn;
  counts["fp"] = report.counts.fp;
  counts["fn"] = report.counts.fn;
  Json metrics = Json::object();
  for (const Metric* m : report.all()) {
    metrics[m->name] = m->defined() ? Json(m->fixed4()) : Json();
  }
  Json out = Json::object();
  out["counts"] = std::move(counts);
  out["metrics"] = std::move(metrics);
  return out;
}

JudgmentStore::JudgmentStore(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
  if (path_ && std::filesystem::exists(*path_)) judgments_ = load_judgments_file(path_->string());
}

void JudgmentStore::append(const Judgment& j) {
  std::lock_guard lock(mutex_);
  if (path_) {
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    if (!out) throw ConfigError("cannot append to " + path_->string());
    out << compact_dump(to_json(j)) << '\n';
  }
  judgments_.push_back(j);
}

std::vector<Judgment> JudgmentStore::snapshot() const {
  std::lock_guard lock(mutex_);
  return judgments_;
}

JudgmentCounts JudgmentStore::counts() const {
  std::lock_guard lock(mutex_);
  return tally(judgments_);
}

}  // namespace ontoprompt
