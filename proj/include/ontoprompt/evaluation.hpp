#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

#include "ontoprompt/json_util.hpp"

namespace ontoprompt {

enum class Label { kTP, kTN, kFP, kFN };

std::string to_string(Label l);
std::optional<Label> label_from_string(std::string_view s);

struct Judgment {
  std::string question_id;
  std::optional<std::string> intent;
  std::string answer_excerpt;
  Label label = Label::kTP;
};

Json to_json(const Judgment& j);
Judgment judgment_from_json(const Json& j);  // throws SchemaError

/// One judgment per line; blank lines skipped. Throws ParseError/SchemaError
/// naming the offending line.
std::vector<Judgment> load_judgments(std::string_view ndjson);
std::vector<Judgment> load_judgments_file(const std::string& path);

struct JudgmentCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  friend bool operator==(const JudgmentCounts&, const JudgmentCounts&) = default;
};

JudgmentCounts tally(std::span<const Judgment> judgments);

using Ratio = boost::rational<std::int64_t>;

// Half-up rounding of a non-negative ratio to `decimals` places.
std::string to_fixed(const Ratio& value, int decimals = 4);

struct Metric {
  std::string name;
  std::optional<Ratio> value;  // empty: zero denominator

  bool defined() const { return value.has_value(); }
  const Ratio& get() const;  // throws UndefinedMetric
  std::string fixed4() const { return value ? to_fixed(*value) : "undefined"; }
};

struct MetricsReport {
  JudgmentCounts counts;
  Metric accuracy{"accuracy", {}};
  Metric precision{"precision", {}};
  Metric recall{"recall", {}};
  Metric f1{"f1", {}};
  Metric precision_star{"precision*", {}};
  Metric recall_star{"recall*", {}};
  Metric f1_star{"f1*", {}};

  std::array<const Metric*, 7> all() const {
    return {&accuracy, &precision, &recall, &f1, &precision_star, &recall_star, &f1_star};
  }
};

/// Exact-rational confusion metrics. The starred pair counts true negatives
/// as correct outcomes: precision* = (tp+tn)/(tp+tn+fp), recall* =
/// (tp+tn)/(tp+tn+fn). A metric whose denominator is zero is left undefined.
MetricsReport compute_metrics(const JudgmentCounts& c);

Json to_json(const MetricsReport& report);

/// Append-only judgment collection; concurrent appends get a total order.
/// With a path, each judgment is also appended to that NDJSON file.
class JudgmentStore {
 public:
  explicit JudgmentStore(std::optional<std::filesystem::path> path = std::nullopt);

  void append(const Judgment& j);
  std::vector<Judgment> snapshot() const;
  JudgmentCounts counts() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::vector<Judgment> judgments_;
};

}  // namespace ontoprompt
