#include <doctest.h>

#include <fstream>
#include <thread>

#include "ontoprompt/errors.hpp"
#include "ontoprompt/evaluation.hpp"
#include "support.hpp"

using namespace ontoprompt;

namespace {

// Long division to `decimals` places, then half-up on the remainder.
std::string oracle_fixed(std::int64_t num, std::int64_t den, int decimals = 4) {
  std::int64_t whole = num / den;
  std::int64_t rem = num % den;
  std::vector<int> digits;
  for (int i = 0; i < decimals; ++i) {
    rem *= 10;
    digits.push_back(static_cast<int>(rem / den));
    rem %= den;
  }
  if (2 * rem >= den) {
    int i = decimals - 1;
    for (; i >= 0; --i) {
      if (++digits[static_cast<std::size_t>(i)] < 10) break;
      digits[static_cast<std::size_t>(i)] = 0;
    }
    if (i < 0) ++whole;
  }
  std::string out = std::to_string(whole) + ".";
  for (int d : digits) out += static_cast<char>('0' + d);
  return out;
}

struct OracleMetrics {
  std::optional<std::string> accuracy, precision, recall, f1, precision_star, recall_star, f1_star;
};

std::optional<std::string> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return oracle_fixed(num, den);
}

// Closed forms: F1 = 2tp / (2tp + fp + fn), and likewise for the starred pair
// with tp + tn in place of tp.
OracleMetrics oracle(const JudgmentCounts& c) {
  OracleMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  if (m.precision && m.recall) m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  if (m.f1 && c.tp == 0) m.f1.reset();
  const std::int64_t ok = c.tp + c.tn;
  m.precision_star = ratio(ok, ok + c.fp);
  m.recall_star = ratio(ok, ok + c.fn);
  if (m.precision_star && m.recall_star && ok > 0) m.f1_star = ratio(2 * ok, 2 * ok + c.fp + c.fn);
  return m;
}

std::optional<std::string> fixed(const Metric& m) {
  return m.defined() ? std::optional<std::string>(m.fixed4()) : std::nullopt;
}

bool leq(const Metric& a, const Metric& b) {
  return a.get().numerator() * b.get().denominator() <= b.get().numerator() * a.get().denominator();
}

bool eq(const Metric& a, const Metric& b) {
  return a.get().numerator() == b.get().numerator() && a.get().denominator() == b.get().denominator();
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("reference judgment counts") {
    const auto judgments = load_judgments_file(testing::fixture("reference_judgments.ndjson"));
    CHECK(judgments.size() == 34);
    const JudgmentCounts c = tally(judgments);
    CHECK(c == JudgmentCounts{17, 7, 9, 1});

    const MetricsReport r = compute_metrics(c);
    CHECK(r.accuracy.fixed4() == "0.7059");
    CHECK(r.precision.fixed4() == "0.6538");
    CHECK(r.recall.fixed4() == "0.9444");
    CHECK(r.f1.fixed4() == "0.7727");
    CHECK(r.precision_star.fixed4() == "0.7273");
    CHECK(r.recall_star.fixed4() == "0.9600");
    CHECK(r.f1_star.fixed4() == "0.8276");

    CHECK(r.accuracy.get() == Ratio(12, 17));
    CHECK(r.precision.get() == Ratio(17, 26));
    CHECK(r.recall.get() == Ratio(17, 18));
    CHECK(r.f1.get() == Ratio(17, 22));
    CHECK(r.precision_star.get() == Ratio(8, 11));
    CHECK(r.recall_star.get() == Ratio(24, 25));
    CHECK(r.f1_star.get() == Ratio(24, 29));
  }

  TEST_CASE("reference figures within print tolerance") {
    // The reference table prints precision 0.6534 and F1 0.7724; the exact
    // values for the same counts are 17/26 and 17/22.
    const MetricsReport r = compute_metrics({17, 7, 9, 1});
    auto value = [](const Metric& m) {
      return static_cast<double>(m.get().numerator()) / static_cast<double>(m.get().denominator());
    };
    CHECK(value(r.accuracy) == doctest::Approx(0.7059).epsilon(0.0001));
    CHECK(value(r.recall) == doctest::Approx(0.9444).epsilon(0.0001));
    CHECK(value(r.precision_star) == doctest::Approx(0.7273).epsilon(0.0001));
    CHECK(value(r.recall_star) == doctest::Approx(0.9600).epsilon(0.0001));
    CHECK(value(r.f1_star) == doctest::Approx(0.8276).epsilon(0.0001));
    CHECK(std::abs(value(r.precision) - 0.6534) < 0.001);
    CHECK(std::abs(value(r.f1) - 0.7724) < 0.001);
  }

  TEST_CASE("to_fixed rounds half up") {
    CHECK(to_fixed(Ratio(1, 8)) == "0.1250");
    CHECK(to_fixed(Ratio(1, 20000)) == "0.0001");
    CHECK(to_fixed(Ratio(1, 20001)) == "0.0000");
    CHECK(to_fixed(Ratio(99995, 100000)) == "1.0000");
    CHECK(to_fixed(Ratio(1)) == "1.0000");
    CHECK(to_fixed(Ratio(0)) == "0.0000");
    CHECK(to_fixed(Ratio(2, 3), 2) == "0.67");
    CHECK(to_fixed(Ratio(5, 2), 0) == "3");
    testing::Gen gen(4);
    for (int i = 0; i < 2000; ++i) {
      const std::int64_t den = gen.integer(1, 100000);
      const std::int64_t num = gen.integer(0, 100000);
      CHECK(to_fixed(Ratio(num, den)) == oracle_fixed(num, den));
    }
  }

  TEST_CASE("undefined metrics") {
    const MetricsReport zero = compute_metrics({0, 0, 0, 0});
    for (const Metric* m : zero.all()) CHECK_FALSE(m->defined());
    CHECK_THROWS_AS(zero.accuracy.get(), UndefinedMetric);
    CHECK(zero.accuracy.fixed4() == "undefined");

    const MetricsReport negatives_only = compute_metrics({0, 5, 0, 0});
    CHECK(negatives_only.accuracy.fixed4() == "1.0000");
    CHECK_FALSE(negatives_only.precision.defined());
    CHECK_FALSE(negatives_only.recall.defined());
    CHECK_FALSE(negatives_only.f1.defined());
    CHECK(negatives_only.f1_star.fixed4() == "1.0000");

    const MetricsReport all_wrong = compute_metrics({0, 0, 3, 2});
    CHECK(all_wrong.precision.fixed4() == "0.0000");
    CHECK(all_wrong.recall.fixed4() == "0.0000");
    CHECK_FALSE(all_wrong.f1.defined());

    CHECK_THROWS_AS(compute_metrics({-1, 0, 0, 0}), PreconditionError);
  }

  TEST_CASE("metrics match the closed-form oracle") {
    testing::Gen gen(17);
    for (int i = 0; i < 3000; ++i) {
      const int hi = gen.coin(0.2) ? 3 : 500;
      const JudgmentCounts c{gen.integer(0, hi), gen.integer(0, hi), gen.integer(0, hi), gen.integer(0, hi)};
      const MetricsReport r = compute_metrics(c);
      const OracleMetrics o = oracle(c);
      CHECK(fixed(r.accuracy) == o.accuracy);
      CHECK(fixed(r.precision) == o.precision);
      CHECK(fixed(r.recall) == o.recall);
      CHECK(fixed(r.f1) == o.f1);
      CHECK(fixed(r.precision_star) == o.precision_star);
      CHECK(fixed(r.recall_star) == o.recall_star);
      CHECK(fixed(r.f1_star) == o.f1_star);
    }
  }

  TEST_CASE("starred metrics never fall below the plain ones") {
    testing::Gen gen(23);
    for (int i = 0; i < 2000; ++i) {
      const JudgmentCounts c{gen.integer(1, 300), gen.coin(0.25) ? 0 : gen.integer(0, 300),
                             gen.integer(0, 300), gen.integer(0, 300)};
      const MetricsReport r = compute_metrics(c);
      CHECK(leq(r.precision, r.precision_star));
      CHECK(leq(r.recall, r.recall_star));
      CHECK(leq(r.f1, r.f1_star));
      if (c.tn == 0) {
        CHECK(eq(r.precision, r.precision_star));
        CHECK(eq(r.recall, r.recall_star));
        CHECK(eq(r.f1, r.f1_star));
      }
    }
  }

  TEST_CASE("report JSON") {
    const Json j = to_json(compute_metrics({17, 7, 9, 1}));
    CHECK(j["counts"] == Json{{"tp", 17}, {"tn", 7}, {"fp", 9}, {"fn", 1}});
    CHECK(j["metrics"]["precision*"] == "0.7273");
    CHECK(j["metrics"].size() == 7);
    CHECK(to_json(compute_metrics({0, 0, 0, 0}))["metrics"]["f1"].is_null());
  }

  TEST_CASE("judgment records") {
    const Judgment j = judgment_from_json(
        parse_json(R"({"question_id": "q1", "intent": null, "answer_excerpt": "x", "label": "TN"})"));
    CHECK(j.label == Label::kTN);
    CHECK_FALSE(j.intent.has_value());
    const Json back = to_json(j);
    CHECK(back["intent"].is_null());
    CHECK(judgment_from_json(back).question_id == "q1");

    CHECK_THROWS_AS(judgment_from_json(Json::array()), SchemaError);
    CHECK_THROWS_AS(judgment_from_json(parse_json(R"({"question_id": "q", "answer_excerpt": "", "label": "XX"})")),
                    SchemaError);
    CHECK_THROWS_AS(judgment_from_json(parse_json(R"({"question_id": 3, "answer_excerpt": "", "label": "TP"})")),
                    SchemaError);
    CHECK_THROWS_AS(judgment_from_json(
                        parse_json(R"({"question_id": "q", "intent": 1, "answer_excerpt": "", "label": "TP"})")),
                    SchemaError);
    for (const char* s : {"TP", "TN", "FP", "FN"}) CHECK(to_string(*label_from_string(s)) == s);
    CHECK_FALSE(label_from_string("tp").has_value());
  }

  TEST_CASE("NDJSON loading names the line") {
    const std::string good = R"({"question_id": "a", "answer_excerpt": "", "label": "TP"})";
    CHECK(load_judgments(good + "\n\n" + good + "\n").size() == 2);
    try {
      load_judgments(good + "\n{oops\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).starts_with("line 2"));
    }
    try {
      load_judgments(good + "\n" + good + "\n" + R"({"question_id": "a", "answer_excerpt": "", "label": "?"})");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.path() == "line 3.label");
    }
  }

  TEST_CASE("store appends concurrently and persists") {
    testing::TempDir dir;
    const std::string path = dir.file("judgments.ndjson");
    {
      JudgmentStore store(path);
      std::vector<std::thread> threads;
      for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
          for (int i = 0; i < 50; ++i) {
            store.append({"q" + std::to_string(t) + "-" + std::to_string(i), std::nullopt, "excerpt",
                          static_cast<Label>((t + i) % 4)});
          }
        });
      }
      for (auto& t : threads) t.join();
      CHECK(store.snapshot().size() == 400);
      CHECK(store.counts() == JudgmentCounts{100, 100, 100, 100});
    }
    JudgmentStore reopened(path);
    CHECK(reopened.snapshot().size() == 400);
    CHECK(reopened.counts() == JudgmentCounts{100, 100, 100, 100});
    CHECK(load_judgments_file(path).size() == 400);

    JudgmentStore memory;
    memory.append({"q", "cause", "e", Label::kFN});
    CHECK(memory.counts() == JudgmentCounts{0, 0, 0, 1});
  }
}
