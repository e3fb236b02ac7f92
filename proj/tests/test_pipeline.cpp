#include <doctest.h>

#include <atomic>

#include "ontoprompt/dialogue_pipeline.hpp"
#include "ontoprompt/prompt_engine.hpp"
#include "support.hpp"

using namespace ontoprompt;

namespace {

constexpr const char* kQuestion = "На що повинна спиратися ФРМ?";

MetaOntologySnapshot meta() {
  static const auto m =
      std::make_shared<const MetaOntology>(load_meta_ontology_file(testing::fixture("meta.json")));
  return m;
}

ContextStoreSnapshot toy() {
  static const auto s =
      std::make_shared<const ContextStore>(load_contexts_file(testing::fixture("toy_ctx.json")));
  return s;
}

std::shared_ptr<ScriptedBackend> golden() {
  return std::shared_ptr<ScriptedBackend>(load_script_file(testing::fixture("golden_script.json")));
}

// Golden script with one template's reply replaced.
std::shared_ptr<LlmBackend> golden_except(const std::string& template_id, std::string reply) {
  auto base = golden();
  std::vector<ScriptEntry> entries = base->entries();
  for (auto& e : entries) {
    if (e.pattern == template_id) e.response = reply;
  }
  return std::make_shared<ScriptedBackend>(entries);
}

std::string intents_reply(const std::vector<std::tuple<std::string, std::string, double>>& xs) {
  Json arr = Json::array();
  for (const auto& [name, type, p] : xs) {
    arr.push_back({{"intent", name}, {"type", type}, {"probability", p}, {"subject", "ФРМ"}, {"object", nullptr}});
  }
  return arr.dump();
}

std::vector<State> golden_states() {
  using S = State;
  return {S::kM0, S::kM1, S::kM2, S::kM4, S::kM6, S::kM7, S::kM8, S::kM8, S::kM8, S::kM10};
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("preprocess") {
    const PreprocessRules rules;
    CHECK(preprocess("  На  що\tповинна\n спиратися ФРМ? ", rules) == kQuestion);
    CHECK(preprocess(std::string("a\x01" "b", 3), rules) == "ab");
    CHECK(preprocess("\xD0\xB8\xCC\x86", rules) == "й");
    CHECK_THROWS_AS(preprocess("   \t\n", rules), EmptyInput);
    CHECK_THROWS_AS(preprocess("", rules), EmptyInput);
    CHECK_THROWS_AS(preprocess("\x01\x02", rules), EmptyInput);
    PreprocessRules short_rules;
    short_rules.max_length = 3;
    CHECK(preprocess("ФРМ медицина", short_rules) == "ФРМ");
    PreprocessRules raw;
    raw.collapse_whitespace = false;
    raw.strip_control = false;
    raw.normalize_unicode = false;
    CHECK(preprocess(" a  b ", raw) == " a  b ");
  }

  TEST_CASE("detect_intents on the reference reply") {
    auto backend = golden();
    Exchange x;
    const auto intents = detect_intents(kQuestion, *meta(), *backend, {}, &x);
    REQUIRE(intents.size() == 3);
    CHECK(intents[0].name == "subject");
    CHECK(intents[0].type == "interrogation");
    CHECK(intents[0].probability == 0.8);
    CHECK(intents[0].subject == "ФРМ");
    CHECK_FALSE(intents[0].object.has_value());
    CHECK(intents[1].name == "cause");
    CHECK(intents[1].object == "спиратися");
    CHECK(intents[2].name == "way of doing");
    CHECK_FALSE(intents[2].subject.has_value());
    CHECK(x.template_id == "intents-v1");
    CHECK(x.attempts == 1);
    CHECK(parse_prompt(x.prompt).find("text")->get<std::string>() == kQuestion);
  }

  TEST_CASE("intent floor, ordering and cap") {
    auto backend = golden_except(
        "intents-v1", intents_reply({{"place", "narration", 0.35}, {"cause", "narration", 0.9},
                                     {"origin", "narration", 0.29}, {"action", "imperative", 0.5},
                                     {"relation", "narration", 0.6}, {"quantity", "narration", 0.7}}));
    const auto intents = detect_intents(kQuestion, *meta(), *backend, {});
    REQUIRE(intents.size() == 4);
    CHECK(intents[0].name == "cause");
    CHECK(intents[1].name == "quantity");
    CHECK(intents[2].name == "relation");
    CHECK(intents[3].name == "action");
    PipelineConfig strict;
    strict.intent_floor = 0.65;
    CHECK(detect_intents(kQuestion, *meta(), *backend, strict).size() == 2);
  }

  TEST_CASE("intent replies outside the catalog or bounds are malformed") {
    CHECK_THROWS_AS(detect_intents(kQuestion, *meta(),
                                   *golden_except("intents-v1", intents_reply({{"weather", "narration", 0.5}})), {}),
                    MalformedResponse);
    CHECK_THROWS_AS(detect_intents(kQuestion, *meta(),
                                   *golden_except("intents-v1", intents_reply({{"cause", "exclamation", 0.5}})), {}),
                    MalformedResponse);
    CHECK_THROWS_AS(detect_intents(kQuestion, *meta(),
                                   *golden_except("intents-v1", intents_reply({{"cause", "narration", 1.3}})), {}),
                    MalformedResponse);
    CHECK(detect_intents(kQuestion, *meta(), *golden_except("intents-v1", "None"), {}).empty());
  }

  TEST_CASE("one re-ask on a malformed intent reply") {
    std::atomic<int> calls{0};
    testing::FunctionBackend flaky([&](const auto&, const auto&) -> std::string {
      return calls++ == 0 ? "sorry, here you go" : intents_reply({{"cause", "narration", 0.5}});
    });
    Exchange x;
    CHECK(detect_intents(kQuestion, *meta(), flaky, {}, &x).size() == 1);
    CHECK(x.attempts == 2);
    testing::FunctionBackend broken([](const auto&, const auto&) { return std::string("nope"); });
    CHECK_THROWS_AS(detect_intents(kQuestion, *meta(), broken, {}), MalformedResponse);
    CHECK(broken.calls() == 2);
  }

  TEST_CASE("conclusion directive") {
    CHECK_FALSE(detect_conclusion_directive(kQuestion, *meta(), *golden(), {}).expected);
    auto yes = golden_except("conclusion-v1", R"({"expected": true, "kind": "recommendation"})");
    const auto d = detect_conclusion_directive(kQuestion, *meta(), *yes, {});
    CHECK(d.expected);
    CHECK(d.kind == "recommendation");
    CHECK_THROWS_AS(detect_conclusion_directive(
                        kQuestion, *meta(), *golden_except("conclusion-v1", R"({"expected": false, "kind": "summary"})"), {}),
                    MalformedResponse);
    CHECK_THROWS_AS(detect_conclusion_directive(
                        kQuestion, *meta(), *golden_except("conclusion-v1", R"({"expected": "yes"})"), {}),
                    MalformedResponse);
  }

  TEST_CASE("entity extraction") {
    const auto groups = extract_entities(kQuestion, *meta(), *golden(), {});
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].words == std::vector<std::string>{"ФРМ"});
    CHECK(groups[0].group_type == GroupType::kNoun);
    CHECK(groups[0].main_word == "ФРМ");
    CHECK(groups[1].words == std::vector<std::string>{"повинна", "спиратися"});
    CHECK(groups[1].group_type == GroupType::kVerb);
    CHECK(groups[1].main_word == "спиратися");

    auto bad_main = golden_except("entities-v1", R"([{"words": ["ФРМ"], "type": "noun", "main word": "медицина"}])");
    CHECK_THROWS_AS(extract_entities(kQuestion, *meta(), *bad_main, {}), MalformedResponse);
    CHECK(bad_main->calls() == 2);
    auto empty_words = golden_except("entities-v1", R"([{"words": [], "type": "noun", "main word": "x"}])");
    CHECK_THROWS_AS(extract_entities(kQuestion, *meta(), *empty_words, {}), MalformedResponse);
  }

  TEST_CASE("information extraction") {
    const std::vector<ContextPassage> ctx{{"c1", "passage"}};
    const Intent cause{"cause", "narration", 0.6, "ФРМ", "спиратися"};
    const Intent place{"place", "narration", 0.6, std::nullopt, std::nullopt};
    auto backend = golden();
    Exchange x;
    const IntentResult r = extract_information(kQuestion, cause, ctx, *meta(), *backend, {}, &x);
    CHECK(x.template_id == "extract-cause-v1");
    CHECK(r.intent == "cause");
    REQUIRE(r.results.has_value());
    CHECK(r.results->get<std::string>().starts_with("ФРМ спирається"));
    // the generic reply carries no record for "place"
    CHECK(extract_information(kQuestion, place, ctx, *meta(), *backend, {}).is_none());
    CHECK(extract_information(kQuestion, cause, ctx, *meta(), *golden_except("extract-cause-v1", "None"), {})
              .is_none());
    CHECK(extract_information(kQuestion, cause, ctx, *meta(),
                              *golden_except("extract-cause-v1", R"([{"intent": "cause", "results": "none"}])"), {})
              .is_none());
    CHECK_THROWS_AS(extract_information(kQuestion, cause, {}, *meta(), *backend, {}), PreconditionError);

    const StructuredPrompt sent = parse_prompt(x.prompt);
    CHECK(*sent.find("intent") == "cause");
    CHECK(*sent.find("contexts") == Json::array({"passage"}));
  }

  TEST_CASE("conclusion derivation") {
    const std::vector<ContextPassage> ctx{{"c1", "passage"}};
    std::vector<ScriptEntry> entries{{Matcher::kTemplateId, "derive-v1",
                                      R"([{"intent": "conclusion", "results": "ФРМ має наукову основу"}])"}};
    ScriptedBackend derive(entries);
    const IntentResult r = derive_conclusions(kQuestion, {true, "summary"}, ctx, *meta(), derive, {});
    CHECK(r.intent == kConclusionIntent);
    CHECK(*r.results == "ФРМ має наукову основу");
    CHECK_THROWS_AS(derive_conclusions(kQuestion, {false, std::nullopt}, ctx, *meta(), derive, {}),
                    PreconditionError);
    CHECK_THROWS_AS(derive_conclusions(kQuestion, {true, std::nullopt}, {}, *meta(), derive, {}),
                    PreconditionError);
  }

  TEST_CASE("result formatting kinds") {
    const std::vector<IntentResult> parts{
        {"subject", Json("текст")},
        {"quantity", Json(42)},
        {"origin", Json("2023-05-01")},
        {"relation", Json("https://example.org/x")},
        {"way of doing", Json::array({"a", "b"})},
        {"conditions", Json::array({Json::object({{"k", "a"}, {"v", 1}}), Json::object({{"k", "b"}, {"v", 2}})})},
        {"place", std::nullopt}};
    const Json doc = format_results(parts, *meta());
    CHECK(doc["status"] == "answered");
    const Json& a = doc["answers"];
    REQUIRE(a.size() == 7);
    CHECK(a[0]["kind"] == "text");
    CHECK(a[1]["kind"] == "number");
    CHECK(a[1]["rendered"] == "42");
    CHECK(a[2]["kind"] == "date");
    CHECK(a[3]["kind"] == "link");
    CHECK(a[3]["rendered"] == "[https://example.org/x](https://example.org/x)");
    CHECK(a[4]["kind"] == "list");
    CHECK(a[4]["rendered"] == "- a\n- b");
    CHECK(a[5]["kind"] == "table");
    CHECK(a[5]["rendered"] == "| k | v |\n| --- | --- |\n| a | 1 |\n| b | 2 |");
    CHECK(a[6]["kind"] == "none");
    CHECK(a[6]["rendered"] == "no information available");

    const Json nothing = format_results({{"place", std::nullopt}}, *meta());
    CHECK(nothing["status"] == "no-information");
    CHECK(no_context_answer(*meta())["status"] == "no-relevant-contexts");
    CHECK(no_context_answer(*meta())["answers"][0]["rendered"] == "no relevant contexts");
  }

  TEST_CASE("rendering rules come from the formatting template") {
    MetaOntology custom = *meta();
    for (auto& t : custom.templates) {
      if (t.id != "format-v1") continue;
      for (auto& f : t.fields) {
        if (f.key == "rendering rules") f.value = Json{{"list", "numbered"}, {"table", "tsv"}, {"link", 5}};
      }
    }
    const Json doc = format_results({{"a", Json::array({"x", "y"})}, {"b", Json::array({Json::array({1, 2})})},
                                     {"c", Json("http://e.x")}},
                                    custom);
    CHECK(doc["answers"][0]["rendered"] == "1. x\n2. y");
    CHECK(doc["answers"][1]["rendered"] == "1\t2");
    CHECK(doc["answers"][2]["rendered"] == "[http://e.x](http://e.x)");
  }

  TEST_CASE("golden dialogue act") {
    auto backend = golden();
    const DialogueContext ctx{meta(), toy(), backend};
    const DialogueOutcome out = run_dialogue_act(kQuestion, ctx, {});
    CHECK(out.trace.states() == golden_states());
    CHECK_FALSE(out.trace.error.has_value());
    CHECK(backend->calls() == 6);
    CHECK(out.answer["status"] == "answered");
    CHECK(out.answer["answers"].size() == 3);
    const auto& m7 = out.trace.entries[5];
    CHECK(m7.process == Process::kCxSel);
    CHECK(m7.payload.size() == 2);
    CHECK(out.trace.entries[6].formed_by == Process::kInfPrForm);
    CHECK(out.trace.entries[6].payload["intent"] == "subject");
    CHECK(out.trace.entries[7].payload["intent"] == "cause");
    CHECK(out.trace.entries[8].payload["intent"] == "way of doing");
  }

  TEST_CASE("serial and parallel runs agree byte for byte") {
    PipelineConfig serial;
    serial.parallel = false;
    const DialogueContext ctx{meta(), toy(), golden()};
    const auto a = run_dialogue_act(kQuestion, ctx, {});
    const auto b = run_dialogue_act(kQuestion, ctx, serial);
    CHECK(a.answer.dump() == b.answer.dump());
    CHECK(a.trace.to_json(false).dump() == b.trace.to_json(false).dump());
  }

  TEST_CASE("conclusion branch adds M9") {
    std::vector<ScriptEntry> entries = golden()->entries();
    for (auto& e : entries) {
      if (e.pattern == "conclusion-v1") e.response = R"({"expected": true, "kind": "summary"})";
    }
    entries.push_back({Matcher::kTemplateId, "derive-v1", R"({"result": [{"intent": "conclusion", "results": "висновок"}]})"});
    auto backend = std::make_shared<ScriptedBackend>(entries);
    const auto out = run_dialogue_act(kQuestion, {meta(), toy(), backend}, {});
    CHECK(out.trace.count(State::kM9) == 1);
    CHECK(out.trace.entries[9].formed_by == Process::kConPrForm);
    CHECK(out.answer["answers"].size() == 4);
    CHECK(out.answer["answers"][3]["intent"] == "conclusion");
  }

  TEST_CASE("no relevant contexts short-circuits without further calls") {
    std::vector<ScriptEntry> entries = golden()->entries();
    for (auto& e : entries) {
      if (e.pattern == "entities-v1") e.response = R"([{"words": ["погода"], "type": "noun", "main word": "погода"}])";
      // an intent subject would still bind "ФРМ"
      if (e.pattern == "intents-v1") {
        e.response = R"([{"intent": "place", "type": "narration", "probability": 0.9, "subject": null, "object": null}])";
      }
    }
    auto b = std::make_shared<ScriptedBackend>(entries);
    const auto out = run_dialogue_act(kQuestion, {meta(), toy(), b}, {});
    CHECK(out.trace.states().back() == State::kM7);
    CHECK(out.answer["status"] == "no-relevant-contexts");
    CHECK(b->calls() == 3);
  }

  TEST_CASE("failures carry the process and a partial trace") {
    SUBCASE("empty input") {
      try {
        run_dialogue_act("   ", {meta(), toy(), golden()}, {});
        FAIL("expected failure");
      } catch (const DialogueFailure& e) {
        CHECK(e.process() == "PREP");
        CHECK(e.code() == "EmptyInput");
        CHECK(e.trace().states() == std::vector<State>{State::kM0});
      }
    }
    SUBCASE("intent detection fails") {
      auto b = golden_except("intents-v1", "garbage");
      try {
        run_dialogue_act(kQuestion, {meta(), toy(), b}, {});
        FAIL("expected failure");
      } catch (const DialogueFailure& e) {
        CHECK(e.process() == "INT-DEF");
        CHECK(e.code() == "MalformedResponse");
        CHECK(e.trace().states() == std::vector<State>{State::kM0, State::kM1});
        REQUIRE(e.trace().error.has_value());
        CHECK(e.trace().error->process == "INT-DEF");
      }
    }
    SUBCASE("backend down") {
      testing::FunctionBackend down([](const auto&, const auto&) -> std::string {
        throw BackendUnavailable("down");
      });
      auto b = std::shared_ptr<LlmBackend>(&down, [](LlmBackend*) {});
      try {
        run_dialogue_act(kQuestion, {meta(), toy(), b}, {});
        FAIL("expected failure");
      } catch (const DialogueFailure& e) {
        CHECK(e.code() == "BackendUnavailable");
        CHECK(e.process() == "INT-DEF");
      }
    }
    SUBCASE("extraction fails") {
      auto b = golden_except("extract-cause-v1", "[{\"results\": 1}]");
      try {
        run_dialogue_act(kQuestion, {meta(), toy(), b}, {});
        FAIL("expected failure");
      } catch (const DialogueFailure& e) {
        CHECK(e.process() == "INF-EXTR");
        CHECK(e.trace().states().back() == State::kM7);
      }
    }
  }

  TEST_CASE("fuzzed replies never crash the pipeline") {
    testing::Gen gen(99);
    const std::vector<std::string> shapes{
        "{}", "[]", "[{}]", "{\"result\": 5}", "[1,2,3]", "[{\"intent\": 5}]",
        "[{\"words\": [1], \"type\": \"noun\", \"main word\": 1}]", "{\"expected\": null}",
        "\xff\xfe garbage", "[{\"intent\": \"cause\", \"type\": \"narration\", \"probability\": 1e309}]",
        "[{\"intent\": \"cause\", \"type\": \"narration\", \"probability\": \"high\"}]", "None", "nil",
        "```json\n{\"result\": [}\n```", "[[[[[[[[[[[[[[[[[[[[]]]]]]]]]]]]]]]]]]]]"};
    for (int i = 0; i < 200; ++i) {
      const std::string junk = gen.coin() ? gen.pick(shapes) : gen.value().dump();
      auto b = golden_except(gen.pick(std::vector<std::string>{"intents-v1", "conclusion-v1", "entities-v1",
                                                               "extract-generic-v1", "extract-cause-v1"}),
                             junk);
      try {
        run_dialogue_act(kQuestion, {meta(), toy(), b}, {});
      } catch (const DialogueFailure& e) {
        CHECK(!e.code().empty());
      }
    }
  }

  TEST_CASE("trace JSON") {
    const auto out = run_dialogue_act(kQuestion, {meta(), toy(), golden()}, {});
    const Json j = out.trace.to_json();
    REQUIRE(j["entries"].size() == 10);
    CHECK(j["entries"][0]["state"] == "M0");
    CHECK(j["entries"][0]["process"].is_null());
    CHECK(j["entries"][2]["process"] == "INT-DEF");
    CHECK(j["entries"][2]["template_id"] == "intents-v1");
    CHECK(j["entries"][6]["formed_by"] == "INF-PR-FORM");
    CHECK(j["entries"][9]["state"] == "M10");
    CHECK(j["entries"][9].contains("elapsed_us"));
    CHECK_FALSE(out.trace.to_json(false)["entries"][9].contains("elapsed_us"));
  }
}
