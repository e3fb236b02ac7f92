#include "ontoprompt/dialogue_pipeline.hpp"

#include <algorithm>
#include <array>
#include <future>
#include <regex>
#include <sstream>

#include "ontoprompt/prompt_engine.hpp"
#include "ontoprompt/text.hpp"

namespace ontoprompt {
namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kSystemInstruction =
    "You are a component of a question answering pipeline. Follow the structured prompt in the "
    "user message and answer only with data shaped like its \"output representation template\".";

constexpr std::array<std::string_view, 10> kProcessNames{
    "PREP",       "INT-DEF", "CON-INT-DEF", "ENT-EXTR", "INF-PR-FORM",
    "CON-PR-FORM", "CX-SEL", "INF-EXTR",    "CON-DER",  "RES-FORM"};

std::chrono::microseconds since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start);
}

Json optional_text(const std::optional<std::string>& s) { return s ? Json(*s) : Json(); }

// Keeps only candidates the template declares as binding fields.
Bindings bindings_for(const PromptTemplate& tmpl, const Bindings& candidates) {
  Bindings out;
  for (const auto& f : tmpl.fields) {
    if (f.kind != FieldKind::kBinding) continue;
    if (auto it = candidates.find(f.key); it != candidates.end()) out.emplace(f.key, it->second);
  }
  return out;
}

Bindings base_bindings(std::string_view text, const PipelineConfig& config) {
  Bindings b;
  b.emplace("text", std::string(text));
  if (config.language) b.emplace("language", *config.language);
  return b;
}

// Sends the instantiated template and decodes the reply. A MalformedResponse
// is retried up to `attempts` times in total with the same prompt.
template <typename Decode>
auto ask(const PromptTemplate& tmpl, const Bindings& candidates, LlmBackend& backend,
         const PipelineConfig& config, Exchange* exchange, int attempts, Decode decode)
    -> decltype(decode(std::declval<const ParsedResponse&>())) {
  if (!tmpl.output_template) throw NotFound("template " + tmpl.id + " has no output template");
  const StructuredPrompt prompt = instantiate(tmpl, bindings_for(tmpl, candidates));
  const std::string wire = render(prompt);
  CompletionParams params = config.completion;
  params.label = tmpl.id;
  const std::vector<ChatMessage> messages{{Role::kSystem, kSystemInstruction},
                                          {Role::kUser, wire}};
  if (exchange) {
    exchange->template_id = tmpl.id;
    exchange->prompt = wire;
    exchange->attempts = 0;
  }
  for (int attempt = 1;; ++attempt) {
    const std::string raw = backend.complete(messages, params);
    if (exchange) {
      exchange->response = raw;
      exchange->attempts = attempt;
    }
    try {
      ParsedResponse parsed;
      try {
        parsed = parse_response(raw, *tmpl.output_template);
      } catch (const NoStructuredPayload& e) {
        throw MalformedResponse(e.what());
      }
      if (!parsed.ok()) {
        std::string why;
        for (const auto& v : parsed.violations) {
          if (!why.empty()) why += "; ";
          why += v.path + ": " + v.message;
        }
        throw MalformedResponse(why);
      }
      return decode(parsed);
    } catch (const MalformedResponse&) {
      if (attempt >= attempts) throw;
    }
  }
}

std::optional<std::string> nullable(const Json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw MalformedResponse(std::string(key) + " must be a string or null");
  return it->get<std::string>();
}

std::string required_string(const Json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw MalformedResponse(std::string("'") + key + "' must be a string");
  }
  return it->get<std::string>();
}

const Json& records_of(const ParsedResponse& parsed) {
  static const Json kEmpty = Json::array();
  if (parsed.none) return kEmpty;
  if (!parsed.payload.is_array()) throw MalformedResponse("expected a list of records");
  return parsed.payload;
}

std::int64_t intent_cap(const PromptTemplate& tmpl) {
  for (const auto& f : tmpl.fields) {
    if (f.kind == FieldKind::kIntegerLimit && f.value && f.value->is_number_integer()) {
      return f.value->get<std::int64_t>();
    }
  }
  return -1;
}

bool is_none_result(const Json& v) {
  if (v.is_null()) return true;
  if (v.is_string()) return is_none_token(v.get<std::string>());
  if (v.is_array() || v.is_object()) return v.empty();
  return false;
}

// Picks the record for `intent` from an {intent, results} reply.
IntentResult pick_result(const ParsedResponse& parsed, const std::string& intent,
                         bool fallback_to_first) {
  IntentResult result{intent, std::nullopt};
  if (parsed.none) return result;
  const Json* chosen = nullptr;
  if (parsed.payload.is_object()) {
    chosen = &parsed.payload;
  } else {
    for (const auto& record : parsed.payload) {
      auto name = record.find("intent");
      if (name != record.end() && name->is_string() && name->get<std::string>() == intent) {
        chosen = &record;
        break;
      }
    }
    if (!chosen && fallback_to_first && !parsed.payload.empty()) chosen = &parsed.payload.front();
  }
  if (!chosen) return result;
  auto value = chosen->find("results");
  if (value != chosen->end() && !is_none_result(*value)) result.results = *value;
  return result;
}

Bindings context_bindings(std::string_view text, const std::vector<ContextPassage>& contexts,
                          const PipelineConfig& config) {
  Bindings b = base_bindings(text, config);
  Json texts = Json::array();
  for (const auto& c : contexts) texts.push_back(c.text);
  b.emplace("contexts", std::move(texts));
  return b;
}

// --- result rendering -----------------------------------------------------

struct RenderRules {
  std::string list = "bullets";
  std::string table = "pipe";
  std::string link = "markdown";
  std::string none_answer = "no information available";
  std::string no_context_answer = "no relevant contexts";
};

RenderRules rules_from(const MetaOntology& onto) {
  RenderRules rules;
  const PromptTemplate* tmpl = nullptr;
  try {
    tmpl = &lookup_template(onto, Purpose::kResultFormatting);
  } catch (const NotFound&) {
    return rules;
  }
  auto text_of = [&](const char* key, std::string& out) {
    if (const PromptField* f = tmpl->find_field(key); f && f->value && f->value->is_string()) {
      out = f->value->get<std::string>();
    }
  };
  text_of("none answer", rules.none_answer);
  text_of("no context answer", rules.no_context_answer);
  if (const PromptField* f = tmpl->find_field("rendering rules"); f && f->value && f->value->is_object()) {
    const Json& r = *f->value;
    auto rule = [&](const char* key, std::string& out) {
      if (auto it = r.find(key); it != r.end() && it->is_string()) out = it->get<std::string>();
    };
    rule("list", rules.list);
    rule("table", rules.table);
    rule("link", rules.link);
  }
  return rules;
}

std::string cell(const Json& v) { return v.is_string() ? v.get<std::string>() : compact_dump(v); }

std::string table_row(const std::vector<std::string>& cells, const std::string& style) {
  std::string row;
  if (style == "tsv") {
    for (std::size_t i = 0; i < cells.size(); ++i) row += (i ? "\t" : "") + cells[i];
    return row;
  }
  row = "|";
  for (const auto& c : cells) row += " " + c + " |";
  return row;
}

bool is_table(const Json& v) {
  if (!v.is_array() || v.empty()) return false;
  if (v.front().is_array()) {
    const std::size_t width = v.front().size();
    return width >= 2 && std::all_of(v.begin(), v.end(), [&](const Json& row) {
             return row.is_array() && row.size() == width;
           });
  }
  if (v.front().is_object()) {
    return std::all_of(v.begin(), v.end(), [&](const Json& row) {
      if (!row.is_object() || row.size() != v.front().size()) return false;
      auto a = row.begin();
      for (auto b = v.front().begin(); b != v.front().end(); ++a, ++b) {
        if (a.key() != b.key()) return false;
      }
      return true;
    });
  }
  return false;
}

std::pair<std::string, std::string> render_value(const Json& v, const RenderRules& rules) {
  static const std::regex kDate(R"(^\d{4}-\d{2}-\d{2}([T ][0-9:.+\-Z]*)?$)");
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (std::regex_match(s, kDate)) return {"date", s};
    if ((s.starts_with("http://") || s.starts_with("https://")) &&
        s.find_first_of(" \t\n") == std::string::npos) {
      return {"link", rules.link == "markdown" ? "[" + s + "](" + s + ")" : s};
    }
    return {"text", s};
  }
  if (v.is_number()) return {"number", compact_dump(v)};
  if (v.is_boolean()) return {"text", v.get<bool>() ? "yes" : "no"};
  if (is_table(v)) {
    std::vector<std::string> lines;
    if (v.front().is_object()) {
      std::vector<std::string> header;
      for (const auto& [key, _] : v.front().items()) header.push_back(key);
      lines.push_back(table_row(header, rules.table));
      if (rules.table != "tsv") {
        lines.push_back(table_row(std::vector<std::string>(header.size(), "---"), rules.table));
      }
      for (const auto& row : v) {
        std::vector<std::string> cells;
        for (const auto& [_, value] : row.items()) cells.push_back(cell(value));
        lines.push_back(table_row(cells, rules.table));
      }
    } else {
      for (const auto& row : v) {
        std::vector<std::string> cells;
        for (const auto& value : row) cells.push_back(cell(value));
        lines.push_back(table_row(cells, rules.table));
      }
    }
    std::string out;
    for (const auto& line : lines) out += (out.empty() ? "" : "\n") + line;
    return {"table", out};
  }
  if (v.is_array()) {
    std::string out;
    std::size_t n = 0;
    for (const auto& item : v) {
      ++n;
      const std::string marker = rules.list == "numbered" ? std::to_string(n) + ". " : "- ";
      out += (out.empty() ? "" : "\n") + marker + cell(item);
    }
    return {"list", out};
  }
  // A single record renders as a two-column key/value table.
  std::string out;
  for (const auto& [key, value] : v.items()) {
    out += (out.empty() ? "" : "\n") + table_row({key, cell(value)}, rules.table);
  }
  return {"table", out};
}

Json answer_entry(Json intent, const std::string& kind, const std::string& rendered) {
  Json j = Json::object();
  j["intent"] = std::move(intent);
  j["kind"] = kind;
  j["rendered"] = rendered;
  return j;
}

}  // namespace

std::string to_string(GroupType g) { return g == GroupType::kNoun ? "noun" : "verb"; }

Json to_json(const Intent& intent) {
  Json j = Json::object();
  j["intent"] = intent.name;
  j["type"] = intent.type;
  j["probability"] = intent.probability;
  j["subject"] = optional_text(intent.subject);
  j["object"] = optional_text(intent.object);
  return j;
}

Json to_json(const EntityGroup& group) {
  Json j = Json::object();
  j["words"] = group.words;
  j["type"] = to_string(group.group_type);
  j["main word"] = group.main_word;
  return j;
}

Json to_json(const ConclusionDirective& directive) {
  Json j = Json::object();
  j["expected"] = directive.expected;
  j["kind"] = optional_text(directive.kind);
  return j;
}

Json to_json(const IntentResult& result) {
  Json j = Json::object();
  j["intent"] = result.intent;
  j["results"] = result.results ? *result.results : Json("none");
  return j;
}

std::string to_string(State s) { return "M" + std::to_string(static_cast<int>(s)); }

std::string to_string(Process p) { return std::string(kProcessNames[static_cast<std::size_t>(p)]); }

std::vector<State> DialogueTrace::states() const {
  std::vector<State> out;
  for (const auto& e : entries) out.push_back(e.state);
  return out;
}

std::size_t DialogueTrace::count(State s) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const TraceEntry& e) { return e.state == s; }));
}

Json DialogueTrace::to_json(bool include_timing) const {
  Json list = Json::array();
  for (const auto& e : entries) {
    Json j = Json::object();
    j["state"] = to_string(e.state);
    j["process"] = e.process ? Json(to_string(*e.process)) : Json();
    if (e.formed_by) j["formed_by"] = to_string(*e.formed_by);
    j["payload"] = e.payload;
    if (e.exchange) {
      j["template_id"] = e.exchange->template_id;
      j["prompt"] = e.exchange->prompt;
      j["response"] = e.exchange->response;
      j["attempts"] = e.exchange->attempts;
    }
    if (include_timing) j["elapsed_us"] = e.elapsed.count();
    list.push_back(std::move(j));
  }
  Json out = Json::object();
  out["entries"] = std::move(list);
  if (error) {
    Json err = Json::object();
    err["process"] = error->process;
    err["code"] = error->code;
    err["message"] = error->message;
    out["error"] = std::move(err);
  }
  return out;
}

std::string preprocess(std::string_view raw, const PreprocessRules& rules) {
  if (rules.max_length == 0) throw PreconditionError("max_length must be at least 1");
  if (text::is_blank(raw)) throw EmptyInput();
  std::string out(raw);
  if (rules.normalize_unicode) out = text::nfc(out);
  if (rules.strip_control) out = text::strip_control(out);
  if (rules.collapse_whitespace) out = text::collapse_whitespace(out);
  if (text::code_points(out) > rules.max_length) out = text::truncate(out, rules.max_length);
  if (text::is_blank(out)) throw EmptyInput();
  return out;
}

std::vector<Intent> detect_intents(std::string_view text, const MetaOntology& onto,
                                   LlmBackend& backend, const PipelineConfig& config,
                                   Exchange* exchange) {
  const PromptTemplate& tmpl = lookup_template(onto, Purpose::kIntentDetection);
  std::vector<Intent> intents =
      ask(tmpl, base_bindings(text, config), backend, config, exchange, 2,
          [&](const ParsedResponse& parsed) {
            std::vector<Intent> out;
            for (const auto& record : records_of(parsed)) {
              Intent in;
              in.name = required_string(record, "intent");
              if (!onto.intent_catalog.contains(in.name)) {
                throw MalformedResponse("intent '" + in.name + "' is not in the catalog");
              }
              in.type = required_string(record, "type");
              if (!onto.intent_catalog.has_type(in.type)) {
                throw MalformedResponse("intent type '" + in.type + "' is not in the catalog");
              }
              auto p = record.find("probability");
              if (p == record.end() || !p->is_number()) {
                throw MalformedResponse("intent '" + in.name + "' lacks a probability");
              }
              in.probability = p->get<double>();
              if (!(in.probability >= 0.0 && in.probability <= 1.0)) {
                throw MalformedResponse("probability outside [0, 1]");
              }
              in.subject = nullable(record, "subject");
              in.object = nullable(record, "object");
              out.push_back(std::move(in));
            }
            return out;
          });

  std::erase_if(intents, [&](const Intent& in) { return in.probability < config.intent_floor; });
  std::stable_sort(intents.begin(), intents.end(), [](const Intent& a, const Intent& b) {
    return a.probability > b.probability;
  });
  if (const std::int64_t cap = intent_cap(tmpl);
      cap >= 0 && intents.size() > static_cast<std::size_t>(cap)) {
    intents.resize(static_cast<std::size_t>(cap));
  }
  return intents;
}

ConclusionDirective detect_conclusion_directive(std::string_view text, const MetaOntology& onto,
                                                LlmBackend& backend, const PipelineConfig& config,
                                                Exchange* exchange) {
  const PromptTemplate& tmpl = lookup_template(onto, Purpose::kConclusionDetection);
  return ask(tmpl, base_bindings(text, config), backend, config, exchange, 1,
             [](const ParsedResponse& parsed) {
               ConclusionDirective d;
               if (parsed.none) return d;
               const Json& record = parsed.payload.is_array() && parsed.payload.size() == 1
                                        ? parsed.payload.front()
                                        : parsed.payload;
               if (!record.is_object()) throw MalformedResponse("expected a directive object");
               auto expected = record.find("expected");
               if (expected == record.end() || !expected->is_boolean()) {
                 throw MalformedResponse("directive lacks a boolean 'expected'");
               }
               d.expected = expected->get<bool>();
               d.kind = nullable(record, "kind");
               if (!d.expected && d.kind) {
                 throw MalformedResponse("directive names a conclusion kind but expects none");
               }
               return d;
             });
}

std::vector<EntityGroup> extract_entities(std::string_view text, const MetaOntology& onto,
                                          LlmBackend& backend, const PipelineConfig& config,
                                          Exchange* exchange) {
  const PromptTemplate& tmpl = lookup_template(onto, Purpose::kEntityExtraction);
  return ask(tmpl, base_bindings(text, config), backend, config, exchange, 2,
             [](const ParsedResponse& parsed) {
               std::vector<EntityGroup> out;
               for (const auto& record : records_of(parsed)) {
                 EntityGroup g;
                 auto words = record.find("words");
                 if (words == record.end() || !words->is_array() || words->empty()) {
                   throw MalformedResponse("entity group without words");
                 }
                 for (const auto& w : *words) {
                   if (!w.is_string() || w.get<std::string>().empty()) {
                     throw MalformedResponse("entity words must be non-empty strings");
                   }
                   g.words.push_back(w.get<std::string>());
                 }
                 const std::string type = required_string(record, "type");
                 if (type == "noun") {
                   g.group_type = GroupType::kNoun;
                 } else if (type == "verb") {
                   g.group_type = GroupType::kVerb;
                 } else {
                   throw MalformedResponse("entity group type '" + type + "' is not noun or verb");
                 }
                 g.main_word = required_string(record, "main word");
                 if (std::find(g.words.begin(), g.words.end(), g.main_word) == g.words.end()) {
                   throw MalformedResponse("main word '" + g.main_word + "' is not among the group words");
                 }
                 out.push_back(std::move(g));
               }
               return out;
             });
}

std::vector<ContextPassage> passages(const ContextStore& store, const ContextSelection& selection) {
  std::vector<ContextPassage> out;
  for (const auto& s : selection) {
    if (const ContextEntry* e = store.find(s.id)) out.push_back({e->id, e->text});
  }
  return out;
}

IntentResult extract_information(std::string_view text, const Intent& intent,
                                 const std::vector<ContextPassage>& contexts,
                                 const MetaOntology& onto, LlmBackend& backend,
                                 const PipelineConfig& config, Exchange* exchange) {
  if (contexts.empty()) throw PreconditionError("information extraction needs selected contexts");
  const PromptTemplate& tmpl = lookup_template(onto, Purpose::kInformationExtraction, intent.name);
  Bindings b = context_bindings(text, contexts, config);
  b.emplace("intent", intent.name);
  b.emplace("intent type", intent.type);
  b.emplace("subject", optional_text(intent.subject));
  b.emplace("object", optional_text(intent.object));
  return ask(tmpl, b, backend, config, exchange, 1, [&](const ParsedResponse& parsed) {
    return pick_result(parsed, intent.name, false);
  });
}

IntentResult derive_conclusions(std::string_view text, const ConclusionDirective& directive,
                                const std::vector<ContextPassage>& contexts,
                                const MetaOntology& onto, LlmBackend& backend,
                                const PipelineConfig& config, Exchange* exchange) {
  if (!directive.expected) throw PreconditionError("no conclusion is expected");
  if (contexts.empty()) throw PreconditionError("conclusion derivation needs selected contexts");
  const PromptTemplate& tmpl = lookup_template(onto, Purpose::kConclusionDerivation);
  Bindings b = context_bindings(text, contexts, config);
  b.emplace("conclusion kind", optional_text(directive.kind));
  return ask(tmpl, b, backend, config, exchange, 1, [](const ParsedResponse& parsed) {
    return pick_result(parsed, kConclusionIntent, true);
  });
}

Json format_results(const std::vector<IntentResult>& parts, const MetaOntology& onto) {
  const RenderRules rules = rules_from(onto);
  Json answers = Json::array();
  bool any = false;
  for (const auto& part : parts) {
    if (part.is_none()) {
      answers.push_back(answer_entry(part.intent, "none", rules.none_answer));
      continue;
    }
    any = true;
    auto [kind, rendered] = render_value(*part.results, rules);
    answers.push_back(answer_entry(part.intent, kind, rendered));
  }
  Json doc = Json::object();
  if (!any) {
    doc["status"] = "no-information";
    doc["answers"] = Json::array({answer_entry(Json(), "none", rules.none_answer)});
    return doc;
  }
  doc["status"] = "answered";
  doc["answers"] = std::move(answers);
  return doc;
}

Json no_context_answer(const MetaOntology& onto) {
  Json doc = Json::object();
  doc["status"] = "no-relevant-contexts";
  doc["answers"] = Json::array({answer_entry(Json(), "none", rules_from(onto).no_context_answer)});
  return doc;
}

DialogueOutcome run_dialogue_act(std::string_view raw, const DialogueContext& context,
                                 const PipelineConfig& config) {
  if (!context.meta || !context.contexts || !context.backend) {
    throw PreconditionError("dialogue context is incomplete");
  }
  const MetaOntology& onto = *context.meta;
  LlmBackend& backend = *context.backend;
  DialogueOutcome outcome;
  DialogueTrace& trace = outcome.trace;

  auto fail = [&](Process p, const Error& e) -> DialogueFailure {
    trace.error = TraceError{to_string(p), e.code(), e.what()};
    return DialogueFailure(to_string(p), e, trace);
  };

  trace.entries.push_back({State::kM0, std::nullopt, std::nullopt,
                           Json::object({{"text", std::string(raw)}}), std::nullopt, {}});

  auto start = Clock::now();
  std::string cleaned;
  try {
    cleaned = preprocess(raw, config.preprocess);
  } catch (const Error& e) {
    throw fail(Process::kPrep, e);
  }
  trace.entries.push_back({State::kM1, Process::kPrep, std::nullopt,
                           Json::object({{"text", cleaned}}), std::nullopt, since(start)});

  // INT-DEF, CON-INT-DEF and ENT-EXTR branch independently out of M1.
  const auto policy = config.parallel ? std::launch::async : std::launch::deferred;
  struct Timed {
    Exchange exchange;
    std::chrono::microseconds elapsed{0};
  };
  Timed t_int, t_con, t_ent;
  auto timed = [](Timed& t, auto&& fn) {
    const auto begin = Clock::now();
    auto result = fn(&t.exchange);
    t.elapsed = since(begin);
    return result;
  };
  auto f_int = std::async(policy, [&] {
    return timed(t_int, [&](Exchange* x) { return detect_intents(cleaned, onto, backend, config, x); });
  });
  auto f_con = std::async(policy, [&] {
    return timed(t_con, [&](Exchange* x) {
      return detect_conclusion_directive(cleaned, onto, backend, config, x);
    });
  });
  auto f_ent = std::async(policy, [&] {
    return timed(t_ent, [&](Exchange* x) { return extract_entities(cleaned, onto, backend, config, x); });
  });

  std::optional<std::vector<Intent>> intents;
  std::optional<ConclusionDirective> directive;
  std::optional<std::vector<EntityGroup>> entities;
  std::optional<std::pair<Process, std::exception_ptr>> failure;
  auto collect = [&](auto& future, auto& slot, Process p) {
    try {
      slot = future.get();
    } catch (...) {
      if (!failure) failure = {p, std::current_exception()};
    }
  };
  collect(f_int, intents, Process::kIntDef);
  collect(f_con, directive, Process::kConIntDef);
  collect(f_ent, entities, Process::kEntExtr);
  if (failure) {
    try {
      std::rethrow_exception(failure->second);
    } catch (const Error& e) {
      throw fail(failure->first, e);
    } catch (const std::exception& e) {
      throw fail(failure->first, MalformedResponse(e.what()));
    }
  }

  Json intents_json = Json::array();
  for (const auto& in : *intents) intents_json.push_back(to_json(in));
  trace.entries.push_back({State::kM2, Process::kIntDef, std::nullopt, std::move(intents_json),
                           t_int.exchange, t_int.elapsed});
  trace.entries.push_back({State::kM4, Process::kConIntDef, std::nullopt, to_json(*directive),
                           t_con.exchange, t_con.elapsed});
  Json entities_json = Json::array();
  for (const auto& g : *entities) entities_json.push_back(to_json(g));
  trace.entries.push_back({State::kM6, Process::kEntExtr, std::nullopt, std::move(entities_json),
                           t_ent.exchange, t_ent.elapsed});

  start = Clock::now();
  const ContextSelection selection = select_contexts(*context.contexts, *entities, *intents,
                                                     config.top_k, config.sentiment_filter);
  trace.entries.push_back({State::kM7, Process::kCxSel, std::nullopt, to_json(selection),
                           std::nullopt, since(start)});
  if (selection.empty()) {
    outcome.answer = no_context_answer(onto);
    return outcome;
  }
  const std::vector<ContextPassage> texts = passages(*context.contexts, selection);

  // One INF-EXTR per intent, plus CON-DER when a conclusion is expected.
  std::vector<Timed> timings(intents->size() + 1);
  std::vector<std::future<IntentResult>> branches;
  for (std::size_t i = 0; i < intents->size(); ++i) {
    branches.push_back(std::async(policy, [&, i] {
      return timed(timings[i], [&](Exchange* x) {
        return extract_information(cleaned, (*intents)[i], texts, onto, backend, config, x);
      });
    }));
  }
  if (directive->expected) {
    branches.push_back(std::async(policy, [&] {
      return timed(timings.back(), [&](Exchange* x) {
        return derive_conclusions(cleaned, *directive, texts, onto, backend, config, x);
      });
    }));
  }

  std::vector<std::optional<IntentResult>> results(branches.size());
  failure.reset();
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const Process p = i < intents->size() ? Process::kInfExtr : Process::kConDer;
    collect(branches[i], results[i], p);
  }
  if (failure) {
    try {
      std::rethrow_exception(failure->second);
    } catch (const Error& e) {
      throw fail(failure->first, e);
    } catch (const std::exception& e) {
      throw fail(failure->first, MalformedResponse(e.what()));
    }
  }

  std::vector<IntentResult> parts;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const bool conclusion = i >= intents->size();
    const Timed& t = conclusion ? timings.back() : timings[i];
    trace.entries.push_back({conclusion ? State::kM9 : State::kM8,
                             conclusion ? Process::kConDer : Process::kInfExtr,
                             conclusion ? Process::kConPrForm : Process::kInfPrForm,
                             to_json(*results[i]), t.exchange, t.elapsed});
    parts.push_back(std::move(*results[i]));
  }

  start = Clock::now();
  outcome.answer = format_results(parts, onto);
  trace.entries.push_back({State::kM10, Process::kResForm, std::nullopt, outcome.answer,
                           std::nullopt, since(start)});
  return outcome;
}

}  // namespace ontoprompt
