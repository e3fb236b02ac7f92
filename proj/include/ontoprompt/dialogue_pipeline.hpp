#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ontoprompt/context_store.hpp"
#include "ontoprompt/dialogue_types.hpp"
#include "ontoprompt/errors.hpp"
#include "ontoprompt/json_util.hpp"
#include "ontoprompt/llm_backend.hpp"
#include "ontoprompt/meta_ontology.hpp"

namespace ontoprompt {

struct PreprocessRules {
  bool normalize_unicode = true;
  bool collapse_whitespace = true;
  bool strip_control = true;
  std::size_t max_length = 10000;
};

struct PipelineConfig {
  PreprocessRules preprocess;
  double intent_floor = 0.3;
  std::size_t top_k = kDefaultTopK;
  std::optional<Sentiment> sentiment_filter;
  std::optional<std::string> language;
  CompletionParams completion;
  // Run the independent LLM calls concurrently.
  bool parallel = true;
};

// Marking-graph states of one dialogue act.
enum class State { kM0, kM1, kM2, kM3, kM4, kM5, kM6, kM7, kM8, kM9, kM10 };

enum class Process {
  kPrep,
  kIntDef,
  kConIntDef,
  kEntExtr,
  kInfPrForm,
  kConPrForm,
  kCxSel,
  kInfExtr,
  kConDer,
  kResForm,
};

std::string to_string(State s);
std::string to_string(Process p);

// Prompt/response pair of one LLM call, as sent and received.
struct Exchange {
  std::string template_id;
  std::string prompt;
  std::string response;
  int attempts = 0;
};

struct TraceEntry {
  State state = State::kM0;
  std::optional<Process> process;
  std::optional<Process> formed_by;
  Json payload;
  std::optional<Exchange> exchange;
  std::chrono::microseconds elapsed{0};
};

struct TraceError {
  std::string process;
  std::string code;
  std::string message;
};

struct DialogueTrace {
  std::vector<TraceEntry> entries;
  std::optional<TraceError> error;

  std::vector<State> states() const;
  std::size_t count(State s) const;
  Json to_json(bool include_timing = true) const;
};

/// A failed dialogue act: the tagged error plus the trace up to the failure.
class DialogueFailure : public PipelineError {
 public:
  DialogueFailure(std::string process, const Error& cause, DialogueTrace trace)
      : PipelineError(std::move(process), cause), trace_(std::move(trace)) {}
  const DialogueTrace& trace() const noexcept { return trace_; }

 private:
  DialogueTrace trace_;
};

// Read-only inputs shared by concurrent dialogue acts.
struct DialogueContext {
  MetaOntologySnapshot meta;
  ContextStoreSnapshot contexts;
  std::shared_ptr<LlmBackend> backend;
};

struct DialogueOutcome {
  Json answer;
  DialogueTrace trace;
};

/// Throws EmptyInput when nothing but whitespace/control characters remain.
std::string preprocess(std::string_view text, const PreprocessRules& rules);

/// LLM steps. Each throws the backend's error, or MalformedResponse when the
/// completion cannot be read against the template's output template.
/// `exchange`, when given, receives the prompt and raw response.
std::vector<Intent> detect_intents(std::string_view text, const MetaOntology& onto,
                                   LlmBackend& backend, const PipelineConfig& config,
                                   Exchange* exchange = nullptr);

ConclusionDirective detect_conclusion_directive(std::string_view text, const MetaOntology& onto,
                                                LlmBackend& backend, const PipelineConfig& config,
                                                Exchange* exchange = nullptr);

std::vector<EntityGroup> extract_entities(std::string_view text, const MetaOntology& onto,
                                          LlmBackend& backend, const PipelineConfig& config,
                                          Exchange* exchange = nullptr);

// Selected contexts with their passages, in selection order.
struct ContextPassage {
  std::string id;
  std::string text;
};

std::vector<ContextPassage> passages(const ContextStore& store, const ContextSelection& selection);

IntentResult extract_information(std::string_view text, const Intent& intent,
                                 const std::vector<ContextPassage>& contexts,
                                 const MetaOntology& onto, LlmBackend& backend,
                                 const PipelineConfig& config, Exchange* exchange = nullptr);

IntentResult derive_conclusions(std::string_view text, const ConclusionDirective& directive,
                                const std::vector<ContextPassage>& contexts,
                                const MetaOntology& onto, LlmBackend& backend,
                                const PipelineConfig& config, Exchange* exchange = nullptr);

/// Answer document: {"status", "answers": [{"intent", "kind", "rendered"}]}.
Json format_results(const std::vector<IntentResult>& parts, const MetaOntology& onto);

/// Answer document for an act stopped at context selection.
Json no_context_answer(const MetaOntology& onto);

/// Runs one dialogue act end to end. Throws DialogueFailure.
DialogueOutcome run_dialogue_act(std::string_view text, const DialogueContext& context,
                                 const PipelineConfig& config);

}  // namespace ontoprompt
