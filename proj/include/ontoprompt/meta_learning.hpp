#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ontoprompt/json_util.hpp"
#include "ontoprompt/llm_backend.hpp"
#include "ontoprompt/meta_ontology.hpp"
#include "ontoprompt/prompt_engine.hpp"

namespace ontoprompt {

enum class SessionStatus { kDrafting, kIterating, kFinalized, kAbandoned };

std::string to_string(SessionStatus s);

// A prompt under tuning: a structured prompt or a free-form draft.
using PromptDraft = std::variant<StructuredPrompt, std::string>;

std::string render_draft(const PromptDraft& draft);

struct TuningIteration {
  Json prompt;  // structured prompt object, or the draft string
  std::string response;
  std::string engineer_notes;
  std::string timestamp;
};

struct TuningSession {
  std::string id;
  std::string purpose;
  SessionStatus status = SessionStatus::kDrafting;
  std::vector<TuningIteration> iterations;
  std::optional<std::string> finalized_template;
};

Json to_json(const TuningSession& session);

/// Registry of prompt-tuning sessions. Every event is appended to an NDJSON
/// log ({session_id, event, payload, timestamp}) when a log path is given;
/// constructing over an existing log replays it.
///
/// One writer per session: a session's lock is held across its backend call,
/// so iterations are recorded in submission order. Distinct sessions proceed
/// concurrently.
class SessionRegistry {
 public:
  explicit SessionRegistry(std::optional<std::filesystem::path> log_path = std::nullopt);

  /// Throws PreconditionError on an empty purpose.
  TuningSession start_session(const std::string& purpose);

  /// Sends the rendered draft and records the reply. Throws NotFound,
  /// SessionClosed, or the backend's error (nothing is recorded then).
  TuningIteration submit_iteration(const std::string& session_id, const PromptDraft& prompt,
                                   LlmBackend& backend, const std::string& engineer_notes = {},
                                   const CompletionParams& params = {});

  /// Returns a new ontology holding `tmpl`; `onto` is left untouched.
  /// Throws ValidationFailed, SessionClosed, NotFound, or PreconditionError
  /// when the session has no iterations yet.
  MetaOntology finalize_session(const std::string& session_id, const PromptTemplate& tmpl,
                                const MetaOntology& onto);

  void abandon_session(const std::string& session_id);

  TuningSession get(const std::string& session_id) const;
  std::vector<TuningSession> list() const;

 private:
  struct Slot {
    mutable std::mutex mutex;
    TuningSession session;
  };

  Slot& slot(const std::string& session_id) const;
  void append_log(const std::string& session_id, const std::string& event, Json payload,
                  const std::string& timestamp);
  void replay();
  void apply_event(const Json& record, const std::string& where);

  std::optional<std::filesystem::path> log_path_;
  mutable std::mutex registry_mutex_;
  std::mutex log_mutex_;
  std::map<std::string, std::unique_ptr<Slot>> sessions_;
  std::size_t next_id_ = 1;
};

}  // namespace ontoprompt
