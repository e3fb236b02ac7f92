#include "ontoprompt/meta_learning.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ontoprompt/errors.hpp"

namespace ontoprompt {
namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms
      << 'Z';
  return out.str();
}

Json prompt_json(const PromptDraft& draft) {
  if (const auto* text = std::get_if<std::string>(&draft)) return *text;
  Json obj = Json::object();
  for (const auto& e : std::get<StructuredPrompt>(draft).entries) obj[e.key] = e.value;
  return obj;
}

std::size_t id_number(const std::string& id) {
  if (id.size() < 2 || id.front() != 's') return 0;
  try {
    return std::stoul(id.substr(1));
  } catch (const std::exception&) {
    return 0;
  }
}

void require_open(const TuningSession& s) {
  if (s.status == SessionStatus::kFinalized || s.status == SessionStatus::kAbandoned) {
    throw SessionClosed(s.id);
  }
}

}  // namespace

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kDrafting:
      return "drafting";
    case SessionStatus::kIterating:
      return "iterating";
    case SessionStatus::kFinalized:
      return "finalized";
    case SessionStatus::kAbandoned:
      return "abandoned";
  }
  return "drafting";
}

std::string render_draft(const PromptDraft& draft) {
  if (const auto* text = std::get_if<std::string>(&draft)) return *text;
  return render(std::get<StructuredPrompt>(draft));
}

Json to_json(const TuningSession& session) {
  Json j = Json::object();
  j["id"] = session.id;
  j["purpose"] = session.purpose;
  j["status"] = to_string(session.status);
  Json iterations = Json::array();
  for (const auto& it : session.iterations) {
    Json ij = Json::object();
    ij["prompt"] = it.prompt;
    ij["response"] = it.response;
    ij["engineer_notes"] = it.engineer_notes;
    ij["timestamp"] = it.timestamp;
    iterations.push_back(std::move(ij));
  }
  j["iterations"] = std::move(iterations);
  j["finalized_template"] = session.finalized_template ? Json(*session.finalized_template) : Json();
  return j;
}

SessionRegistry::SessionRegistry(std::optional<std::filesystem::path> log_path)
    : log_path_(std::move(log_path)) {
  if (log_path_ && std::filesystem::exists(*log_path_)) replay();
}

SessionRegistry::Slot& SessionRegistry::slot(const std::string& session_id) const {
  std::lock_guard lock(registry_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFound("no tuning session " + session_id);
  return *it->second;
}

void SessionRegistry::append_log(const std::string& session_id, const std::string& event,
                                 Json payload, const std::string& timestamp) {
  if (!log_path_) return;
  Json record = Json::object();
  record["session_id"] = session_id;
  record["event"] = event;
  record["payload"] = std::move(payload);
  record["timestamp"] = timestamp;
  std::lock_guard lock(log_mutex_);
  std::ofstream out(*log_path_, std::ios::app | std::ios::binary);
  if (!out) throw ConfigError("cannot append to session log " + log_path_->string());
  out << compact_dump(record) << '\n';
  out.flush();
}

void SessionRegistry::replay() {
  std::ifstream in(*log_path_, std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = log_path_->string() + ":" + std::to_string(line_no);
    Json record;
    try {
      record = parse_json(line);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!record.is_object() || !record.contains("session_id") || !record.contains("event")) {
      throw ParseError(where + ": not a session log record");
    }
    try {
      apply_event(record, where);
    } catch (const Json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
}

void SessionRegistry::apply_event(const Json& record, const std::string& where) {
  const std::string id = record["session_id"].get<std::string>();
  const std::string event = record["event"].get<std::string>();
  const Json payload = record.value("payload", Json::object());
  const std::string timestamp = record.value("timestamp", std::string());

  if (event == "started") {
    auto s = std::make_unique<Slot>();
    s->session.id = id;
    s->session.purpose = payload.value("purpose", std::string());
    sessions_[id] = std::move(s);
    next_id_ = std::max(next_id_, id_number(id) + 1);
    return;
  }
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ParseError(where + ": event for unknown session " + id);
  TuningSession& session = it->second->session;
  if (event == "iteration") {
    session.iterations.push_back({payload.value("prompt", Json()),
                                  payload.value("response", std::string()),
                                  payload.value("engineer_notes", std::string()), timestamp});
    session.status = SessionStatus::kIterating;
  } else if (event == "finalized") {
    session.status = SessionStatus::kFinalized;
    session.finalized_template = payload.value("template_id", std::string());
  } else if (event == "abandoned") {
    session.status = SessionStatus::kAbandoned;
  } else {
    throw ParseError(where + ": unknown event '" + event + "'");
  }
}

TuningSession SessionRegistry::start_session(const std::string& purpose) {
  if (purpose.empty()) throw PreconditionError("a tuning session needs a purpose");
  auto s = std::make_unique<Slot>();
  std::string id;
  {
    std::lock_guard lock(registry_mutex_);
    id = "s" + std::to_string(next_id_++);
    s->session.id = id;
    s->session.purpose = purpose;
    sessions_[id] = std::move(s);
  }
  append_log(id, "started", Json::object({{"purpose", purpose}}), now_iso8601());
  return get(id);
}

TuningIteration SessionRegistry::submit_iteration(const std::string& session_id,
                                                  const PromptDraft& prompt, LlmBackend& backend,
                                                  const std::string& engineer_notes,
                                                  const CompletionParams& params) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.mutex);
  require_open(s.session);
  const std::string wire = render_draft(prompt);
  if (wire.empty()) throw PreconditionError("empty prompt draft");
  CompletionParams p = params;
  if (const auto* sp = std::get_if<StructuredPrompt>(&prompt)) p.label = sp->template_id;
  const std::string response = backend.complete({{Role::kUser, wire}}, p);

  TuningIteration iteration{prompt_json(prompt), response, engineer_notes, now_iso8601()};
  Json payload = Json::object();
  payload["prompt"] = iteration.prompt;
  payload["response"] = iteration.response;
  payload["engineer_notes"] = iteration.engineer_notes;
  append_log(session_id, "iteration", std::move(payload), iteration.timestamp);
  s.session.iterations.push_back(iteration);
  s.session.status = SessionStatus::kIterating;
  return iteration;
}

MetaOntology SessionRegistry::finalize_session(const std::string& session_id,
                                               const PromptTemplate& tmpl,
                                               const MetaOntology& onto) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.mutex);
  require_open(s.session);
  if (s.session.iterations.empty()) {
    throw PreconditionError("session " + session_id + " has no iterations to finalize");
  }
  MetaOntology next = onto;
  next.templates.push_back(tmpl);
  auto diags = validate_meta_ontology(next);
  if (count_errors(diags) > 0) {
    std::erase_if(diags, [](const Diagnostic& d) { return d.severity != Severity::kError; });
    throw ValidationFailed(std::move(diags));
  }
  Json payload = Json::object();
  payload["template_id"] = tmpl.id;
  payload["template"] = to_json(tmpl);
  append_log(session_id, "finalized", std::move(payload), now_iso8601());
  s.session.status = SessionStatus::kFinalized;
  s.session.finalized_template = tmpl.id;
  return next;
}

void SessionRegistry::abandon_session(const std::string& session_id) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.mutex);
  require_open(s.session);
  append_log(session_id, "abandoned", Json::object(), now_iso8601());
  s.session.status = SessionStatus::kAbandoned;
}

TuningSession SessionRegistry::get(const std::string& session_id) const {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.mutex);
  return s.session;
}

std::vector<TuningSession> SessionRegistry::list() const {
  std::vector<Slot*> slots;
  {
    std::lock_guard lock(registry_mutex_);
    for (const auto& [_, s] : sessions_) slots.push_back(s.get());
  }
  std::vector<TuningSession> out;
  for (Slot* s : slots) {
    std::lock_guard lock(s->mutex);
    out.push_back(s->session);
  }
  std::sort(out.begin(), out.end(), [](const TuningSession& a, const TuningSession& b) {
    return id_number(a.id) < id_number(b.id);
  });
  return out;
}

}  // namespace ontoprompt
