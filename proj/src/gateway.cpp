#include "ontoprompt/gateway.hpp"

#include <cstdlib>

#include <httplib.h>

#include "ontoprompt/errors.hpp"

namespace ontoprompt {
namespace {

namespace fs = std::filesystem;

const Json* member(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

template <typename T>
void read_number(const Json& obj, const char* key, const std::string& where, T& out) {
  const Json* v = member(obj, key);
  if (!v) return;
  if (!v->is_number()) throw ConfigError(where + "." + key + ": expected a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v->is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
    if (v->is_number_integer() && v->get<std::int64_t>() < 0) {
      throw ConfigError(where + "." + key + ": must be non-negative");
    }
  }
  out = v->get<T>();
}

void read_string(const Json& obj, const char* key, const std::string& where, std::string& out) {
  const Json* v = member(obj, key);
  if (!v) return;
  if (!v->is_string()) throw ConfigError(where + "." + key + ": expected a string");
  out = v->get<std::string>();
}

void read_bool(const Json& obj, const char* key, const std::string& where, bool& out) {
  const Json* v = member(obj, key);
  if (!v) return;
  if (!v->is_boolean()) throw ConfigError(where + "." + key + ": expected a boolean");
  out = v->get<bool>();
}

void read_path(const Json& obj, const char* key, const fs::path& base, fs::path& out) {
  std::string s;
  read_string(obj, key, "paths", s);
  if (s.empty()) return;
  fs::path p(s);
  out = p.is_relative() && !base.empty() ? base / p : p;
}

const Json& section(const Json& doc, const char* key) {
  static const Json empty = Json::object();
  const Json* s = member(doc, key);
  if (!s) return empty;
  if (!s->is_object()) throw ConfigError(std::string(key) + ": expected an object");
  return *s;
}

double parse_double(const std::string& name, const std::string& value) {
  try {
    std::size_t used = 0;
    double d = std::stod(value, &used);
    if (used == value.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(name + ": expected a number, got '" + value + "'");
}

long parse_long(const std::string& name, const std::string& value) {
  try {
    std::size_t used = 0;
    long n = std::stol(value, &used);
    if (used == value.size()) return n;
  } catch (const std::exception&) {
  }
  throw ConfigError(name + ": expected an integer, got '" + value + "'");
}

template <typename T>
T checked(const std::function<T()>& load, const fs::path& path) {
  try {
    return load();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

MetaOntologySnapshot load_meta(const fs::path& path) {
  return checked<MetaOntologySnapshot>(
      [&] { return std::make_shared<const MetaOntology>(load_meta_ontology_file(path.string())); },
      path);
}

ContextStoreSnapshot load_store(const fs::path& path) {
  return checked<ContextStoreSnapshot>(
      [&] { return std::make_shared<const ContextStore>(load_contexts_file(path.string())); }, path);
}

Json shape(std::initializer_list<std::pair<const char*, const char*>> fields) {
  Json j = Json::object();
  for (const auto& [k, v] : fields) j[k] = v;
  return j;
}

}  // namespace

EngineConfig engine_config_from_json(const Json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config: expected an object");
  EngineConfig c;

  const Json& b = section(doc, "backend");
  read_string(b, "kind", "backend", c.backend.kind);
  read_string(b, "url", "backend", c.backend.url);
  read_string(b, "model", "backend", c.backend.model);
  read_number(b, "temperature", "backend", c.backend.temperature);
  read_number(b, "max_tokens", "backend", c.backend.max_tokens);
  read_number(b, "retries", "backend", c.backend.retries);
  read_number(b, "timeout_ms", "backend", c.backend.timeout_ms);

  const Json& p = section(doc, "pipeline");
  read_number(p, "top_k", "pipeline", c.pipeline.top_k);
  read_number(p, "intent_floor", "pipeline", c.pipeline.intent_floor);
  read_bool(p, "parallel", "pipeline", c.pipeline.parallel);
  if (const Json* lang = member(p, "language")) {
    if (!lang->is_string()) throw ConfigError("pipeline.language: expected a string");
    c.pipeline.language = lang->get<std::string>();
  }
  if (const Json* s = member(p, "sentiment_filter")) {
    if (!s->is_string()) throw ConfigError("pipeline.sentiment_filter: expected a string");
    c.pipeline.sentiment_filter = sentiment_from_string(s->get<std::string>());
    if (!c.pipeline.sentiment_filter) {
      throw ConfigError("pipeline.sentiment_filter: unknown sentiment '" + s->get<std::string>() +
                        "'");
    }
  }
  const Json& pre = section(p, "preprocess");
  read_bool(pre, "normalize_unicode", "pipeline.preprocess", c.pipeline.preprocess.normalize_unicode);
  read_bool(pre, "collapse_whitespace", "pipeline.preprocess",
            c.pipeline.preprocess.collapse_whitespace);
  read_bool(pre, "strip_control", "pipeline.preprocess", c.pipeline.preprocess.strip_control);
  read_number(pre, "max_length", "pipeline.preprocess", c.pipeline.preprocess.max_length);

  const Json& paths = section(doc, "paths");
  read_path(paths, "meta_ontology", base_dir, c.meta_ontology);
  read_path(paths, "contexts", base_dir, c.contexts);
  read_path(paths, "script", base_dir, c.script);
  read_path(paths, "session_log", base_dir, c.session_log);
  read_path(paths, "judgments", base_dir, c.judgments);

  const Json& s = section(doc, "server");
  read_string(s, "host", "server", c.host);
  read_number(s, "port", "server", c.port);
  read_bool(s, "include_trace", "server", c.include_trace);

  c.pipeline.completion.model = c.backend.model;
  c.pipeline.completion.temperature = c.backend.temperature;
  c.pipeline.completion.max_tokens = c.backend.max_tokens;
  return c;
}

EngineConfig load_engine_config_file(const std::string& path) {
  const Json doc = parse_json(read_file(path));
  return engine_config_from_json(doc, fs::path(path).parent_path());
}

void apply_env_overrides(EngineConfig& c, const EnvLookup& env) {
  EnvLookup lookup = env ? env : [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
  auto str = [&](const char* name, std::string& out) {
    if (auto v = lookup(name)) out = *v;
  };
  auto path = [&](const char* name, fs::path& out) {
    if (auto v = lookup(name)) out = *v;
  };
  str("ONTO_BACKEND", c.backend.kind);
  str("ONTO_BACKEND_URL", c.backend.url);
  str("ONTO_MODEL", c.backend.model);
  if (auto v = lookup("ONTO_TEMPERATURE")) c.backend.temperature = parse_double("ONTO_TEMPERATURE", *v);
  if (auto v = lookup("ONTO_MAX_TOKENS")) {
    c.backend.max_tokens = static_cast<int>(parse_long("ONTO_MAX_TOKENS", *v));
  }
  if (auto v = lookup("ONTO_TOP_K")) {
    const long k = parse_long("ONTO_TOP_K", *v);
    if (k < 0) throw ConfigError("ONTO_TOP_K: must be at least 1");
    c.pipeline.top_k = static_cast<std::size_t>(k);
  }
  if (auto v = lookup("ONTO_INTENT_FLOOR")) {
    c.pipeline.intent_floor = parse_double("ONTO_INTENT_FLOOR", *v);
  }
  path("ONTO_META_ONTOLOGY", c.meta_ontology);
  path("ONTO_CONTEXTS", c.contexts);
  path("ONTO_SCRIPT", c.script);
  path("ONTO_SESSION_LOG", c.session_log);
  path("ONTO_JUDGMENTS", c.judgments);
  str("ONTO_HOST", c.host);
  if (auto v = lookup("ONTO_PORT")) c.port = static_cast<int>(parse_long("ONTO_PORT", *v));
  c.pipeline.completion.model = c.backend.model;
  c.pipeline.completion.temperature = c.backend.temperature;
  c.pipeline.completion.max_tokens = c.backend.max_tokens;
}

void validate_engine_config(const EngineConfig& c) {
  if (c.pipeline.top_k < 1) throw ConfigError("pipeline.top_k: must be at least 1");
  if (!(c.pipeline.intent_floor >= 0.0 && c.pipeline.intent_floor <= 1.0)) {
    throw ConfigError("pipeline.intent_floor: must lie in [0, 1]");
  }
  if (c.meta_ontology.empty()) throw ConfigError("paths.meta_ontology: not set");
  if (c.contexts.empty()) throw ConfigError("paths.contexts: not set");
  if (c.backend.kind == "scripted") {
    if (c.script.empty()) throw ConfigError("paths.script: required by the scripted backend");
  } else if (c.backend.kind == "remote") {
    if (c.backend.url.empty()) throw ConfigError("backend.url: required by the remote backend");
  } else {
    throw ConfigError("backend.kind: expected 'scripted' or 'remote', got '" + c.backend.kind + "'");
  }
  if (c.backend.temperature < 0.0) throw ConfigError("backend.temperature: must be non-negative");
  if (c.backend.max_tokens <= 0) throw ConfigError("backend.max_tokens: must be positive");
  if (c.port < 0 || c.port > 65535) throw ConfigError("server.port: out of range");
}

Json to_json(const EngineConfig& c) {
  Json j = Json::object();
  j["backend"] = {{"kind", c.backend.kind},
                  {"url", c.backend.url},
                  {"model", c.backend.model},
                  {"temperature", c.backend.temperature},
                  {"max_tokens", c.backend.max_tokens},
                  {"retries", c.backend.retries},
                  {"timeout_ms", c.backend.timeout_ms}};
  Json pipeline = Json::object();
  pipeline["top_k"] = c.pipeline.top_k;
  pipeline["intent_floor"] = c.pipeline.intent_floor;
  pipeline["parallel"] = c.pipeline.parallel;
  pipeline["language"] = c.pipeline.language ? Json(*c.pipeline.language) : Json();
  pipeline["sentiment_filter"] =
      c.pipeline.sentiment_filter ? Json(to_string(*c.pipeline.sentiment_filter)) : Json();
  pipeline["preprocess"] = {{"normalize_unicode", c.pipeline.preprocess.normalize_unicode},
                            {"collapse_whitespace", c.pipeline.preprocess.collapse_whitespace},
                            {"strip_control", c.pipeline.preprocess.strip_control},
                            {"max_length", c.pipeline.preprocess.max_length}};
  j["pipeline"] = std::move(pipeline);
  j["paths"] = {{"meta_ontology", c.meta_ontology.string()},
                {"contexts", c.contexts.string()},
                {"script", c.script.string()},
                {"session_log", c.session_log.string()},
                {"judgments", c.judgments.string()}};
  j["server"] = {{"host", c.host}, {"port", c.port}, {"include_trace", c.include_trace}};
  return j;
}

const ServiceDescriptor& service_descriptor() {
  static const ServiceDescriptor d = [] {
    ServiceDescriptor s;
    s.preconditions = {"meta-ontology loaded and valid", "context store loaded and valid",
                       "LLM backend configured"};
    s.effects = {"dialogue acts leave no server-side conversation state",
                 "finalized tuning sessions publish a new meta-ontology snapshot",
                 "judgments and tuning events are appended to their logs"};
    s.inputs = {"user question text", "prompt drafts", "prompt templates", "answer judgments"};
    s.outputs = {"answer document with dialogue trace", "meta-ontology and context documents",
                 "tuning session records", "quality metrics"};
    s.provider = "ontoprompt";
    s.endpoints = {
        {"POST", "/v1/chat", "Run one dialogue act", shape({{"text", "string"}, {"language", "string?"}}),
         shape({{"answer", "answer document"}, {"trace", "dialogue trace?"}})},
        {"GET", "/v1/descriptor", "This service descriptor", Json(), shape({{"descriptor", "object"}})},
        {"GET", "/v1/meta-ontology", "Current meta-ontology snapshot", Json(),
         shape({{"meta_ontology", "meta-ontology document"}})},
        {"GET", "/v1/contexts", "Current context store", Json(),
         shape({{"contexts", "context array"}})},
        {"POST", "/v1/tuning/sessions", "Start a tuning session", shape({{"purpose", "string"}}),
         shape({{"session", "session record"}})},
        {"GET", "/v1/tuning/sessions", "List tuning sessions", Json(),
         shape({{"sessions", "session record array"}})},
        {"GET", "/v1/tuning/sessions/{id}", "One tuning session with its iterations", Json(),
         shape({{"session", "session record"}})},
        {"POST", "/v1/tuning/sessions/{id}/iterations", "Send a prompt draft to the backend",
         shape({{"prompt", "structured prompt object or string"}, {"notes", "string?"},
                {"template_id", "string?"}}),
         shape({{"iteration", "iteration record"}})},
        {"POST", "/v1/tuning/sessions/{id}/finalize", "Add the tuned template to the ontology",
         shape({{"template", "prompt template"}}),
         shape({{"session", "session record"}, {"template_count", "integer"}})},
        {"POST", "/v1/eval/judgments", "Append judgments",
         shape({{"judgments", "judgment or judgment array"}}),
         shape({{"appended", "integer"}, {"counts", "object"}})},
        {"GET", "/v1/eval/metrics", "Metrics over all judgments", Json(),
         shape({{"counts", "object"}, {"metrics", "object"}})},
    };
    s.description_human =
        "Answers natural-language questions by instantiating structured prompts from a "
        "meta-ontology, selecting supporting contexts, and formatting the model's replies. "
        "Also hosts prompt-tuning sessions and answer-quality evaluation.";
    return s;
  }();
  return d;
}

Json to_json(const ServiceDescriptor& d) {
  Json endpoints = Json::array();
  for (const auto& e : d.endpoints) {
    endpoints.push_back({{"method", e.method},
                         {"path", e.path},
                         {"summary", e.summary},
                         {"request", e.request},
                         {"response", e.response}});
  }
  Json j = Json::object();
  j["preconditions"] = d.preconditions;
  j["effects"] = d.effects;
  j["inputs"] = d.inputs;
  j["outputs"] = d.outputs;
  j["provider"] = d.provider;
  j["description_machine"] = {{"protocol", "HTTP/1.1"},
                              {"media_type", "application/json"},
                              {"endpoints", std::move(endpoints)}};
  j["description_human"] = d.description_human;
  return j;
}

std::shared_ptr<LlmBackend> make_backend(const EngineConfig& c) {
  if (c.backend.kind == "scripted") {
    return checked<std::shared_ptr<LlmBackend>>(
        [&] { return std::shared_ptr<LlmBackend>(load_script_file(c.script.string())); }, c.script);
  }
  RemoteOptions o;
  o.url = c.backend.url;
  o.api_key = api_key_from_env();
  o.retries = c.backend.retries;
  o.timeout = std::chrono::milliseconds(c.backend.timeout_ms);
  return std::make_shared<RemoteBackend>(std::move(o));
}

Engine::Engine(EngineConfig config) : config_(std::move(config)) {
  validate_engine_config(config_);
  init(nullptr);
}

Engine::Engine(EngineConfig config, std::shared_ptr<LlmBackend> backend)
    : config_(std::move(config)) {
  if (!backend) throw PreconditionError("engine needs a backend");
  init(std::move(backend));
}

void Engine::init(std::shared_ptr<LlmBackend> backend) {
  if (config_.pipeline.top_k < 1) throw ConfigError("pipeline.top_k: must be at least 1");
  meta_ = load_meta(config_.meta_ontology);
  contexts_ = load_store(config_.contexts);
  backend_ = backend ? std::move(backend) : make_backend(config_);
  std::optional<fs::path> log;
  if (!config_.session_log.empty()) log = config_.session_log;
  sessions_ = checked<std::unique_ptr<SessionRegistry>>(
      [&] { return std::make_unique<SessionRegistry>(log); }, config_.session_log);
  std::optional<fs::path> jpath;
  if (!config_.judgments.empty()) jpath = config_.judgments;
  judgments_ = checked<std::unique_ptr<JudgmentStore>>(
      [&] { return std::make_unique<JudgmentStore>(jpath); }, config_.judgments);
}

MetaOntologySnapshot Engine::meta() const {
  std::lock_guard lock(snapshot_mutex_);
  return meta_;
}

ContextStoreSnapshot Engine::contexts() const {
  std::lock_guard lock(snapshot_mutex_);
  return contexts_;
}

void Engine::reload() {
  auto meta = load_meta(config_.meta_ontology);
  auto store = load_store(config_.contexts);
  std::lock_guard lock(snapshot_mutex_);
  meta_ = std::move(meta);
  contexts_ = std::move(store);
}

void Engine::swap_meta(MetaOntologySnapshot next) {
  if (!next) throw PreconditionError("null meta-ontology snapshot");
  std::lock_guard lock(snapshot_mutex_);
  meta_ = std::move(next);
}

DialogueOutcome Engine::chat(std::string_view text, const std::optional<std::string>& language) const {
  PipelineConfig pc = config_.pipeline;
  if (language) pc.language = *language;
  DialogueContext ctx{meta(), contexts(), backend_};
  return run_dialogue_act(text, ctx, pc);
}

MetaOntologySnapshot Engine::finalize(const std::string& session_id, const PromptTemplate& tmpl) {
  // Serialize finalizations so that two sessions cannot both extend the
  // same base snapshot and lose one template.
  static std::mutex finalize_mutex;
  std::lock_guard lock(finalize_mutex);
  auto next = std::make_shared<const MetaOntology>(sessions_->finalize_session(session_id, tmpl, *meta()));
  swap_meta(next);
  return next;
}

int status_for(const std::string& code) {
  if (code == "ParseError" || code == "BadRequest") return 400;
  if (code == "NotFound") return 404;
  if (code == "SessionClosed") return 409;
  if (code == "SchemaError" || code == "EmptyInput" || code == "MalformedResponse" ||
      code == "NoStructuredPayload" || code == "ValidationFailed" ||
      code == "PreconditionViolation" || code == "MissingBinding" || code == "IllegalValue" ||
      code == "UndefinedMetric") {
    return 422;
  }
  if (code == "BackendUnavailable" || code == "AuthError" || code == "TokenLimitExceeded") return 502;
  if (code == "Timeout") return 504;
  return 500;
}

Json error_body(const std::string& code, const std::string& message,
                const std::optional<std::string>& process) {
  Json err = Json::object();
  if (process) err["process"] = *process;
  err["code"] = code;
  err["message"] = message;
  return Json::object({{"error", std::move(err)}});
}

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(compact_dump(body), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, const Error& e) {
  Json body = error_body(e.code(), e.what());
  if (const auto* v = dynamic_cast<const ValidationFailed*>(&e)) {
    Json diags = Json::array();
    for (const auto& d : v->diagnostics()) {
      diags.push_back({{"severity", to_string(d.severity)}, {"path", d.path}, {"message", d.message}});
    }
    body["error"]["diagnostics"] = std::move(diags);
  }
  send_json(res, status_for(e.code()), body);
}

class BadRequest : public Error {
 public:
  explicit BadRequest(const std::string& message) : Error("BadRequest", message) {}
};

Json body_object(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  Json j = parse_json(req.body);
  if (!j.is_object()) throw BadRequest("request body must be a JSON object");
  return j;
}

std::string required_text(const Json& body, const char* key) {
  const Json* v = member(body, key);
  if (!v || !v->is_string()) throw BadRequest(std::string("field '") + key + "' must be a string");
  return v->get<std::string>();
}

bool flag_off(const httplib::Request& req, const Json& body, const char* key) {
  if (const Json* v = member(body, key); v && v->is_boolean() && !v->get<bool>()) return true;
  if (req.has_param(key)) {
    const std::string v = req.get_param_value(key);
    return v == "false" || v == "0";
  }
  return false;
}

PromptDraft draft_from_json(const Json& body) {
  const Json* p = member(body, "prompt");
  if (!p) throw BadRequest("field 'prompt' is required");
  if (p->is_string()) return p->get<std::string>();
  if (!p->is_object()) throw BadRequest("field 'prompt' must be a string or an object");
  StructuredPrompt sp;
  if (const Json* t = member(body, "template_id"); t && t->is_string()) {
    sp.template_id = t->get<std::string>();
  }
  for (const auto& [k, v] : p->items()) {
    if (k == "language" && v.is_string()) sp.language = v.get<std::string>();
    sp.entries.push_back({k, v});
  }
  if (sp.entries.empty()) throw BadRequest("prompt object is empty");
  return sp;
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const DialogueFailure& e) {
      Json body = error_body(e.code(), e.detail(), e.process());
      body["trace"] = e.trace().to_json();
      send_json(res, status_for(e.code()), body);
    } catch (const PipelineError& e) {
      send_json(res, status_for(e.code()), error_body(e.code(), e.detail(), e.process()));
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const Json::exception& e) {
      send_json(res, 400, error_body("BadRequest", e.what()));
    } catch (const std::exception& e) {
      send_json(res, 500, error_body("InternalError", e.what()));
    }
  };
}

}  // namespace

Gateway::Gateway(Engine& engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) {
  routes();
}

Gateway::~Gateway() { stop(); }

void Gateway::routes() {
  auto& s = *server_;
  // SO_REUSEPORT (the library default) would let a second server share a
  // port that is already taken.
  s.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Post("/v1/chat", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_object(req);
    const std::string text = required_text(body, "text");
    std::optional<std::string> language;
    if (const Json* l = member(body, "language")) {
      if (!l->is_string()) throw BadRequest("field 'language' must be a string");
      language = l->get<std::string>();
    }
    const DialogueOutcome out = engine_.chat(text, language);
    Json reply = Json::object();
    reply["answer"] = out.answer;
    if (engine_.config().include_trace && !flag_off(req, body, "trace")) {
      reply["trace"] = out.trace.to_json();
    }
    send_json(res, 200, reply);
  }));

  s.Get("/v1/descriptor", guarded([](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, to_json(service_descriptor()));
  }));

  s.Get("/v1/meta-ontology", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, to_json(*engine_.meta()));
  }));

  s.Get("/v1/contexts", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, to_json(*engine_.contexts()));
  }));

  s.Post("/v1/tuning/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_object(req);
    const std::string purpose = required_text(body, "purpose");
    if (!purpose_from_string(purpose)) throw BadRequest("unknown purpose '" + purpose + "'");
    send_json(res, 201, to_json(engine_.sessions().start_session(purpose)));
  }));

  s.Get("/v1/tuning/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
    Json list = Json::array();
    for (const auto& session : engine_.sessions().list()) list.push_back(to_json(session));
    send_json(res, 200, Json::object({{"sessions", std::move(list)}}));
  }));

  s.Get(R"(/v1/tuning/sessions/([^/]+))",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, to_json(engine_.sessions().get(req.matches[1].str())));
        }));

  s.Post(R"(/v1/tuning/sessions/([^/]+)/iterations)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const Json body = body_object(req);
           const PromptDraft draft = draft_from_json(body);
           std::string notes;
           if (const Json* n = member(body, "notes")) {
             if (!n->is_string()) throw BadRequest("field 'notes' must be a string");
             notes = n->get<std::string>();
           }
           CompletionParams params = engine_.config().pipeline.completion;
           if (const Json* t = member(body, "temperature")) {
             if (!t->is_number()) throw BadRequest("field 'temperature' must be a number");
             params.temperature = t->get<double>();
           }
           const TuningIteration it = engine_.sessions().submit_iteration(
               req.matches[1].str(), draft, engine_.backend(), notes, params);
           send_json(res, 201,
                     Json::object({{"prompt", it.prompt},
                                   {"response", it.response},
                                   {"engineer_notes", it.engineer_notes},
                                   {"timestamp", it.timestamp}}));
         }));

  s.Post(R"(/v1/tuning/sessions/([^/]+)/finalize)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const Json body = body_object(req);
           const Json* t = member(body, "template");
           if (!t) throw BadRequest("field 'template' is required");
           const PromptTemplate tmpl = template_from_json(*t, "template");
           const std::string id = req.matches[1].str();
           const auto next = engine_.finalize(id, tmpl);
           Json reply = Json::object();
           reply["session"] = to_json(engine_.sessions().get(id));
           reply["template_count"] = next->templates.size();
           send_json(res, 200, reply);
         }));

  s.Post("/v1/eval/judgments", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Json body = parse_json(req.body);
    const Json* list = &body;
    if (body.is_object() && body.contains("judgments")) list = &body["judgments"];
    std::vector<Judgment> batch;
    if (list->is_array()) {
      for (std::size_t i = 0; i < list->size(); ++i) {
        try {
          batch.push_back(judgment_from_json((*list)[i]));
        } catch (const SchemaError& e) {
          throw SchemaError("judgments[" + std::to_string(i) + "]." + e.path(), e.what());
        }
      }
    } else {
      batch.push_back(judgment_from_json(*list));
    }
    for (const auto& j : batch) engine_.judgments().append(j);
    const Json metrics = to_json(compute_metrics(engine_.judgments().counts()));
    send_json(res, 201, Json::object({{"appended", batch.size()}, {"counts", metrics["counts"]}}));
  }));

  s.Get("/v1/eval/metrics", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, to_json(compute_metrics(engine_.judgments().counts())));
  }));

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) {
      res.set_content(compact_dump(error_body("NotFound", "no such endpoint")),
                      "application/json; charset=utf-8");
    }
  });
}

int Gateway::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound < 0) throw BindError("cannot bind " + host + " on any port");
  } else if (!server_->bind_to_port(host, port)) {
    throw BindError("cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void Gateway::listen() { server_->listen_after_bind(); }

void Gateway::stop() {
  if (server_) server_->stop();
}

bool Gateway::running() const { return server_->is_running(); }

}  // namespace ontoprompt
