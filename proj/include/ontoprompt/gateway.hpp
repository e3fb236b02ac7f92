#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ontoprompt/context_store.hpp"
#include "ontoprompt/dialogue_pipeline.hpp"
#include "ontoprompt/evaluation.hpp"
#include "ontoprompt/json_util.hpp"
#include "ontoprompt/llm_backend.hpp"
#include "ontoprompt/meta_learning.hpp"
#include "ontoprompt/meta_ontology.hpp"

namespace httplib {
class Server;
}

namespace ontoprompt {

struct BackendConfig {
  std::string kind = "scripted";  // scripted | remote
  std::string url;
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_tokens = 1024;
  int retries = 3;
  int timeout_ms = 60000;
};

struct EngineConfig {
  BackendConfig backend;
  PipelineConfig pipeline;
  std::filesystem::path meta_ontology;
  std::filesystem::path contexts;
  std::filesystem::path script;
  std::filesystem::path session_log;  // empty: sessions kept in memory only
  std::filesystem::path judgments;    // empty: judgments kept in memory only
  std::string host = "127.0.0.1";
  int port = 8080;
  bool include_trace = true;
};

// Environment lookup used for ONTO_* overrides; the default reads getenv.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads a config document. Relative paths resolve against `base_dir`.
/// Throws ParseError or ConfigError naming the offending key.
EngineConfig engine_config_from_json(const Json& doc, const std::filesystem::path& base_dir = {});
EngineConfig load_engine_config_file(const std::string& path);

/// ONTO_BACKEND, ONTO_BACKEND_URL, ONTO_MODEL, ONTO_TEMPERATURE, ONTO_MAX_TOKENS,
/// ONTO_TOP_K, ONTO_INTENT_FLOOR, ONTO_META_ONTOLOGY, ONTO_CONTEXTS,
/// ONTO_SCRIPT, ONTO_SESSION_LOG, ONTO_JUDGMENTS, ONTO_HOST, ONTO_PORT.
void apply_env_overrides(EngineConfig& config, const EnvLookup& env = {});

/// Throws ConfigError: top_k >= 1, floor in [0,1], required paths present.
void validate_engine_config(const EngineConfig& config);

Json to_json(const EngineConfig& config);

struct EndpointInfo {
  std::string method;
  std::string path;
  std::string summary;
  Json request;   // body shape, null for none
  Json response;  // body shape
};

struct ServiceDescriptor {
  std::vector<std::string> preconditions;
  std::vector<std::string> effects;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string provider;
  std::vector<EndpointInfo> endpoints;
  std::string description_human;
};

const ServiceDescriptor& service_descriptor();
Json to_json(const ServiceDescriptor& d);

/// Loaded stores plus the services built on them. The meta-ontology and the
/// context store are immutable snapshots; readers take a copy of the pointer,
/// writers swap it under the lock.
class Engine {
 public:
  /// Loads stores and builds the backend named in the config.
  explicit Engine(EngineConfig config);
  /// Same, with an injected backend (the config's backend section is ignored).
  Engine(EngineConfig config, std::shared_ptr<LlmBackend> backend);

  const EngineConfig& config() const { return config_; }
  MetaOntologySnapshot meta() const;
  ContextStoreSnapshot contexts() const;
  LlmBackend& backend() const { return *backend_; }
  SessionRegistry& sessions() { return *sessions_; }
  JudgmentStore& judgments() { return *judgments_; }

  /// Re-reads both stores from disk and swaps them in.
  void reload();
  void swap_meta(MetaOntologySnapshot next);

  /// One stateless dialogue act against the current snapshots.
  DialogueOutcome chat(std::string_view text, const std::optional<std::string>& language = {}) const;

  /// Finalizes a tuning session and publishes the resulting snapshot.
  MetaOntologySnapshot finalize(const std::string& session_id, const PromptTemplate& tmpl);

 private:
  void init(std::shared_ptr<LlmBackend> backend);

  EngineConfig config_;
  mutable std::mutex snapshot_mutex_;
  MetaOntologySnapshot meta_;
  ContextStoreSnapshot contexts_;
  std::shared_ptr<LlmBackend> backend_;
  std::unique_ptr<SessionRegistry> sessions_;
  std::unique_ptr<JudgmentStore> judgments_;
};

std::shared_ptr<LlmBackend> make_backend(const EngineConfig& config);

// HTTP status for an error code.
int status_for(const std::string& code);
Json error_body(const std::string& code, const std::string& message,
                const std::optional<std::string>& process = std::nullopt);

/// HTTP front end over an Engine.
class Gateway {
 public:
  explicit Gateway(Engine& engine);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound
  /// port. Throws BindError.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();
  bool running() const;

 private:
  void routes();

  Engine& engine_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace ontoprompt
