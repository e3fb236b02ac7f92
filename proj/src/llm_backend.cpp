#include "ontoprompt/llm_backend.hpp"

#include <cstdlib>
#include <optional>
#include <thread>

#include <httplib.h>

#include "ontoprompt/errors.hpp"

namespace ontoprompt {
namespace {

std::optional<Matcher> matcher_from_string(std::string_view s) {
  if (s == "exact-prompt") return Matcher::kExactPrompt;
  if (s == "template-id") return Matcher::kTemplateId;
  if (s == "substring") return Matcher::kSubstring;
  return std::nullopt;
}

bool token_limit_body(const std::string& body) {
  return body.find("context_length_exceeded") != std::string::npos ||
         body.find("maximum context length") != std::string::npos;
}

}  // namespace

std::string to_string(Role r) {
  switch (r) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "user";
}

std::string LlmBackend::complete(const std::vector<ChatMessage>& messages,
                                 const CompletionParams& params) {
  if (messages.empty() || messages.back().role != Role::kUser) {
    throw PreconditionError("completion needs a message list ending with a user message");
  }
  for (const auto& m : messages) {
    if (m.role != Role::kSystem && m.content.empty()) {
      throw PreconditionError("empty " + to_string(m.role) + " message");
    }
  }
  if (params.temperature < 0.0) throw PreconditionError("temperature must be non-negative");
  if (params.max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
  ++calls_;
  return do_complete(messages, params);
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries) : entries_(std::move(entries)) {}

std::string ScriptedBackend::do_complete(const std::vector<ChatMessage>& messages,
                                         const CompletionParams& params) {
  const std::string& prompt = messages.back().content;
  for (Matcher pass : {Matcher::kExactPrompt, Matcher::kTemplateId, Matcher::kSubstring}) {
    for (const auto& e : entries_) {
      if (e.matcher != pass) continue;
      const bool hit = (pass == Matcher::kExactPrompt && e.pattern == prompt) ||
                       (pass == Matcher::kTemplateId && e.pattern == params.label) ||
                       (pass == Matcher::kSubstring && prompt.find(e.pattern) != std::string::npos);
      if (hit) return e.response;
    }
  }
  throw BackendUnavailable("no script entry");
}

std::unique_ptr<ScriptedBackend> load_script(std::string_view document) {
  const Json doc = parse_json(document);
  if (!doc.is_object()) throw SchemaError("$", "expected an object");
  auto list = doc.find("entries");
  if (list == doc.end() || !list->is_array()) {
    throw SchemaError("entries", "expected an array of script entries");
  }
  std::vector<ScriptEntry> entries;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const Json& e = (*list)[i];
    const std::string path = "entries[" + std::to_string(i) + "]";
    if (!e.is_object()) throw SchemaError(path, "expected an object");
    for (const char* key : {"matcher", "pattern", "response"}) {
      if (!e.contains(key) || !e[key].is_string()) {
        throw SchemaError(path + "." + key, "expected a string");
      }
    }
    auto matcher = matcher_from_string(e["matcher"].get<std::string>());
    if (!matcher) throw SchemaError(path + ".matcher", "unknown matcher");
    ScriptEntry entry{*matcher, e["pattern"].get<std::string>(), e["response"].get<std::string>()};
    if (entry.pattern.empty()) throw SchemaError(path + ".pattern", "empty pattern");
    entries.push_back(std::move(entry));
  }
  return std::make_unique<ScriptedBackend>(std::move(entries));
}

std::unique_ptr<ScriptedBackend> load_script_file(const std::string& path) {
  return load_script(read_file(path));
}

RemoteBackend::RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
  const auto scheme_end = options_.url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("backend URL lacks a scheme: " + options_.url);
  const auto path_start = options_.url.find('/', scheme_end + 3);
  scheme_host_port_ = options_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : options_.url.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (options_.url.starts_with("https://")) {
    throw ConfigError("https backend requested but TLS support is not compiled in");
  }
#endif
}

Json RemoteBackend::request_body(const std::vector<ChatMessage>& messages,
                                 const CompletionParams& params) {
  Json body = Json::object();
  body["model"] = params.model;
  Json list = Json::array();
  for (const auto& m : messages) {
    Json msg = Json::object();
    msg["role"] = to_string(m.role);
    msg["content"] = m.content;
    list.push_back(std::move(msg));
  }
  body["messages"] = std::move(list);
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_tokens;
  return body;
}

std::string RemoteBackend::do_complete(const std::vector<ChatMessage>& messages,
                                       const CompletionParams& params) {
  const std::string body = compact_dump(request_body(messages, params));
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);

  std::string last_error = "backend unreachable";
  bool last_was_timeout = false;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.backoff_base * (1 << (attempt - 1)));

    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    if (!options_.api_key.empty()) client.set_bearer_token_auth(options_.api_key);

    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      const auto err = res.error();
      last_was_timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      last_error = httplib::to_string(err);
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) throw AuthError("backend rejected credentials (HTTP " +
                                                        std::to_string(status) + ")");
    if (status == 413 || (status == 400 && token_limit_body(res->body))) {
      throw TokenLimitExceeded("prompt exceeds the model's token limit");
    }
    if (status == 429 || status >= 500) {
      last_was_timeout = false;
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    if (status != 200) {
      throw BackendUnavailable("backend answered HTTP " + std::to_string(status));
    }
    try {
      const Json envelope = Json::parse(res->body);
      return envelope.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
      throw BackendUnavailable(std::string("malformed completion envelope: ") + e.what());
    }
  }
  if (last_was_timeout) throw Timeout("backend timed out: " + last_error);
  throw BackendUnavailable(last_error);
}

std::string api_key_from_env() {
  const char* key = std::getenv("ONTO_LLM_API_KEY");
  return key ? key : "";
}

}  // namespace ontoprompt
