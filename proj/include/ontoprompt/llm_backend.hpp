#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ontoprompt/json_util.hpp"

namespace ontoprompt {

enum class Role { kSystem, kUser, kAssistant };

std::string to_string(Role r);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
};

struct CompletionParams {
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_tokens = 1024;
  // Template id of the prompt being completed. Used for script matching,
  // never sent over the wire.
  std::string label;
};

/// Chat-completion backend. Implementations are shareable across threads.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;

  /// Returns the completion text verbatim. Throws BackendUnavailable,
  /// AuthError, TokenLimitExceeded, Timeout, or PreconditionError when the
  /// message list is empty or does not end with a user message.
  std::string complete(const std::vector<ChatMessage>& messages, const CompletionParams& params);

  std::size_t calls() const { return calls_.load(); }

 protected:
  virtual std::string do_complete(const std::vector<ChatMessage>& messages,
                                  const CompletionParams& params) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

enum class Matcher { kExactPrompt, kTemplateId, kSubstring };

struct ScriptEntry {
  Matcher matcher = Matcher::kExactPrompt;
  std::string pattern;
  std::string response;
};

/// Deterministic backend answering from a fixed script. Exact-prompt entries
/// are tried first, then template-id, then substring; within a matcher the
/// first declared entry wins.
class ScriptedBackend : public LlmBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries);

  const std::vector<ScriptEntry>& entries() const { return entries_; }

 protected:
  std::string do_complete(const std::vector<ChatMessage>& messages,
                          const CompletionParams& params) override;

 private:
  std::vector<ScriptEntry> entries_;
};

/// Throws ParseError (malformed document) or SchemaError.
std::unique_ptr<ScriptedBackend> load_script(std::string_view document);
std::unique_ptr<ScriptedBackend> load_script_file(const std::string& path);

struct RemoteOptions {
  std::string url;  // e.g. https://api.openai.com/v1/chat/completions
  std::string api_key;
  int retries = 3;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds timeout{60000};
};

/// OpenAI-compatible chat-completions client.
class RemoteBackend : public LlmBackend {
 public:
  explicit RemoteBackend(RemoteOptions options);

  // Request body exactly as sent.
  static Json request_body(const std::vector<ChatMessage>& messages, const CompletionParams& params);

 protected:
  std::string do_complete(const std::vector<ChatMessage>& messages,
                          const CompletionParams& params) override;

 private:
  RemoteOptions options_;
  std::string scheme_host_port_;
  std::string path_;
};

// API key from ONTO_LLM_API_KEY, empty when unset.
std::string api_key_from_env();

}  // namespace ontoprompt
