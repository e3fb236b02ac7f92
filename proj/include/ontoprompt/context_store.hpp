#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ontoprompt/dialogue_types.hpp"
#include "ontoprompt/errors.hpp"
#include "ontoprompt/json_util.hpp"

namespace ontoprompt {

enum class Sentiment { kPositive, kNegative, kNeutral };

std::string to_string(Sentiment s);
std::optional<Sentiment> sentiment_from_string(std::string_view s);

struct EntityBinding {
  std::vector<std::string> lemmas;
  std::string role;

  friend bool operator==(const EntityBinding&, const EntityBinding&) = default;
};

struct ContextEntry {
  std::string id;
  std::string text;
  std::string language;
  std::vector<EntityBinding> bindings;
  std::optional<Sentiment> sentiment;
  std::string source;

  friend bool operator==(const ContextEntry&, const ContextEntry&) = default;
};

struct SelectedContext {
  std::string id;
  int score = 0;
  std::vector<std::string> matched_lemmas;

  friend bool operator==(const SelectedContext&, const SelectedContext&) = default;
};

using ContextSelection = std::vector<SelectedContext>;

inline constexpr std::size_t kDefaultTopK = 3;

/// Immutable collection of contexts with a case-folded lemma index.
class ContextStore {
 public:
  ContextStore() = default;
  explicit ContextStore(std::vector<ContextEntry> entries);

  const std::vector<ContextEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const ContextEntry* find(std::string_view id) const;

  // Entry indices whose bindings carry the (already folded) lemma.
  const std::vector<std::size_t>* postings(const std::string& folded_lemma) const;

 private:
  std::vector<ContextEntry> entries_;
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

using ContextStoreSnapshot = std::shared_ptr<const ContextStore>;

/// Throws ParseError or SchemaError.
ContextStore load_contexts(std::string_view document);
ContextStore load_contexts_file(const std::string& path);

// Decoding only; see validate_contexts.
std::vector<ContextEntry> decode_contexts(std::string_view document);

std::vector<Diagnostic> validate_contexts(const std::vector<ContextEntry>& entries);

Json to_json(const ContextEntry& entry);
Json to_json(const ContextStore& store);
Json to_json(const ContextSelection& selection);

/// Ranks contexts by weighted lemma overlap with the query: per entity group
/// 2 when its main word is bound, else 1 when any of its words is; plus 1 per
/// intent whose subject or object is bound. Zero scores are dropped; ties go
/// to the smaller id. Throws PreconditionError when k == 0.
ContextSelection select_contexts(const ContextStore& store, const std::vector<EntityGroup>& entities,
                                 const std::vector<Intent>& intents, std::size_t k = kDefaultTopK,
                                 std::optional<Sentiment> sentiment_filter = std::nullopt);

}  // namespace ontoprompt
