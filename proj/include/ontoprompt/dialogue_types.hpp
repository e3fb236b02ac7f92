#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ontoprompt/json_util.hpp"

namespace ontoprompt {

struct Intent {
  std::string name;
  std::string type;  // narration | interrogation | imperative
  double probability = 0.0;
  std::optional<std::string> subject;
  std::optional<std::string> object;

  friend bool operator==(const Intent&, const Intent&) = default;
};

enum class GroupType { kNoun, kVerb };

std::string to_string(GroupType g);

struct EntityGroup {
  std::vector<std::string> words;
  GroupType group_type = GroupType::kNoun;
  std::string main_word;

  friend bool operator==(const EntityGroup&, const EntityGroup&) = default;
};

struct ConclusionDirective {
  bool expected = false;
  std::optional<std::string> kind;

  friend bool operator==(const ConclusionDirective&, const ConclusionDirective&) = default;
};

inline constexpr const char* kConclusionIntent = "conclusion";

// results == nullopt is the none-marker: nothing could be extracted.
struct IntentResult {
  std::string intent;
  std::optional<Json> results;

  bool is_none() const { return !results.has_value(); }
  friend bool operator==(const IntentResult&, const IntentResult&) = default;
};

Json to_json(const Intent& intent);
Json to_json(const EntityGroup& group);
Json to_json(const ConclusionDirective& directive);
Json to_json(const IntentResult& result);

}  // namespace ontoprompt
