#include "ontoprompt/context_store.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "ontoprompt/text.hpp"

namespace ontoprompt {
namespace {

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a string");
  return j.get<std::string>();
}

std::string optional_string(const Json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  return as_string(*it, path + "." + key);
}

ContextEntry entry_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  ContextEntry e;
  auto id = j.find("id");
  if (id == j.end()) throw SchemaError(path + ".id", "missing member");
  e.id = as_string(*id, path + ".id");
  auto text = j.find("text");
  if (text == j.end()) throw SchemaError(path + ".text", "missing member");
  e.text = as_string(*text, path + ".text");
  e.language = optional_string(j, "language", path);
  e.source = optional_string(j, "source", path);
  if (auto it = j.find("sentiment"); it != j.end() && !it->is_null()) {
    const std::string s = as_string(*it, path + ".sentiment");
    e.sentiment = sentiment_from_string(s);
    if (!e.sentiment) throw SchemaError(path + ".sentiment", "unknown sentiment '" + s + "'");
  }
  if (auto it = j.find("bindings"); it != j.end()) {
    if (!it->is_array()) throw SchemaError(path + ".bindings", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const Json& b = (*it)[i];
      const std::string bpath = path + ".bindings[" + std::to_string(i) + "]";
      if (!b.is_object()) throw SchemaError(bpath, "expected an object");
      EntityBinding binding;
      auto lemmas = b.find("lemmas");
      if (lemmas == b.end() || !lemmas->is_array()) {
        throw SchemaError(bpath + ".lemmas", "expected an array of lemmas");
      }
      for (std::size_t k = 0; k < lemmas->size(); ++k) {
        binding.lemmas.push_back(
            as_string((*lemmas)[k], bpath + ".lemmas[" + std::to_string(k) + "]"));
      }
      binding.role = optional_string(b, "role", bpath);
      e.bindings.push_back(std::move(binding));
    }
  }
  return e;
}

struct Query {
  struct Group {
    std::string main;
    std::vector<std::string> words;
  };
  std::vector<Group> groups;
  std::vector<std::vector<std::string>> intent_terms;
  std::unordered_set<std::string> all_terms;
};

Query fold_query(const std::vector<EntityGroup>& entities, const std::vector<Intent>& intents) {
  Query q;
  for (const auto& g : entities) {
    Query::Group fg;
    fg.main = text::fold_case(g.main_word);
    q.all_terms.insert(fg.main);
    for (const auto& w : g.words) {
      fg.words.push_back(text::fold_case(w));
      q.all_terms.insert(fg.words.back());
    }
    q.groups.push_back(std::move(fg));
  }
  for (const auto& in : intents) {
    std::vector<std::string> terms;
    for (const auto* part : {&in.subject, &in.object}) {
      if (*part && !(*part)->empty()) {
        terms.push_back(text::fold_case(**part));
        q.all_terms.insert(terms.back());
      }
    }
    q.intent_terms.push_back(std::move(terms));
  }
  return q;
}

}  // namespace

std::string to_string(Sentiment s) {
  switch (s) {
    case Sentiment::kPositive:
      return "positive";
    case Sentiment::kNegative:
      return "negative";
    case Sentiment::kNeutral:
      return "neutral";
  }
  return "neutral";
}

std::optional<Sentiment> sentiment_from_string(std::string_view s) {
  if (s == "positive") return Sentiment::kPositive;
  if (s == "negative") return Sentiment::kNegative;
  if (s == "neutral") return Sentiment::kNeutral;
  return std::nullopt;
}

ContextStore::ContextStore(std::vector<ContextEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    std::set<std::string> seen;
    for (const auto& b : entries_[i].bindings) {
      for (const auto& lemma : b.lemmas) {
        std::string folded = text::fold_case(lemma);
        if (seen.insert(folded).second) index_[std::move(folded)].push_back(i);
      }
    }
  }
}

const ContextEntry* ContextStore::find(std::string_view id) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const ContextEntry& e) { return e.id == id; });
  return it == entries_.end() ? nullptr : &*it;
}

const std::vector<std::size_t>* ContextStore::postings(const std::string& folded_lemma) const {
  auto it = index_.find(folded_lemma);
  return it == index_.end() ? nullptr : &it->second;
}

std::vector<Diagnostic> validate_contexts(const std::vector<ContextEntry>& entries) {
  std::vector<Diagnostic> diags;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string path = "contexts[" + std::to_string(i) + "]";
    if (e.id.empty()) diags.push_back({Severity::kError, path + ".id", "empty context id"});
    else if (!ids.insert(e.id).second) {
      diags.push_back({Severity::kError, path + ".id", "duplicate context id '" + e.id + "'"});
    }
    if (e.text.empty()) diags.push_back({Severity::kError, path + ".text", "empty context text"});
    if (e.bindings.empty()) {
      diags.push_back({Severity::kWarning, path + ".bindings", "context is unreachable"});
    }
    for (std::size_t b = 0; b < e.bindings.size(); ++b) {
      const std::string bpath = path + ".bindings[" + std::to_string(b) + "]";
      if (e.bindings[b].lemmas.empty()) {
        diags.push_back({Severity::kError, bpath + ".lemmas", "binding without lemmas"});
      }
      for (std::size_t k = 0; k < e.bindings[b].lemmas.size(); ++k) {
        if (e.bindings[b].lemmas[k].empty()) {
          diags.push_back({Severity::kError, bpath + ".lemmas[" + std::to_string(k) + "]",
                           "empty lemma"});
        }
      }
    }
  }
  return diags;
}

std::vector<ContextEntry> decode_contexts(std::string_view document) {
  const Json doc = parse_json(document);
  if (!doc.is_object()) throw SchemaError("$", "expected an object");
  auto list = doc.find("contexts");
  if (list == doc.end() || !list->is_array()) {
    throw SchemaError("contexts", "expected an array of contexts");
  }
  std::vector<ContextEntry> entries;
  for (std::size_t i = 0; i < list->size(); ++i) {
    entries.push_back(entry_from_json((*list)[i], "contexts[" + std::to_string(i) + "]"));
  }
  return entries;
}

ContextStore load_contexts(std::string_view document) {
  std::vector<ContextEntry> entries = decode_contexts(document);
  for (const auto& d : validate_contexts(entries)) {
    if (d.severity == Severity::kError) throw SchemaError(d.path, d.message);
  }
  return ContextStore(std::move(entries));
}

ContextStore load_contexts_file(const std::string& path) { return load_contexts(read_file(path)); }

Json to_json(const ContextEntry& e) {
  Json j = Json::object();
  j["id"] = e.id;
  j["text"] = e.text;
  j["language"] = e.language;
  Json bindings = Json::array();
  for (const auto& b : e.bindings) {
    Json bj = Json::object();
    bj["lemmas"] = b.lemmas;
    bj["role"] = b.role;
    bindings.push_back(std::move(bj));
  }
  j["bindings"] = std::move(bindings);
  if (e.sentiment) j["sentiment"] = to_string(*e.sentiment);
  if (!e.source.empty()) j["source"] = e.source;
  return j;
}

Json to_json(const ContextStore& store) {
  Json list = Json::array();
  for (const auto& e : store.entries()) list.push_back(to_json(e));
  Json j = Json::object();
  j["contexts"] = std::move(list);
  return j;
}

Json to_json(const ContextSelection& selection) {
  Json out = Json::array();
  for (const auto& s : selection) {
    Json j = Json::object();
    j["id"] = s.id;
    j["score"] = s.score;
    j["matched_lemmas"] = s.matched_lemmas;
    out.push_back(std::move(j));
  }
  return out;
}

ContextSelection select_contexts(const ContextStore& store, const std::vector<EntityGroup>& entities,
                                 const std::vector<Intent>& intents, std::size_t k,
                                 std::optional<Sentiment> sentiment_filter) {
  if (k == 0) throw PreconditionError("top-k must be at least 1");
  const Query query = fold_query(entities, intents);

  std::set<std::size_t> candidates;
  for (const auto& term : query.all_terms) {
    if (const auto* hits = store.postings(term)) candidates.insert(hits->begin(), hits->end());
  }

  ContextSelection ranked;
  for (std::size_t idx : candidates) {
    const ContextEntry& entry = store.entries()[idx];
    if (sentiment_filter && entry.sentiment != sentiment_filter) continue;

    std::unordered_set<std::string> bound;
    std::vector<std::string> matched;
    for (const auto& b : entry.bindings) {
      for (const auto& lemma : b.lemmas) {
        std::string folded = text::fold_case(lemma);
        if (query.all_terms.contains(folded) &&
            std::find(matched.begin(), matched.end(), lemma) == matched.end()) {
          matched.push_back(lemma);
        }
        bound.insert(std::move(folded));
      }
    }

    int score = 0;
    for (const auto& g : query.groups) {
      if (bound.contains(g.main)) {
        score += 2;
      } else if (std::any_of(g.words.begin(), g.words.end(),
                             [&](const std::string& w) { return bound.contains(w); })) {
        score += 1;
      }
    }
    for (const auto& terms : query.intent_terms) {
      if (std::any_of(terms.begin(), terms.end(),
                      [&](const std::string& t) { return bound.contains(t); })) {
        score += 1;
      }
    }
    if (score > 0) ranked.push_back({entry.id, score, std::move(matched)});
  }

  std::sort(ranked.begin(), ranked.end(), [](const SelectedContext& a, const SelectedContext& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace ontoprompt
