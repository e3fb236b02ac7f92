#include "ontoprompt/prompt_engine.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "ontoprompt/errors.hpp"

namespace ontoprompt {
namespace {

bool in_allowed(const PromptField& f, const Json& v) {
  return v.is_string() &&
         std::find(f.allowed.begin(), f.allowed.end(), v.get<std::string>()) != f.allowed.end();
}

void check_binding(const PromptField& f, const Json& v) {
  if (f.allowed.empty()) return;
  if (v.is_array()) {
    for (const auto& item : v) {
      if (!in_allowed(f, item)) {
        throw IllegalValue(f.key, compact_dump(item), "not in the allowed set");
      }
    }
  } else if (!in_allowed(f, v)) {
    throw IllegalValue(f.key, compact_dump(v), "not in the allowed set");
  }
}

std::string join_path(const std::string& base, const std::string& field) {
  return base.empty() ? field : base + "." + field;
}

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void check_value(const SchemaField& f, const Json& v, const std::string& path,
                 std::vector<Violation>& out) {
  auto fail = [&](const std::string& message) { out.push_back({path, message}); };
  switch (f.kind) {
    case ValueKind::kString:
      if (!v.is_string()) fail("expected a string");
      break;
    case ValueKind::kNullableString:
      if (!v.is_string() && !v.is_null()) fail("expected a string or null");
      break;
    case ValueKind::kFloatInUnitInterval:
      if (!v.is_number()) {
        fail("expected a number");
      } else {
        const double d = v.get<double>();
        if (!(d >= 0.0 && d <= 1.0)) fail("value " + compact_dump(v) + " outside [0, 1]");
      }
      break;
    case ValueKind::kEnum:
      if (!v.is_string() ||
          std::find(f.values.begin(), f.values.end(), v.get<std::string>()) == f.values.end()) {
        fail("value " + compact_dump(v) + " is not one of the enumerated values");
      }
      break;
    case ValueKind::kList:
      if (!v.is_array()) fail("expected a list");
      break;
    case ValueKind::kObject:
      if (!v.is_object()) fail("expected an object");
      break;
    case ValueKind::kBoolean:
      if (!v.is_boolean()) fail("expected a boolean");
      break;
    case ValueKind::kAny:
      break;
  }
}

void check_record(const Json& record, const OutputTemplate& out, const std::string& path,
                  std::vector<Violation>& violations) {
  if (!record.is_object()) {
    violations.push_back({path.empty() ? "$" : path, "expected an object"});
    return;
  }
  for (const auto& f : out.schema) {
    const std::string fpath = join_path(path, f.name);
    auto it = record.find(f.name);
    if (it == record.end()) {
      if (out.is_required(f.name)) violations.push_back({fpath, "missing required field"});
      continue;
    }
    check_value(f, *it, fpath, violations);
  }
}

bool is_none_value(const Json& v) {
  return v.is_null() || (v.is_string() && is_none_token(v.get<std::string>()));
}

// End of the balanced region opened at raw[start], or npos.
std::size_t balanced_end(std::string_view raw, std::size_t start) {
  std::string stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_string = true;
        break;
      case '{':
        stack.push_back('}');
        break;
      case '[':
        stack.push_back(']');
        break;
      case '}':
      case ']':
        if (stack.empty() || stack.back() != c) return std::string_view::npos;
        stack.pop_back();
        if (stack.empty()) return i;
        break;
      default:
        break;
    }
  }
  return std::string_view::npos;
}

}  // namespace

const Json* StructuredPrompt::find(std::string_view key) const {
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const PromptEntry& e) { return e.key == key; });
  return it == entries.end() ? nullptr : &it->value;
}

StructuredPrompt instantiate(const PromptTemplate& tmpl, const Bindings& bindings) {
  StructuredPrompt prompt;
  prompt.template_id = tmpl.id;
  std::set<std::string, std::less<>> bindable;

  for (const auto& f : tmpl.fields) {
    switch (f.kind) {
      case FieldKind::kBinding: {
        bindable.insert(f.key);
        auto it = bindings.find(f.key);
        if (it != bindings.end() && !(f.required && it->second.is_null())) {
          check_binding(f, it->second);
          prompt.entries.push_back({f.key, it->second});
        } else if (f.default_value) {
          prompt.entries.push_back({f.key, *f.default_value});
        } else if (f.required) {
          throw MissingBinding(f.key);
        }
        break;
      }
      case FieldKind::kAllowedValuesList: {
        Json selection = f.value ? *f.value : Json(f.allowed);
        for (const auto& v : selection) {
          if (!in_allowed(f, v)) {
            throw IllegalValue(f.key, compact_dump(v), "not in the allowed set");
          }
        }
        prompt.entries.push_back({f.key, std::move(selection)});
        break;
      }
      case FieldKind::kIntegerLimit: {
        const Json v = f.value.value_or(Json());
        if (!v.is_number_integer() || !f.bound || v.get<std::int64_t>() > *f.bound ||
            v.get<std::int64_t>() < 1) {
          throw IllegalValue(f.key, compact_dump(v), "outside the integer limit");
        }
        prompt.entries.push_back({f.key, v});
        break;
      }
      case FieldKind::kConstant:
      case FieldKind::kBooleanFlag:
      case FieldKind::kNestedStructure:
        prompt.entries.push_back({f.key, f.value.value_or(Json())});
        break;
    }
  }

  for (const auto& [key, value] : bindings) {
    if (!bindable.contains(key)) throw IllegalValue(key, compact_dump(value), "not a binding field");
  }

  if (tmpl.output_template) {
    prompt.entries.push_back(
        {std::string(kOutputRepresentationKey), tmpl.output_template->representation()});
  }
  if (const Json* lang = prompt.find("language"); lang && lang->is_string()) {
    prompt.language = lang->get<std::string>();
  }
  return prompt;
}

std::string render(const StructuredPrompt& prompt) {
  Json doc = Json::object();
  for (const auto& e : prompt.entries) doc[e.key] = e.value;
  return canonical_dump(doc);
}

StructuredPrompt parse_prompt(std::string_view text, std::string template_id) {
  const Json doc = parse_json(text);
  if (!doc.is_object()) throw ParseError("structured prompt must be a JSON object");
  StructuredPrompt prompt;
  prompt.template_id = std::move(template_id);
  for (const auto& [key, value] : doc.items()) prompt.entries.push_back({key, value});
  if (const Json* lang = prompt.find("language"); lang && lang->is_string()) {
    prompt.language = lang->get<std::string>();
  }
  return prompt;
}

bool is_none_token(std::string_view raw) {
  std::string_view s = trim(raw);
  if (s.starts_with("```")) {
    s.remove_prefix(3);
    while (!s.empty() && std::isalpha(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    if (s.ends_with("```")) s.remove_suffix(3);
    s = trim(s);
  }
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = trim(s.substr(1, s.size() - 2));
  }
  if (s.ends_with('.')) s.remove_suffix(1);
  if (s.size() != 4) return false;
  std::string lowered;
  for (char c : s) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lowered == "none";
}

Json extract_structured_value(std::string_view raw) {
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '{' && raw[i] != '[') continue;
    const std::size_t end = balanced_end(raw, i);
    if (end == std::string_view::npos) continue;
    try {
      return Json::parse(raw.substr(i, end - i + 1));
    } catch (const Json::exception&) {
      continue;
    }
  }
  throw NoStructuredPayload("no structured object or array in the completion");
}

ParsedResponse parse_response(std::string_view raw, const OutputTemplate& out) {
  ParsedResponse parsed;
  if (is_none_token(raw)) {
    parsed.none = true;
    return parsed;
  }
  Json value = extract_structured_value(raw);
  if (!out.root.empty() && value.is_object()) {
    if (auto it = value.find(out.root); it != value.end()) {
      Json inner = *it;
      value = std::move(inner);
    }
  }
  if (is_none_value(value)) {
    parsed.none = true;
    return parsed;
  }

  const std::string& base = out.root;
  if (out.repeated) {
    if (!value.is_array()) {
      parsed.violations.push_back({base.empty() ? "$" : base, "expected a list of records"});
    } else {
      for (std::size_t i = 0; i < value.size(); ++i) {
        check_record(value[i], out, base + "[" + std::to_string(i) + "]", parsed.violations);
      }
    }
  } else {
    check_record(value, out, base, parsed.violations);
  }
  parsed.payload = std::move(value);
  return parsed;
}

}  // namespace ontoprompt
