#include "ontoprompt/meta_ontology.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <utility>

namespace ontoprompt {
namespace {

constexpr std::array<std::pair<Purpose, std::string_view>, 6> kPurposeNames{{
    {Purpose::kIntentDetection, "intent-detection"},
    {Purpose::kConclusionDetection, "conclusion-detection"},
    {Purpose::kEntityExtraction, "entity-extraction"},
    {Purpose::kInformationExtraction, "information-extraction"},
    {Purpose::kConclusionDerivation, "conclusion-derivation"},
    {Purpose::kResultFormatting, "result-formatting"},
}};

constexpr std::array<std::pair<FieldKind, std::string_view>, 6> kFieldKindNames{{
    {FieldKind::kConstant, "constant"},
    {FieldKind::kBinding, "binding"},
    {FieldKind::kBooleanFlag, "boolean-flag"},
    {FieldKind::kAllowedValuesList, "allowed-values-list"},
    {FieldKind::kIntegerLimit, "integer-limit"},
    {FieldKind::kNestedStructure, "nested-structure"},
}};

constexpr std::array<std::pair<ValueKind, std::string_view>, 8> kValueKindNames{{
    {ValueKind::kString, "string"},
    {ValueKind::kFloatInUnitInterval, "float-in-unit-interval"},
    {ValueKind::kEnum, "enum"},
    {ValueKind::kNullableString, "nullable-string"},
    {ValueKind::kList, "list"},
    {ValueKind::kObject, "object"},
    {ValueKind::kBoolean, "boolean"},
    {ValueKind::kAny, "any"},
}};

template <typename E, std::size_t N>
std::string name_of(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
  for (const auto& [value, name] : table) {
    if (value == e) return std::string(name);
  }
  return "?";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N>& table,
                          std::string_view s) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

constexpr std::string_view kRepresentationKey = "output representation template";

// --- decoding -------------------------------------------------------------

const Json& member(const Json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key, "missing member");
  return *it;
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a string");
  return j.get<std::string>();
}

std::string string_member(const Json& obj, const char* key, const std::string& path) {
  return as_string(member(obj, key, path), path + "." + key);
}

std::string optional_string(const Json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) return {};
  return as_string(*it, path + "." + key);
}

bool optional_bool(const Json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) return false;
  if (!it->is_boolean()) throw SchemaError(path + "." + key, "expected a boolean");
  return it->get<bool>();
}

std::vector<std::string> string_list(const Json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_string(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<std::string> optional_string_list(const Json& obj, const char* key,
                                              const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) return {};
  return string_list(*it, path + "." + key);
}

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
}

PromptField field_from_json(const Json& j, const std::string& path) {
  require_object(j, path);
  PromptField f;
  f.key = string_member(j, "key", path);
  const std::string kind = string_member(j, "kind", path);
  auto k = field_kind_from_string(kind);
  if (!k) throw SchemaError(path + ".kind", "unknown field kind '" + kind + "'");
  f.kind = *k;
  if (auto it = j.find("value"); it != j.end()) f.value = *it;
  if (auto it = j.find("default"); it != j.end()) f.default_value = *it;
  f.allowed = optional_string_list(j, "allowed", path);
  if (auto it = j.find("bound"); it != j.end()) {
    if (!it->is_number_integer()) throw SchemaError(path + ".bound", "expected an integer");
    f.bound = it->get<std::int64_t>();
  }
  f.required = optional_bool(j, "required", path);
  return f;
}

OutputTemplate output_from_json(const Json& j, const std::string& path) {
  require_object(j, path);
  OutputTemplate out;
  out.format = string_member(j, "format", path);
  out.root = optional_string(j, "root", path);
  out.repeated = optional_bool(j, "repeated", path);
  const Json& schema = member(j, "schema", path);
  require_object(schema, path + ".schema");
  for (const auto& [name, spec] : schema.items()) {
    const std::string fpath = path + ".schema." + name;
    SchemaField f;
    f.name = name;
    if (spec.is_string()) {
      // shorthand: "name": "kind"
      auto k = value_kind_from_string(spec.get<std::string>());
      if (!k) throw SchemaError(fpath, "unknown value kind");
      f.kind = *k;
    } else {
      require_object(spec, fpath);
      const std::string kind = string_member(spec, "kind", fpath);
      auto k = value_kind_from_string(kind);
      if (!k) throw SchemaError(fpath + ".kind", "unknown value kind '" + kind + "'");
      f.kind = *k;
      f.values = optional_string_list(spec, "values", fpath);
      f.describe = optional_string(spec, "describe", fpath);
    }
    out.schema.push_back(std::move(f));
  }
  out.required = optional_string_list(j, "required", path);
  return out;
}

IntentCatalog catalog_from_json(const Json& j, const std::string& path) {
  require_object(j, path);
  IntentCatalog c;
  c.intents = string_list(member(j, "intents", path), path + ".intents");
  c.intent_types = string_list(member(j, "intent_types", path), path + ".intent_types");
  return c;
}

MetaOntology decode(const Json& doc) {
  require_object(doc, "$");
  MetaOntology onto;
  onto.version = string_member(doc, "version", "$");
  onto.intent_catalog = catalog_from_json(member(doc, "intent_catalog", "$"), "intent_catalog");
  const Json& templates = member(doc, "templates", "$");
  if (!templates.is_array()) throw SchemaError("templates", "expected an array");
  for (std::size_t i = 0; i < templates.size(); ++i) {
    onto.templates.push_back(
        template_from_json(templates[i], "templates[" + std::to_string(i) + "]"));
  }
  return onto;
}

// --- validation -----------------------------------------------------------

void error(std::vector<Diagnostic>& out, std::string path, std::string message) {
  out.push_back({Severity::kError, std::move(path), std::move(message)});
}

void warn(std::vector<Diagnostic>& out, std::string path, std::string message) {
  out.push_back({Severity::kWarning, std::move(path), std::move(message)});
}

void validate_output(const OutputTemplate& out, const std::string& path,
                     std::vector<Diagnostic>& diags) {
  if (out.format != "structured-object") {
    error(diags, path + ".format", "unsupported format '" + out.format + "'");
  }
  if (out.schema.empty()) error(diags, path + ".schema", "schema is empty");
  std::set<std::string> names;
  for (const auto& f : out.schema) {
    if (f.name.empty()) error(diags, path + ".schema", "empty field name");
    if (!names.insert(f.name).second) {
      error(diags, path + ".schema." + f.name, "duplicate field name");
    }
    if (f.kind == ValueKind::kEnum && f.values.empty()) {
      error(diags, path + ".schema." + f.name + ".values", "enum field without values");
    }
  }
  for (std::size_t i = 0; i < out.required.size(); ++i) {
    if (!names.contains(out.required[i])) {
      error(diags, path + ".required[" + std::to_string(i) + "]",
            "'" + out.required[i] + "' is not a schema field");
    }
  }
}

void validate_field(const PromptField& f, const std::string& path,
                    std::vector<Diagnostic>& diags) {
  switch (f.kind) {
    case FieldKind::kConstant:
      if (!f.value) error(diags, path + ".value", "constant field without a value");
      break;
    case FieldKind::kBinding:
      if (!f.required && !f.default_value) {
        error(diags, path, "binding field is neither required nor defaulted");
      }
      break;
    case FieldKind::kBooleanFlag:
      if (!f.value || !f.value->is_boolean()) {
        error(diags, path + ".value", "boolean-flag field needs a boolean value");
      }
      break;
    case FieldKind::kAllowedValuesList:
      if (f.allowed.empty()) {
        error(diags, path + ".allowed", "allowed-values-list field with an empty allowed set");
      }
      if (f.value) {
        if (!f.value->is_array()) {
          error(diags, path + ".value", "selection must be a list");
        } else {
          for (const auto& v : *f.value) {
            if (!v.is_string() ||
                std::find(f.allowed.begin(), f.allowed.end(), v.get<std::string>()) ==
                    f.allowed.end()) {
              error(diags, path + ".value", "selection " + compact_dump(v) +
                                                " is outside the allowed set");
            }
          }
        }
      }
      break;
    case FieldKind::kIntegerLimit:
      if (!f.bound || *f.bound <= 0) {
        error(diags, path + ".bound", "integer-limit field needs a positive bound");
      } else if (!f.value || !f.value->is_number_integer() ||
                 f.value->get<std::int64_t>() < 1 || f.value->get<std::int64_t>() > *f.bound) {
        error(diags, path + ".value", "integer-limit value must lie in [1, bound]");
      }
      break;
    case FieldKind::kNestedStructure:
      if (!f.value || !(f.value->is_object() || f.value->is_array())) {
        error(diags, path + ".value", "nested-structure field needs an object or list");
      }
      break;
  }
}

}  // namespace

std::string to_string(Purpose p) { return name_of(kPurposeNames, p); }
std::optional<Purpose> purpose_from_string(std::string_view s) {
  return value_of(kPurposeNames, s);
}
std::string to_string(FieldKind k) { return name_of(kFieldKindNames, k); }
std::optional<FieldKind> field_kind_from_string(std::string_view s) {
  return value_of(kFieldKindNames, s);
}
std::string to_string(ValueKind k) { return name_of(kValueKindNames, k); }
std::optional<ValueKind> value_kind_from_string(std::string_view s) {
  return value_of(kValueKindNames, s);
}

const std::vector<std::string>& base_intents() {
  static const std::vector<std::string> kIntents{
      "quantity",   "place",     "way of doing", "object",          "subject",   "action",
      "location",   "direction", "scene of action", "conditions", "instrument", "collaborator",
      "relation",   "cause",     "sequence",     "origin"};
  return kIntents;
}

const std::vector<std::string>& base_intent_types() {
  static const std::vector<std::string> kTypes{"narration", "interrogation", "imperative"};
  return kTypes;
}

const SchemaField* OutputTemplate::find(std::string_view name) const {
  auto it = std::find_if(schema.begin(), schema.end(),
                         [&](const SchemaField& f) { return f.name == name; });
  return it == schema.end() ? nullptr : &*it;
}

bool OutputTemplate::is_required(std::string_view name) const {
  return std::find(required.begin(), required.end(), name) != required.end();
}

Json OutputTemplate::representation() const {
  Json record = Json::object();
  for (const auto& f : schema) {
    record[f.name] = f.describe.empty() ? to_string(f.kind) : f.describe;
  }
  Json body = repeated ? Json::array({record}) : record;
  if (root.empty()) return body;
  Json wrapped = Json::object();
  wrapped[root] = std::move(body);
  return wrapped;
}

const PromptField* PromptTemplate::find_field(std::string_view key) const {
  auto it = std::find_if(fields.begin(), fields.end(),
                         [&](const PromptField& f) { return f.key == key; });
  return it == fields.end() ? nullptr : &*it;
}

bool PromptTemplate::applies_to(std::string_view intent) const {
  return std::find(applicable_intents.begin(), applicable_intents.end(), intent) !=
         applicable_intents.end();
}

bool IntentCatalog::contains(std::string_view intent) const {
  return std::find(intents.begin(), intents.end(), intent) != intents.end();
}

bool IntentCatalog::has_type(std::string_view type) const {
  return std::find(intent_types.begin(), intent_types.end(), type) != intent_types.end();
}

const PromptTemplate* MetaOntology::find_template(std::string_view id) const {
  auto it = std::find_if(templates.begin(), templates.end(),
                         [&](const PromptTemplate& t) { return t.id == id; });
  return it == templates.end() ? nullptr : &*it;
}

PromptTemplate template_from_json(const Json& j, const std::string& path) {
  require_object(j, path);
  PromptTemplate t;
  t.id = string_member(j, "id", path);
  const std::string purpose = string_member(j, "purpose", path);
  auto p = purpose_from_string(purpose);
  if (!p) throw SchemaError(path + ".purpose", "unknown purpose '" + purpose + "'");
  t.purpose = *p;
  t.is_default = optional_bool(j, "default", path);
  t.applicable_intents = optional_string_list(j, "applicable_intents", path);
  t.notes = optional_string(j, "notes", path);
  const Json& fields = member(j, "fields", path);
  if (!fields.is_array()) throw SchemaError(path + ".fields", "expected an array");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    t.fields.push_back(field_from_json(fields[i], path + ".fields[" + std::to_string(i) + "]"));
  }
  if (auto it = j.find("output_template"); it != j.end() && !it->is_null()) {
    t.output_template = output_from_json(*it, path + ".output_template");
  }
  return t;
}

MetaOntology load_meta_ontology(std::string_view document) {
  const Json doc = parse_json(document);
  MetaOntology onto = decode(doc);
  for (const auto& d : validate_meta_ontology(onto)) {
    if (d.severity == Severity::kError) throw SchemaError(d.path, d.message);
  }
  return onto;
}

MetaOntology decode_meta_ontology(std::string_view document) { return decode(parse_json(document)); }

MetaOntology load_meta_ontology_file(const std::string& path) {
  return load_meta_ontology(read_file(path));
}

std::vector<Diagnostic> validate_meta_ontology(const MetaOntology& onto) {
  std::vector<Diagnostic> diags;
  if (onto.version.empty()) warn(diags, "version", "empty version string");

  for (const auto& intent : base_intents()) {
    if (!onto.intent_catalog.contains(intent)) {
      error(diags, "intent_catalog.intents", "missing base intent '" + intent + "'");
    }
  }
  for (const auto& type : base_intent_types()) {
    if (!onto.intent_catalog.has_type(type)) {
      error(diags, "intent_catalog.intent_types", "missing intent type '" + type + "'");
    }
  }

  std::set<std::string> ids;
  std::array<int, kPurposeNames.size()> defaults{};
  for (std::size_t i = 0; i < onto.templates.size(); ++i) {
    const PromptTemplate& t = onto.templates[i];
    const std::string path = "templates[" + std::to_string(i) + "]";
    if (t.id.empty()) {
      error(diags, path + ".id", "empty template id");
    } else if (!ids.insert(t.id).second) {
      error(diags, path + ".id", "duplicate template id '" + t.id + "'");
    }
    if (t.is_default) {
      if (++defaults[static_cast<std::size_t>(t.purpose)] > 1) {
        error(diags, path + ".default", "second default template for " + to_string(t.purpose));
      }
    }
    for (std::size_t k = 0; k < t.applicable_intents.size(); ++k) {
      if (!onto.intent_catalog.contains(t.applicable_intents[k])) {
        error(diags, path + ".applicable_intents[" + std::to_string(k) + "]",
              "intent '" + t.applicable_intents[k] + "' is not in the intent catalog");
      }
    }
    std::set<std::string> keys;
    for (std::size_t k = 0; k < t.fields.size(); ++k) {
      const PromptField& f = t.fields[k];
      const std::string fpath = path + ".fields[" + std::to_string(k) + "]";
      if (f.key.empty()) {
        error(diags, fpath + ".key", "empty field key");
      } else if (f.key == kRepresentationKey) {
        error(diags, fpath + ".key", "key is reserved for the output template");
      } else if (!keys.insert(f.key).second) {
        error(diags, fpath + ".key", "duplicate field key '" + f.key + "'");
      }
      validate_field(f, fpath, diags);
    }
    if (t.output_template) {
      validate_output(*t.output_template, path + ".output_template", diags);
    } else if (t.purpose != Purpose::kResultFormatting) {
      error(diags, path + ".output_template",
            "output template required for purpose " + to_string(t.purpose));
    }
  }

  for (const auto& [purpose, name] : kPurposeNames) {
    const int n = defaults[static_cast<std::size_t>(purpose)];
    if (purpose == Purpose::kInformationExtraction) {
      if (n == 0) warn(diags, "templates", "no default information-extraction template");
    } else if (n == 0) {
      error(diags, "templates", "no default template for " + std::string(name));
    }
  }
  return diags;
}

Json to_json(const OutputTemplate& out) {
  Json j = Json::object();
  j["format"] = out.format;
  if (!out.root.empty()) j["root"] = out.root;
  if (out.repeated) j["repeated"] = true;
  Json schema = Json::object();
  for (const auto& f : out.schema) {
    Json spec = Json::object();
    spec["kind"] = to_string(f.kind);
    if (!f.values.empty()) spec["values"] = f.values;
    if (!f.describe.empty()) spec["describe"] = f.describe;
    schema[f.name] = std::move(spec);
  }
  j["schema"] = std::move(schema);
  j["required"] = out.required;
  return j;
}

Json to_json(const PromptTemplate& t) {
  Json j = Json::object();
  j["id"] = t.id;
  j["purpose"] = to_string(t.purpose);
  if (t.is_default) j["default"] = true;
  if (!t.applicable_intents.empty()) j["applicable_intents"] = t.applicable_intents;
  if (!t.notes.empty()) j["notes"] = t.notes;
  Json fields = Json::array();
  for (const auto& f : t.fields) {
    Json fj = Json::object();
    fj["key"] = f.key;
    fj["kind"] = to_string(f.kind);
    if (f.value) fj["value"] = *f.value;
    if (f.default_value) fj["default"] = *f.default_value;
    if (!f.allowed.empty()) fj["allowed"] = f.allowed;
    if (f.bound) fj["bound"] = *f.bound;
    if (f.required) fj["required"] = true;
    fields.push_back(std::move(fj));
  }
  j["fields"] = std::move(fields);
  if (t.output_template) j["output_template"] = to_json(*t.output_template);
  return j;
}

Json to_json(const MetaOntology& onto) {
  Json j = Json::object();
  j["version"] = onto.version;
  Json catalog = Json::object();
  catalog["intents"] = onto.intent_catalog.intents;
  catalog["intent_types"] = onto.intent_catalog.intent_types;
  j["intent_catalog"] = std::move(catalog);
  Json templates = Json::array();
  for (const auto& t : onto.templates) templates.push_back(to_json(t));
  j["templates"] = std::move(templates);
  return j;
}

std::string serialize(const MetaOntology& onto) { return canonical_dump(to_json(onto)) + "\n"; }

const PromptTemplate& lookup_template(const MetaOntology& onto, Purpose purpose,
                                      std::optional<std::string_view> intent) {
  if (intent) {
    for (const auto& t : onto.templates) {
      if (t.purpose == purpose && t.applies_to(*intent)) return t;
    }
  }
  const PromptTemplate* generic = nullptr;
  for (const auto& t : onto.templates) {
    if (t.purpose != purpose) continue;
    if (t.is_default) return t;
    if (!generic && t.applicable_intents.empty()) generic = &t;
  }
  if (generic) return *generic;
  throw NotFound("no template for purpose " + to_string(purpose));
}

}  // namespace ontoprompt
