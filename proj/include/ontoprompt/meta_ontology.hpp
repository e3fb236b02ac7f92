#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ontoprompt/errors.hpp"
#include "ontoprompt/json_util.hpp"

namespace ontoprompt {

enum class Purpose {
  kIntentDetection,
  kConclusionDetection,
  kEntityExtraction,
  kInformationExtraction,
  kConclusionDerivation,
  kResultFormatting,
};

std::string to_string(Purpose p);
std::optional<Purpose> purpose_from_string(std::string_view s);

enum class FieldKind {
  kConstant,
  kBinding,
  kBooleanFlag,
  kAllowedValuesList,
  kIntegerLimit,
  kNestedStructure,
};

std::string to_string(FieldKind k);
std::optional<FieldKind> field_kind_from_string(std::string_view s);

/// One key of a structured prompt.
///
/// `value` is the emitted value for constant, boolean-flag, integer-limit and
/// nested-structure fields, and the selected subset for allowed-values-list
/// fields (all allowed values when absent). Binding fields take their value
/// from the caller, falling back to `default_value`.
struct PromptField {
  std::string key;
  FieldKind kind = FieldKind::kConstant;
  std::optional<Json> value;
  std::optional<Json> default_value;
  std::vector<std::string> allowed;
  std::optional<std::int64_t> bound;
  bool required = false;

  friend bool operator==(const PromptField&, const PromptField&) = default;
};

enum class ValueKind {
  kString,
  kFloatInUnitInterval,
  kEnum,
  kNullableString,
  kList,
  kObject,
  kBoolean,
  kAny,
};

std::string to_string(ValueKind k);
std::optional<ValueKind> value_kind_from_string(std::string_view s);

struct SchemaField {
  std::string name;
  ValueKind kind = ValueKind::kString;
  std::vector<std::string> values;  // enum members
  std::string describe;             // text shown to the model

  friend bool operator==(const SchemaField&, const SchemaField&) = default;
};

/// Shape the model must answer with. `root` names a wrapper key (the payload
/// may also arrive unwrapped); `repeated` means a list of records.
struct OutputTemplate {
  std::string format = "structured-object";
  std::string root;
  bool repeated = false;
  std::vector<SchemaField> schema;
  std::vector<std::string> required;

  const SchemaField* find(std::string_view name) const;
  bool is_required(std::string_view name) const;

  // The example record embedded into prompts under
  // "output representation template".
  Json representation() const;

  friend bool operator==(const OutputTemplate&, const OutputTemplate&) = default;
};

struct PromptTemplate {
  std::string id;
  Purpose purpose = Purpose::kIntentDetection;
  bool is_default = false;
  std::vector<std::string> applicable_intents;
  std::vector<PromptField> fields;
  std::optional<OutputTemplate> output_template;
  std::string notes;

  const PromptField* find_field(std::string_view key) const;
  bool applies_to(std::string_view intent) const;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

struct IntentCatalog {
  std::vector<std::string> intents;
  std::vector<std::string> intent_types;

  bool contains(std::string_view intent) const;
  bool has_type(std::string_view type) const;

  friend bool operator==(const IntentCatalog&, const IntentCatalog&) = default;
};

// The sixteen intents every catalog must offer.
const std::vector<std::string>& base_intents();
const std::vector<std::string>& base_intent_types();

struct MetaOntology {
  std::string version;
  IntentCatalog intent_catalog;
  std::vector<PromptTemplate> templates;

  const PromptTemplate* find_template(std::string_view id) const;

  friend bool operator==(const MetaOntology&, const MetaOntology&) = default;
};

using MetaOntologySnapshot = std::shared_ptr<const MetaOntology>;

/// Parses and validates a meta-ontology document. Throws ParseError for
/// malformed or empty JSON, SchemaError (with the path of the first offending
/// field) for wrongly typed members and invariant violations.
MetaOntology load_meta_ontology(std::string_view document);
MetaOntology load_meta_ontology_file(const std::string& path);

// Decoding only: wrongly typed members still throw, invariants are left to
// validate_meta_ontology.
MetaOntology decode_meta_ontology(std::string_view document);

std::vector<Diagnostic> validate_meta_ontology(const MetaOntology& onto);

Json to_json(const MetaOntology& onto);
Json to_json(const PromptTemplate& tmpl);
Json to_json(const OutputTemplate& out);
std::string serialize(const MetaOntology& onto);

PromptTemplate template_from_json(const Json& j, const std::string& path = "template");

/// Intent-specific template when one applies (first declared wins), else the
/// purpose default. Throws NotFound.
const PromptTemplate& lookup_template(const MetaOntology& onto, Purpose purpose,
                                      std::optional<std::string_view> intent = std::nullopt);

}  // namespace ontoprompt
