// ontoprompt: command-line front end (serve, chat, validate, eval, tune).
#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "ontoprompt/context_store.hpp"
#include "ontoprompt/errors.hpp"
#include "ontoprompt/evaluation.hpp"
#include "ontoprompt/gateway.hpp"
#include "ontoprompt/meta_learning.hpp"
#include "ontoprompt/meta_ontology.hpp"

namespace op = ontoprompt;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct EngineFlags {
  std::string config;
  std::string meta;
  std::string contexts;
  std::string script;
  std::string session_log;
};

void add_engine_flags(CLI::App* cmd, EngineFlags& f) {
  cmd->add_option("--config", f.config, "Engine config file");
  cmd->add_option("--meta", f.meta, "Meta-ontology file (overrides the config)");
  cmd->add_option("--contexts", f.contexts, "Context store file (overrides the config)");
  cmd->add_option("--script", f.script, "Scripted backend file (overrides the config)");
  cmd->add_option("--session-log", f.session_log, "Tuning session log (overrides the config)");
}

op::EngineConfig engine_config(const EngineFlags& f) {
  op::EngineConfig c;
  if (!f.config.empty()) c = op::load_engine_config_file(f.config);
  op::apply_env_overrides(c);
  if (!f.meta.empty()) c.meta_ontology = f.meta;
  if (!f.contexts.empty()) c.contexts = f.contexts;
  if (!f.script.empty()) {
    c.script = f.script;
    c.backend.kind = "scripted";
  }
  if (!f.session_log.empty()) c.session_log = f.session_log;
  op::validate_engine_config(c);
  return c;
}

void print_diagnostics(const std::vector<op::Diagnostic>& diags, const std::string& file) {
  for (const auto& d : diags) {
    std::cout << file << ": " << op::to_string(d.severity) << ": " << d.path << ": " << d.message
              << "\n";
  }
}

int cmd_validate(const std::string& meta, const std::string& contexts) {
  std::size_t errors = 0;
  auto check = [&](const std::string& file, auto decode_and_validate) {
    try {
      const auto diags = decode_and_validate(op::read_file(file));
      print_diagnostics(diags, file);
      errors += op::count_errors(diags);
    } catch (const op::SchemaError& e) {
      print_diagnostics({{op::Severity::kError, e.path(), e.what()}}, file);
      ++errors;
    } catch (const op::Error& e) {
      std::cout << file << ": error: " << e.what() << "\n";
      ++errors;
    }
  };
  check(meta, [](const std::string& doc) {
    return op::validate_meta_ontology(op::decode_meta_ontology(doc));
  });
  if (!contexts.empty()) {
    check(contexts,
          [](const std::string& doc) { return op::validate_contexts(op::decode_contexts(doc)); });
  }
  std::cout << errors << (errors == 1 ? " error" : " errors") << "\n";
  return errors == 0 ? kOk : kFailure;
}

int cmd_eval(const std::string& judgments, bool as_json) {
  const auto list = op::load_judgments_file(judgments);
  const op::MetricsReport report = op::compute_metrics(op::tally(list));
  if (as_json) {
    std::cout << op::canonical_dump(op::to_json(report)) << "\n";
    return kOk;
  }
  const auto& c = report.counts;
  std::cout << "tp " << c.tp << "  tn " << c.tn << "  fp " << c.fp << "  fn " << c.fn << "\n";
  for (const op::Metric* m : report.all()) {
    std::cout << m->name << std::string(12 - m->name.size(), ' ') << m->fixed4() << "\n";
  }
  return kOk;
}

int chat_once(const op::Engine& engine, const std::string& text,
              const std::optional<std::string>& language, bool trace, bool pretty) {
  try {
    const op::DialogueOutcome out = engine.chat(text, language);
    op::Json reply = op::Json::object();
    reply["answer"] = out.answer;
    if (trace) reply["trace"] = out.trace.to_json();
    std::cout << (pretty ? op::canonical_dump(reply) : op::compact_dump(reply)) << std::endl;
    return kOk;
  } catch (const op::DialogueFailure& e) {
    op::Json body = op::error_body(e.code(), e.detail(), e.process());
    if (trace) body["trace"] = e.trace().to_json();
    std::cerr << op::compact_dump(body) << std::endl;
    return kFailure;
  }
}

int cmd_chat(const EngineFlags& flags, const std::string& text,
             const std::optional<std::string>& language, bool no_trace, bool pretty) {
  const op::Engine engine(engine_config(flags));
  if (!text.empty()) return chat_once(engine, text, language, !no_trace, pretty);
  int status = kOk;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    if (chat_once(engine, line, language, !no_trace, pretty) != kOk) status = kFailure;
  }
  return status;
}

int cmd_serve(const EngineFlags& flags, const std::optional<std::string>& host,
              const std::optional<int>& port) {
  op::EngineConfig config = engine_config(flags);
  if (host) config.host = *host;
  if (port) config.port = *port;

  // Handle SIGINT/SIGTERM synchronously on this thread; the server threads
  // inherit the blocked mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  op::Engine engine(config);
  op::Gateway gateway(engine);
  const int bound = gateway.bind(config.host, config.port);
  std::cout << "listening on http://" << config.host << ":" << bound << std::endl;
  std::thread server([&] { gateway.listen(); });
  int sig = 0;
  sigwait(&signals, &sig);
  gateway.stop();
  server.join();
  return kOk;
}

op::PromptDraft read_draft(const std::string& prompt, const std::string& prompt_file,
                           const std::string& template_id) {
  const std::string text = prompt_file.empty() ? prompt : op::read_file(prompt_file);
  if (text.empty()) throw op::PreconditionError("no prompt given (--prompt or --prompt-file)");
  try {
    op::StructuredPrompt sp = op::parse_prompt(text, template_id);
    return sp;
  } catch (const op::ParseError&) {
    return text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ontology-driven prompt orchestration engine"};
  app.require_subcommand(1);

  EngineFlags engine_flags;

  auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  add_engine_flags(serve, engine_flags);
  std::optional<std::string> host;
  std::optional<int> port;
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free one)")->check(CLI::Range(0, 65535));

  auto* chat = app.add_subcommand("chat", "Answer questions (one per stdin line, or --text)");
  add_engine_flags(chat, engine_flags);
  std::string text;
  std::optional<std::string> language;
  bool no_trace = false;
  bool pretty = false;
  chat->add_option("--text", text, "Single question; omit to read stdin");
  chat->add_option("--language", language, "Language of the question");
  chat->add_flag("--no-trace", no_trace, "Omit the dialogue trace");
  chat->add_flag("--pretty", pretty, "Indent the JSON output");

  auto* validate = app.add_subcommand("validate", "Check a meta-ontology and context store");
  std::string meta_file;
  std::string ctx_file;
  validate->add_option("--meta", meta_file, "Meta-ontology file")->required();
  validate->add_option("--contexts", ctx_file, "Context store file");

  auto* eval = app.add_subcommand("eval", "Metrics from a judgments file");
  std::string judgments_file;
  bool as_json = false;
  eval->add_option("--judgments", judgments_file, "Judgments NDJSON file")->required();
  eval->add_flag("--json", as_json, "Print the metrics document as JSON");

  auto* tune = app.add_subcommand("tune", "Prompt tuning sessions");
  tune->require_subcommand(1);
  std::string log_file;
  std::string session_id;
  tune->add_option("--log", log_file, "Session log (NDJSON)")->required();

  auto* t_start = tune->add_subcommand("start", "Open a session");
  std::string purpose;
  t_start->add_option("--purpose", purpose, "Template purpose")->required();

  auto* t_submit = tune->add_subcommand("submit", "Send a prompt draft");
  std::string prompt;
  std::string prompt_file;
  std::string template_id;
  std::string notes;
  double temperature = 0.0;
  t_submit->add_option("--session", session_id, "Session id")->required();
  t_submit->add_option("--prompt", prompt, "Prompt text or JSON");
  t_submit->add_option("--prompt-file", prompt_file, "File holding the prompt");
  t_submit->add_option("--template-id", template_id, "Template id of a structured draft");
  t_submit->add_option("--notes", notes, "Engineer notes");
  t_submit->add_option("--temperature", temperature, "Sampling temperature")
      ->check(CLI::NonNegativeNumber);
  add_engine_flags(t_submit, engine_flags);

  auto* t_finalize = tune->add_subcommand("finalize", "Add the tuned template to an ontology");
  std::string template_file;
  std::string out_file;
  t_finalize->add_option("--session", session_id, "Session id")->required();
  t_finalize->add_option("--template", template_file, "Template JSON file")->required();
  t_finalize->add_option("--meta", meta_file, "Meta-ontology to extend")->required();
  t_finalize->add_option("--out", out_file, "Write the new ontology here (default stdout)");

  auto* t_abandon = tune->add_subcommand("abandon", "Close a session without a template");
  t_abandon->add_option("--session", session_id, "Session id")->required();

  auto* t_show = tune->add_subcommand("show", "Print sessions");
  t_show->add_option("--session", session_id, "Only this session");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate(meta_file, ctx_file);
    if (*eval) return cmd_eval(judgments_file, as_json);
    if (*chat) return cmd_chat(engine_flags, text, language, no_trace, pretty);
    if (*serve) return cmd_serve(engine_flags, host, port);
    if (*tune) {
      op::SessionRegistry registry(std::filesystem::path{log_file});
      if (*t_start) {
        if (!op::purpose_from_string(purpose)) {
          std::cerr << "unknown purpose '" << purpose << "'\n";
          return kUsage;
        }
        std::cout << op::canonical_dump(op::to_json(registry.start_session(purpose))) << "\n";
      } else if (*t_submit) {
        op::EngineConfig config;
        if (!engine_flags.config.empty()) config = op::load_engine_config_file(engine_flags.config);
        op::apply_env_overrides(config);
        if (!engine_flags.script.empty()) {
          config.script = engine_flags.script;
          config.backend.kind = "scripted";
        }
        auto backend = op::make_backend(config);
        op::CompletionParams params = config.pipeline.completion;
        if (t_submit->count("--temperature")) params.temperature = temperature;
        const auto it = registry.submit_iteration(
            session_id, read_draft(prompt, prompt_file, template_id), *backend, notes, params);
        std::cout << it.response << "\n";
      } else if (*t_finalize) {
        const op::MetaOntology onto = op::load_meta_ontology_file(meta_file);
        const op::PromptTemplate tmpl =
            op::template_from_json(op::parse_json(op::read_file(template_file)), "template");
        const op::MetaOntology next = registry.finalize_session(session_id, tmpl, onto);
        if (out_file.empty()) {
          std::cout << op::serialize(next);
        } else {
          op::write_file(out_file, op::serialize(next));
        }
      } else if (*t_abandon) {
        registry.abandon_session(session_id);
      } else if (*t_show) {
        if (!session_id.empty()) {
          std::cout << op::canonical_dump(op::to_json(registry.get(session_id))) << "\n";
        } else {
          op::Json list = op::Json::array();
          for (const auto& s : registry.list()) list.push_back(op::to_json(s));
          std::cout << op::canonical_dump(list) << "\n";
        }
      }
      return kOk;
    }
  } catch (const op::ValidationFailed& e) {
    print_diagnostics(e.diagnostics(), "template");
    std::cerr << "error: " << e.code() << ": validation failed\n";
    return kFailure;
  } catch (const op::Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
