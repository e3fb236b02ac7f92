#include <doctest.h>

#include <fcntl.h>
#include <httplib.h>
#include <sys/wait.h>
#include <unistd.h>

#include <csignal>
#include <thread>

#include <array>
#include <cstdio>
#include <fstream>

#include "ontoprompt/evaluation.hpp"
#include "ontoprompt/meta_ontology.hpp"
#include "support.hpp"

using namespace ontoprompt;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

// Runs the CLI with `args` (already quoted), feeding `input` on stdin.
Run cli(const std::string& args, const std::string& input = {}) {
  testing::TempDir dir;
  const std::string in_file = dir.file("stdin");
  const std::string err_file = dir.file("stderr");
  std::ofstream(in_file) << input;
  const std::string cmd = quote(ONTO_CLI_PATH) + " " + args + " <" + quote(in_file) + " 2>" + quote(err_file);
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream err(err_file);
  r.err.assign(std::istreambuf_iterator<char>(err), {});
  return r;
}

std::string fx(const std::string& name) { return quote(testing::fixture(name)); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2") {
    CHECK(cli("").status == 2);
    CHECK(cli("--frobnicate").status == 2);
    CHECK(cli("validate").status == 2);
    CHECK(cli("eval --judgments").status == 2);
    CHECK(cli("serve --port 70000").status == 2);
    const Run help = cli("--help");
    CHECK(help.status == 0);
    CHECK(help.out.find("validate") != std::string::npos);
  }

  TEST_CASE("validate") {
    Run r = cli("validate --meta " + fx("meta.json") + " --contexts " + fx("ctx.json"));
    CHECK(r.status == 0);
    CHECK(r.out.find("0 errors") != std::string::npos);
    r = cli("validate --meta " + fx("meta.json") + " --contexts " + fx("toy_ctx.json"));
    CHECK(r.status == 0);

    testing::TempDir dir;
    Json bad = to_json(load_meta_ontology_file(testing::fixture("meta.json")));
    bad["templates"][1]["id"] = bad["templates"][0]["id"];
    bad["templates"][2]["fields"] = Json::array();
    std::ofstream(dir.file("bad.json")) << bad.dump();
    r = cli("validate --meta " + quote(dir.file("bad.json")));
    CHECK(r.status == 1);
    CHECK(r.out.find("templates[1].id") != std::string::npos);
    CHECK(r.out.find("1 error\n") != std::string::npos);
    CHECK(r.out.find("0 errors") == std::string::npos);

    std::ofstream(dir.file("broken.json")) << "{";
    r = cli("validate --meta " + quote(dir.file("broken.json")));
    CHECK(r.status == 1);
    CHECK(r.out.find("error") != std::string::npos);
  }

  TEST_CASE("eval") {
    Run r = cli("eval --judgments " + fx("reference_judgments.ndjson"));
    CHECK(r.status == 0);
    CHECK(r.out.find("tp 17  tn 7  fp 9  fn 1") != std::string::npos);
    for (const char* line : {"accuracy    0.7059", "precision   0.6538", "recall      0.9444", "f1          0.7727",
                             "precision*  0.7273", "recall*     0.9600", "f1*         0.8276"}) {
      CHECK(r.out.find(line) != std::string::npos);
    }
    r = cli("eval --json --judgments " + fx("reference_judgments.ndjson"));
    CHECK(r.status == 0);
    CHECK(parse_json(r.out) == to_json(compute_metrics({17, 7, 9, 1})));
    r = cli("eval --judgments /nonexistent.ndjson");
    CHECK(r.status == 1);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("chat") {
    Run r = cli("chat --no-trace --config " + fx("config.json") + " --text " + quote("На що повинна спиратися ФРМ?"));
    CHECK(r.status == 0);
    const Json reply = parse_json(r.out);
    CHECK(reply["answer"]["status"] == "answered");
    CHECK_FALSE(reply.contains("trace"));

    r = cli("chat --config " + fx("config.json"), "На що повинна спиратися ФРМ?\n\nФРМ\n");
    CHECK(r.status == 0);
    std::size_t lines = 0;
    for (char c : r.out) lines += c == '\n';
    CHECK(lines == 2);

    r = cli("chat --config " + fx("config.json") + " --text ' '");
    CHECK(r.status == 1);
    CHECK(parse_json(r.err)["error"]["code"] == "EmptyInput");

    r = cli("chat --config " + fx("config.json") + " --contexts /nonexistent.json --text x");
    CHECK(r.status == 1);
    CHECK(r.err.find("/nonexistent.json") != std::string::npos);
  }

  TEST_CASE("tune") {
    testing::TempDir dir;
    const std::string log = quote(dir.file("sessions.ndjson"));
    Run r = cli("tune --log " + log + " start --purpose intent-detection");
    REQUIRE(r.status == 0);
    CHECK(parse_json(r.out)["id"] == "s1");
    CHECK(cli("tune --log " + log + " start --purpose poetry").status == 2);

    r = cli("tune --log " + log + " submit --session s1 --script " + fx("golden_script.json") +
            " --prompt " + quote("{\"text\": \"x\", \"intents\": \"pick\"}") + " --template-id intents-v1 --notes first");
    CHECK(r.status == 0);
    CHECK(r.out.find("\"probability\": 0.8") != std::string::npos);

    const Json tmpl = [] {
      Json t = to_json(*load_meta_ontology_file(testing::fixture("meta.json")).find_template("intents-v1"));
      t["id"] = "intents-v2";
      t["default"] = false;
      return t;
    }();
    std::ofstream(dir.file("tmpl.json")) << tmpl.dump();
    const std::string out = dir.file("next.json");
    r = cli("tune --log " + log + " finalize --session s1 --template " + quote(dir.file("tmpl.json")) + " --meta " +
            fx("meta.json") + " --out " + quote(out));
    CHECK(r.status == 0);
    CHECK(load_meta_ontology_file(out).templates.size() == 8);

    r = cli("tune --log " + log + " show --session s1");
    CHECK(r.status == 0);
    const Json shown = parse_json(r.out);
    CHECK(shown["status"] == "finalized");
    CHECK(shown["iterations"].size() == 1);
    CHECK(shown["iterations"][0]["engineer_notes"] == "first");

    r = cli("tune --log " + log + " abandon --session s1");
    CHECK(r.status == 1);
    CHECK(r.err.find("SessionClosed") != std::string::npos);
    CHECK(cli("tune --log " + log + " show --session s7").status == 1);
    CHECK(parse_json(cli("tune --log " + log + " show").out).size() == 1);
  }

  TEST_CASE("serve answers until interrupted") {
    testing::TempDir dir;
    const std::string out_file = dir.file("serve.out");
    const std::string config = testing::fixture("config.json");
    const pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      const int fd = open(out_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      dup2(fd, STDOUT_FILENO);
      dup2(fd, STDERR_FILENO);
      execl(ONTO_CLI_PATH, ONTO_CLI_PATH, "serve", "--config", config.c_str(), "--port", "0",
            static_cast<char*>(nullptr));
      _exit(127);
    }

    std::string banner;
    for (int i = 0; i < 500 && banner.find('\n') == std::string::npos; ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      std::ifstream in(out_file);
      banner.assign(std::istreambuf_iterator<char>(in), {});
    }
    INFO(banner);
    const bool listening = banner.starts_with("listening on http://127.0.0.1:");
    CHECK(listening);
    if (listening) {
      const int port = std::stoi(banner.substr(banner.rfind(':') + 1));
      httplib::Client client("127.0.0.1", port);
      const auto r = client.Get("/v1/descriptor");
      REQUIRE(r);
      CHECK(r->status == 200);
      CHECK(parse_json(r->body).contains("description_machine"));
    }

    kill(pid, SIGTERM);
    int status = 0;
    pid_t done = 0;
    for (int i = 0; i < 500 && done == 0; ++i) {
      done = waitpid(pid, &status, WNOHANG);
      if (done == 0) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (done == 0) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
    }
    CHECK(done == pid);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
  }
}
