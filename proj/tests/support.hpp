#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ontoprompt/json_util.hpp"
#include "ontoprompt/llm_backend.hpp"

namespace testing {

inline std::string fixture(const std::string& name) {
  return std::string(ONTO_FIXTURE_DIR) + "/" + name;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ontoprompt-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Backend answering through a callback; records every prompt it sees.
class FunctionBackend : public ontoprompt::LlmBackend {
 public:
  using Fn = std::function<std::string(const std::vector<ontoprompt::ChatMessage>&,
                                       const ontoprompt::CompletionParams&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}

 protected:
  std::string do_complete(const std::vector<ontoprompt::ChatMessage>& messages,
                          const ontoprompt::CompletionParams& params) override {
    return fn_(messages, params);
  }

 private:
  Fn fn_;
};

// Seeded generator helpers for the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(integer(0, static_cast<int>(v.size()) - 1))];
  }

  // Mixed-script word, sometimes with characters JSON must escape.
  std::string word(int min_len = 1, int max_len = 8) {
    static const std::vector<std::string> kAlphabet{
        "a", "b", "c", "d", "e", "k", "m", "o", "r", "s", "t", "z", "A", "Q",
        "а", "б", "в", "г", "ґ", "є", "і", "ї", "ж", "ф", "р", "м", "Ф", "Р", "М",
        "é", "ß", "9", "0", "-", "_", " ", "\"", "\\", "/", "\t", "\n", "😀"};
    std::string out;
    const int n = integer(min_len, max_len);
    for (int i = 0; i < n; ++i) out += pick(kAlphabet);
    return out;
  }

  ontoprompt::Json scalar() {
    switch (integer(0, 5)) {
      case 0:
        return word();
      case 1:
        return integer(-1000, 1000);
      case 2:
        return real(-10.0, 10.0);
      case 3:
        return coin();
      case 4:
        return nullptr;
      default:
        return word(0, 3);
    }
  }

  ontoprompt::Json value(int depth = 0) {
    const int kind = depth >= 3 ? 0 : integer(0, 3);
    if (kind <= 1) return scalar();
    if (kind == 2) {
      ontoprompt::Json arr = ontoprompt::Json::array();
      const int n = integer(0, 4);
      for (int i = 0; i < n; ++i) arr.push_back(value(depth + 1));
      return arr;
    }
    ontoprompt::Json obj = ontoprompt::Json::object();
    const int n = integer(0, 4);
    for (int i = 0; i < n; ++i) obj[word()] = value(depth + 1);
    return obj;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace testing
