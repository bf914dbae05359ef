#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "miwb/corpus.hpp"
#include "miwb/error.hpp"
#include "miwb/gateway.hpp"

namespace miwb::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path fixture(const std::string& name);
std::filesystem::path cli_path();

struct CommandResult {
  int exit_code{-1};
  std::string out;  // stdout
  std::string err;  // stderr
};

// Runs the CLI with the given arguments (no shell interpolation of args).
CommandResult run_cli(const std::vector<std::string>& args);

void write_text(const std::filesystem::path& path, const std::string& content);

// Client/counselor alternating dialogue from plain strings.
corpus::Dialogue make_dialogue(const std::string& id, const std::vector<std::string>& turns,
                               corpus::Language language = corpus::Language::Latin);

// Transport answering every request with a user-supplied function of the
// request body. Thread-safe as long as the function is.
class FnTransport final : public gateway::Transport {
 public:
  using Fn = std::function<gateway::TransportReply(const nlohmann::json& request)>;
  explicit FnTransport(Fn fn) : fn_(std::move(fn)) {}
  gateway::TransportReply post(const std::string& body, const std::string&) override {
    return fn_(nlohmann::json::parse(body));
  }

 private:
  Fn fn_;
};

// Client over FnTransport with no retry waits.
std::shared_ptr<gateway::Client> fn_client(FnTransport::Fn fn, int max_retries = 0,
                                           int max_parallel = 4);

// Last message content of a chat request.
std::string last_content(const nlohmann::json& request);

// Code of the miwb::Error thrown by f, or nullopt when nothing is thrown.
std::optional<Errc> code_of(const std::function<void()>& f);

}  // namespace miwb::test
