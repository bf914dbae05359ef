#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace miwb::gateway {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

struct ChatMessage {
  Role role{Role::User};
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

// Throws Error(InvalidConversation) unless: the list is non-empty, a system
// message appears at most once and only first, user/assistant messages are
// non-blank, strictly alternate starting with user, and the last is user.
void validate_conversation(const std::vector<ChatMessage>& messages);

enum class EndpointMode {
  Http,    // OpenAI-compatible POST {base_url}/chat/completions
  Echo,    // offline stub: replies with the last user message
  Replay,  // offline stub: canned replies keyed by request hash
};

struct BackoffPolicy {
  double base_seconds{1.0};
  double factor{2.0};
  double cap_seconds{30.0};
};

struct EndpointConfig {
  std::string base_url;
  std::string model;
  // Name of the environment variable holding the bearer token. Empty means
  // the endpoint takes no auth. The token itself is never stored.
  std::string auth_env;
  double timeout_seconds{60.0};
  int max_retries{3};
  int max_parallel{4};
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  EndpointMode mode{EndpointMode::Http};
  std::filesystem::path replay_file;
  BackoffPolicy backoff;
};

// Throws Error(InvalidConfig).
void validate(const EndpointConfig& c);
EndpointConfig endpoint_from_json(const nlohmann::json& j);
EndpointConfig load_endpoint(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const EndpointConfig& c);

// Canonical request body: {model, messages, temperature?, max_tokens?}.
std::string request_body(const EndpointConfig& c, const std::vector<ChatMessage>& messages);

// Lowercase hex SHA-256 of a request body.
std::string request_hash(std::string_view body);

struct TransportReply {
  int status{0};  // 0: no HTTP response (connect failure, timeout)
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportReply post(const std::string& body, const std::string& bearer_token) = 0;
};

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(EndpointConfig config);
  TransportReply post(const std::string& body, const std::string& bearer_token) override;

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

class EchoTransport final : public Transport {
 public:
  TransportReply post(const std::string& body, const std::string& bearer_token) override;
};

// Replay file: JSON Lines of {"request_hash": ..., "content": ...}, or
// {"request_hash": ..., "status": 503} to replay a failure. Requests without
// an entry get status 404.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(const std::filesystem::path& file);
  TransportReply post(const std::string& body, const std::string& bearer_token) override;

 private:
  struct Entry {
    int status{200};
    std::string content;
  };
  std::map<std::string, Entry> entries_;
};

std::shared_ptr<Transport> make_transport(const EndpointConfig& c);

// Assistant reply body in the chat-completions shape.
std::string completion_body(std::string_view content);

// Serialized JSON Lines sink. One line per attempt.
class AuditLog {
 public:
  AuditLog() = default;  // in-memory only
  explicit AuditLog(std::filesystem::path file);

  void write(const nlohmann::ordered_json& line);
  std::vector<std::string> lines() const;

 private:
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> file_;
  std::vector<std::string> lines_;
};

struct Usage {
  int prompt_tokens{0};
  int completion_tokens{0};
  int total_tokens{0};
};

struct ChatResult {
  std::string content;
  Usage usage;
  int attempts{0};
};

struct JobResult {
  bool ok{false};
  ChatResult result;
  std::string error;
  int last_status{0};
  int attempts{0};
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

class Client {
 public:
  explicit Client(EndpointConfig config, std::shared_ptr<Transport> transport = nullptr,
                  std::shared_ptr<AuditLog> audit = nullptr);

  // Replaces the wait between retries (tests use a recording no-op).
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  // Retries transport failures, 429 and 5xx with full-jitter exponential
  // backoff, at most max_retries times. Safe to call concurrently; at most
  // max_parallel requests are in flight per client.
  // Throws Error(InvalidConversation), Error(AuthMissing), EndpointError.
  ChatResult chat(const std::vector<ChatMessage>& messages, std::string_view job_id = "chat");

  // Results in job order. Per-job failures are captured in JobResult.
  // Throws Error(InvalidArgument) on an empty job list.
  std::vector<JobResult> run_batch(const std::vector<std::vector<ChatMessage>>& jobs,
                                   std::string_view job_prefix = "job");

  const EndpointConfig& config() const { return config_; }

  // Upper bound of the backoff before retry number `retry` (1-based), before jitter.
  double backoff_ceiling(int retry) const;

 private:
  std::string resolve_token() const;
  double jittered_backoff(int retry);

  EndpointConfig config_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<AuditLog> audit_;
  Sleeper sleeper_;
  std::unique_ptr<std::counting_semaphore<1024>> admission_;
  std::mutex jitter_mu_;
  std::mt19937_64 jitter_rng_;
};

}  // namespace miwb::gateway
