#include "miwb/gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>


#include <httplib.h>

#include "miwb/error.hpp"
#include "miwb/io.hpp"
#include "miwb/text.hpp"

namespace miwb::gateway {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System:
      return "system";
    case Role::User:
      return "user";
    case Role::Assistant:
      return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  return std::nullopt;
}

void validate_conversation(const std::vector<ChatMessage>& messages) {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConversation, what); };
  if (messages.empty()) fail("conversation is empty");
  std::size_t i = 0;
  if (messages[0].role == Role::System) i = 1;
  if (i == messages.size()) fail("conversation holds only a system message");
  for (std::size_t k = i; k < messages.size(); ++k) {
    const Role expected = (k - i) % 2 == 0 ? Role::User : Role::Assistant;
    if (messages[k].role == Role::System) fail("system message at position " + std::to_string(k));
    if (messages[k].role != expected) {
      fail("message " + std::to_string(k) + " should be " + std::string(to_string(expected)) +
           ", got " + std::string(to_string(messages[k].role)));
    }
    if (text::trim(messages[k].content).empty()) {
      fail("message " + std::to_string(k) + " has empty content");
    }
  }
  if (messages.back().role != Role::User) fail("conversation must end with a user message");
}

void validate(const EndpointConfig& c) {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (c.max_retries < 0) fail("max_retries must be >= 0");
  if (c.max_parallel < 1 || c.max_parallel > 1024) fail("max_parallel must be in [1, 1024]");
  if (!(c.timeout_seconds > 0)) fail("timeout_seconds must be > 0");
  if (c.mode == EndpointMode::Http && c.base_url.empty()) fail("base_url is required");
  if (c.mode == EndpointMode::Replay && c.replay_file.empty()) fail("replay_file is required");
  if (c.backoff.base_seconds < 0 || c.backoff.factor < 1 || c.backoff.cap_seconds < 0) {
    fail("invalid backoff policy");
  }
}

EndpointConfig endpoint_from_json(const json& j) {
  EndpointConfig c;
  try {
    c.base_url = j.value("base_url", std::string{});
    c.model = j.value("model", std::string{});
    c.auth_env = j.value("auth_env", std::string{});
    c.timeout_seconds = j.value("timeout_seconds", 60.0);
    c.max_retries = j.value("max_retries", 3);
    c.max_parallel = j.value("max_parallel", 4);
    if (j.contains("temperature") && !j["temperature"].is_null()) {
      c.temperature = j["temperature"].get<double>();
    }
    if (j.contains("max_tokens") && !j["max_tokens"].is_null()) {
      c.max_tokens = j["max_tokens"].get<int>();
    }
    const std::string mode = j.value("mode", std::string("http"));
    if (mode == "http") {
      c.mode = EndpointMode::Http;
    } else if (mode == "echo") {
      c.mode = EndpointMode::Echo;
    } else if (mode == "replay") {
      c.mode = EndpointMode::Replay;
    } else {
      throw Error(Errc::InvalidConfig, "unknown endpoint mode '" + mode + "'");
    }
    c.replay_file = j.value("replay_file", std::string{});
    if (auto b = j.find("backoff"); b != j.end()) {
      c.backoff.base_seconds = b->value("base_seconds", 1.0);
      c.backoff.factor = b->value("factor", 2.0);
      c.backoff.cap_seconds = b->value("cap_seconds", 30.0);
    }
    for (const char* forbidden : {"api_key", "token", "authorization"}) {
      if (j.contains(forbidden)) {
        throw Error(Errc::InvalidConfig, std::string("credentials must come from auth_env, not '") +
                                             forbidden + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("endpoint config: ") + e.what());
  }
  validate(c);
  return c;
}

EndpointConfig load_endpoint(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidConfig, "endpoint config '" + path.string() + "': " + e.what());
  }
  EndpointConfig c = endpoint_from_json(j);
  if (c.mode == EndpointMode::Replay && c.replay_file.is_relative()) {
    c.replay_file = path.parent_path() / c.replay_file;
  }
  return c;
}

ojson to_json(const EndpointConfig& c) {
  ojson j;
  j["base_url"] = c.base_url;
  j["model"] = c.model;
  j["auth_env"] = c.auth_env;
  j["timeout_seconds"] = c.timeout_seconds;
  j["max_retries"] = c.max_retries;
  j["max_parallel"] = c.max_parallel;
  if (c.temperature) j["temperature"] = *c.temperature;
  if (c.max_tokens) j["max_tokens"] = *c.max_tokens;
  j["mode"] = c.mode == EndpointMode::Http ? "http" : c.mode == EndpointMode::Echo ? "echo" : "replay";
  if (!c.replay_file.empty()) j["replay_file"] = c.replay_file.string();
  j["backoff"] = {{"base_seconds", c.backoff.base_seconds},
                  {"factor", c.backoff.factor},
                  {"cap_seconds", c.backoff.cap_seconds}};
  return j;
}

std::string request_body(const EndpointConfig& c, const std::vector<ChatMessage>& messages) {
  ojson j;
  j["model"] = c.model;
  j["messages"] = ojson::array();
  for (const auto& m : messages) {
    ojson mj;
    mj["role"] = to_string(m.role);
    mj["content"] = m.content;
    j["messages"].push_back(std::move(mj));
  }
  if (c.temperature) j["temperature"] = *c.temperature;
  if (c.max_tokens) j["max_tokens"] = *c.max_tokens;
  return j.dump();
}

std::string request_hash(std::string_view body) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(body.data(), body.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::InvalidArgument, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string completion_body(std::string_view content) {
  ojson j;
  j["object"] = "chat.completion";
  ojson choice;
  choice["index"] = 0;
  choice["message"] = {{"role", "assistant"}, {"content", std::string(content)}};
  choice["finish_reason"] = "stop";
  j["choices"] = ojson::array({choice});
  return j.dump();
}

HttpTransport::HttpTransport(EndpointConfig config) : config_(std::move(config)) {
  std::string url = config_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::InvalidConfig, "base_url needs a scheme: '" + config_.base_url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = (path_start == std::string::npos ? std::string{} : url.substr(path_start)) +
          "/chat/completions";
}

TransportReply HttpTransport::post(const std::string& body, const std::string& bearer_token) {
  httplib::Client cli(scheme_host_port_);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
  auto res = cli.Post(path_, headers, body, "application/json");
  TransportReply reply;
  if (!res) {
    reply.error = httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

TransportReply EchoTransport::post(const std::string& body, const std::string&) {
  const json req = json::parse(body);
  std::string last;
  for (const auto& m : req.at("messages")) {
    if (m.at("role") == "user") last = m.at("content").get<std::string>();
  }
  return {200, completion_body(last), {}};
}

ReplayTransport::ReplayTransport(const std::filesystem::path& file) {
  std::istringstream in(io::read_file(file));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      Entry e;
      e.status = j.value("status", 200);
      e.content = j.value("content", std::string{});
      entries_[j.at("request_hash").get<std::string>()] = std::move(e);
    } catch (const json::exception& ex) {
      throw Error(Errc::InvalidConfig,
                  "replay file line " + std::to_string(n) + ": " + ex.what());
    }
  }
}

TransportReply ReplayTransport::post(const std::string& body, const std::string&) {
  auto it = entries_.find(request_hash(body));
  if (it == entries_.end()) return {404, R"({"error":"no replay entry"})", {}};
  if (it->second.status != 200) return {it->second.status, R"({"error":"replayed failure"})", {}};
  return {200, completion_body(it->second.content), {}};
}

std::shared_ptr<Transport> make_transport(const EndpointConfig& c) {
  switch (c.mode) {
    case EndpointMode::Http:
      return std::make_shared<HttpTransport>(c);
    case EndpointMode::Echo:
      return std::make_shared<EchoTransport>();
    case EndpointMode::Replay:
      return std::make_shared<ReplayTransport>(c.replay_file);
  }
  return nullptr;
}

AuditLog::AuditLog(std::filesystem::path file) : file_(std::move(file)) {
  if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
}

void AuditLog::write(const ojson& line) {
  const std::string s = line.dump();
  std::lock_guard lock(mu_);
  lines_.push_back(s);
  if (file_) {
    std::ofstream out(*file_, std::ios::binary | std::ios::app);
    out << s << '\n';
  }
}

std::vector<std::string> AuditLog::lines() const {
  std::lock_guard lock(mu_);
  return lines_;
}

Client::Client(EndpointConfig config, std::shared_ptr<Transport> transport,
               std::shared_ptr<AuditLog> audit)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      audit_(std::move(audit)),
      jitter_rng_(std::random_device{}()) {
  validate(config_);
  if (!transport_) transport_ = make_transport(config_);
  if (!audit_) audit_ = std::make_shared<AuditLog>();
  admission_ = std::make_unique<std::counting_semaphore<1024>>(config_.max_parallel);
  sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
}

std::string Client::resolve_token() const {
  if (config_.auth_env.empty()) return {};
  const char* v = std::getenv(config_.auth_env.c_str());
  if (v == nullptr || *v == '\0') {
    throw Error(Errc::AuthMissing, "environment variable '" + config_.auth_env + "' is not set");
  }
  return v;
}

double Client::backoff_ceiling(int retry) const {
  const double raw = config_.backoff.base_seconds * std::pow(config_.backoff.factor, retry - 1);
  return std::min(config_.backoff.cap_seconds, raw);
}

double Client::jittered_backoff(int retry) {
  std::lock_guard lock(jitter_mu_);
  std::uniform_real_distribution<double> dist(0.0, backoff_ceiling(retry));
  return dist(jitter_rng_);
}

namespace {

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

ChatResult Client::chat(const std::vector<ChatMessage>& messages, std::string_view job_id) {
  validate_conversation(messages);
  const std::string token = resolve_token();
  const std::string body = request_body(config_, messages);
  const std::string hash = request_hash(body);

  const int max_attempts = config_.max_retries + 1;
  int last_status = 0;
  int attempts_made = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    attempts_made = attempt;
    TransportReply reply;
    const auto t0 = std::chrono::steady_clock::now();
    admission_->acquire();
    try {
      reply = transport_->post(body, token);
    } catch (const std::exception& e) {
      reply = TransportReply{0, {}, e.what()};
    }
    admission_->release();
    const double latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    last_status = reply.status;
    last_error = reply.error.empty() ? reply.body.substr(0, 200) : reply.error;

    ojson line;
    line["job_id"] = std::string(job_id);
    line["attempt"] = attempt;
    line["request_hash"] = hash;
    line["model"] = config_.model;
    line["status"] = reply.status;
    line["latency_ms"] = std::round(latency_ms * 1000.0) / 1000.0;

    if (reply.status == 200) {
      ChatResult result;
      result.attempts = attempt;
      try {
        const json j = json::parse(reply.body);
        result.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
          result.usage.prompt_tokens = u->value("prompt_tokens", 0);
          result.usage.completion_tokens = u->value("completion_tokens", 0);
          result.usage.total_tokens = u->value("total_tokens", 0);
        }
      } catch (const json::exception& e) {
        line["outcome"] = "malformed_response";
        audit_->write(line);
        throw EndpointError(std::string("malformed completion body: ") + e.what(), 200, attempt);
      }
      line["outcome"] = "ok";
      audit_->write(line);
      return result;
    }

    const bool again = retryable(reply.status) && attempt < max_attempts;
    line["outcome"] = again ? "retry" : "failed";
    if (!reply.error.empty()) line["error"] = reply.error;
    audit_->write(line);
    if (!again) break;
    sleeper_(std::chrono::duration<double>(jittered_backoff(attempt)));
  }
  throw EndpointError("endpoint failed with status " + std::to_string(last_status) + ": " +
                          last_error,
                      last_status, attempts_made);
}

std::vector<JobResult> Client::run_batch(const std::vector<std::vector<ChatMessage>>& jobs,
                                         std::string_view job_prefix) {
  if (jobs.empty()) throw Error(Errc::InvalidArgument, "run_batch needs at least one job");
  std::vector<JobResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      JobResult& r = results[i];
      try {
        r.result = chat(jobs[i], std::string(job_prefix) + "-" + std::to_string(i));
        r.ok = true;
        r.attempts = r.result.attempts;
        r.last_status = 200;
      } catch (const EndpointError& e) {
        r.error = e.what();
        r.last_status = e.last_status();
        r.attempts = e.attempts();
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  const std::size_t n_threads =
      std::min<std::size_t>(jobs.size(), static_cast<std::size_t>(config_.max_parallel));
  std::vector<std::jthread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  pool.clear();  // joins
  return results;
}

}  // namespace miwb::gateway
