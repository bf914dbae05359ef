#include "miwb/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <random>
#include <set>

#include "miwb/error.hpp"
#include "miwb/io.hpp"
#include "miwb/metrics.hpp"
#include "miwb/random.hpp"
#include "miwb/rounds.hpp"
#include "miwb/text.hpp"

namespace miwb::service {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using store::SessionRecord;
using store::SessionStatus;

const std::vector<std::string>& starter_topics() {
  static const std::vector<std::string> topics = {
      "weight loss/diet management", "reducing mobile phone use", "improving insomnia",
      "increase exercise", "controlling advance consumption"};
  return topics;
}

ServiceConfig service_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "service config must be a JSON object");
  ServiceConfig c;
  try {
    if (!j.contains("data_root")) throw Error(Errc::InvalidConfig, "data_root is required");
    c.data_root = j.at("data_root").get<std::string>();
    if (c.data_root.is_relative()) c.data_root = base_dir / c.data_root;
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.seed = j.value("seed", c.seed);
    c.instruction = j.value("instruction", std::string{});
    const json models = j.value("models", json::object());
    for (const auto& [ref, v] : models.items()) {
      if (v.is_string()) {
        fs::path p = v.get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        c.models[ref] = gateway::load_endpoint(p);
      } else {
        auto ep = gateway::endpoint_from_json(v);
        if (ep.mode == gateway::EndpointMode::Replay && ep.replay_file.is_relative()) {
          ep.replay_file = base_dir / ep.replay_file;
        }
        c.models[ref] = ep;
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("service config: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw Error(Errc::InvalidConfig, "port out of range");
  if (c.models.empty()) throw Error(Errc::InvalidConfig, "at least one counselor model is required");
  return c;
}

ServiceConfig load_service_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidConfig, "service config '" + path.string() + "': " + e.what());
  }
  return service_config_from_json(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

namespace {

int http_status(Errc code) {
  switch (code) {
    case Errc::NotFound: return 404;
    case Errc::Conflict: return 409;
    case Errc::EndpointError: return 502;
    case Errc::StorageFailure:
    case Errc::WriteFailure:
    case Errc::AuthMissing:
      return 500;
    default: return 422;
  }
}

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  ojson body;
  body["error"] = errc_name(e.code());
  body["message"] = e.what();
  if (const auto* ep = dynamic_cast<const EndpointError*>(&e)) {
    body["attempts"] = ep->attempts();
    body["last_status"] = ep->last_status();
  }
  send_json(res, http_status(e.code()), body);
}

json parse_body(const httplib::Request& req) {
  if (text::trim(req.body).empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::InvalidArgument, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidArgument, std::string("request body is not JSON: ") + e.what());
  }
}

std::string string_field(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_string()) return {};
  return body[key].get<std::string>();
}

// Wraps a handler so library errors become JSON error responses.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
    }
  };
}

bool wants_stream(const httplib::Request& req, const json& body) {
  if (req.has_param("stream")) {
    const auto v = req.get_param_value("stream");
    return v == "1" || v == "true";
  }
  if (body.contains("stream") && body["stream"].is_boolean()) return body["stream"].get<bool>();
  return req.get_header_value("Accept").find("text/event-stream") != std::string::npos;
}

// Splits text into chunks of at most `n` codepoints.
std::vector<std::string> chunk_codepoints(const std::string& s, std::size_t n) {
  std::vector<std::string> out;
  std::string cur;
  std::size_t count = 0;
  for (char32_t cp : text::decode_utf8(s)) {
    text::append_utf8(cur, cp);
    if (++count == n) {
      out.push_back(std::move(cur));
      cur.clear();
      count = 0;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string sse_event(std::string_view name, const ojson& data) {
  return "event: " + std::string(name) + "\ndata: " + data.dump() + "\n\n";
}

corpus::Dialogue session_dialogue(const SessionRecord& s) {
  corpus::Dialogue d;
  d.id = s.session_id;
  d.source = s.model_ref;
  for (const auto& m : s.messages) {
    if (m.role == gateway::Role::User) d.turns.push_back({corpus::Speaker::Client, m.content});
    if (m.role == gateway::Role::Assistant) {
      d.turns.push_back({corpus::Speaker::Counselor, m.content});
    }
  }
  return d;
}

}  // namespace

Workbench::Workbench(ServiceConfig config,
                     std::map<std::string, std::shared_ptr<gateway::Client>> clients)
    : config_(std::move(config)),
      clients_(std::move(clients)),
      data_(config_.data_root),
      server_(std::make_unique<httplib::Server>()) {
  if (config_.instruction.empty()) config_.instruction = rounds::FixedInstruction().text();
  auto audit = std::make_shared<gateway::AuditLog>(data_.root() / "audit" / "gateway.jsonl");
  for (const auto& [ref, ep] : config_.models) {
    if (!clients_.contains(ref)) clients_[ref] = std::make_shared<gateway::Client>(ep, nullptr, audit);
  }
  if (clients_.empty()) throw Error(Errc::InvalidConfig, "no counselor models configured");

  for (auto& s : data_.load_sessions()) {
    sessions_[s.session_id] = s;
    ++next_ordinal_;
  }
  queue_ = data_.load_queue();
  annotations_ = data_.load_annotations();
  routes();
}

Workbench::~Workbench() { stop(); }

int Workbench::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p <= 0) throw Error(Errc::InvalidConfig, "cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(Errc::InvalidConfig, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void Workbench::listen() { server_->listen_after_bind(); }

void Workbench::wait_until_ready() { server_->wait_until_ready(); }

void Workbench::stop() {
  if (server_) server_->stop();
}

std::mutex& Workbench::session_mutex(const std::string& id) {
  std::lock_guard lock(state_mu_);
  auto& m = session_mu_[id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

SessionRecord Workbench::create_session(const json& body) {
  const std::string topic = text::trim(string_field(body, "topic"));
  if (topic.empty()) throw Error(Errc::InvalidArgument, "topic is required");
  const std::string model_ref = string_field(body, "model_ref");
  if (!clients_.contains(model_ref)) {
    throw Error(Errc::InvalidArgument, "unknown model_ref '" + model_ref + "'");
  }
  std::optional<store::Motivation> motivation;
  if (body.contains("motivation") && !body["motivation"].is_null()) {
    motivation = store::parse_motivation(string_field(body, "motivation"));
    if (!motivation) throw Error(Errc::InvalidArgument, "motivation must be low, medium or high");
  }

  std::lock_guard lock(state_mu_);
  const std::size_t ordinal = next_ordinal_;
  SessionRecord s;
  s.session_id = "session-" + std::to_string(ordinal);
  s.topic = topic;
  s.model_ref = model_ref;
  if (motivation) {
    s.baseline_motivation = *motivation;
  } else {
    // Seeded per ordinal so a level does not depend on request timing.
    SeededRng rng(config_.seed ^ (0x9E3779B97F4A7C15ULL * ordinal));
    s.baseline_motivation = static_cast<store::Motivation>(rng.below(3));
    s.motivation_seeded = true;
  }
  s.messages.push_back({gateway::Role::System, config_.instruction});
  s.created_at = s.updated_at = store::utc_now();
  data_.sessions().append(store::to_json(s));
  sessions_[s.session_id] = s;
  ++next_ordinal_;
  return s;
}

void Workbench::routes() {
  auto& svr = *server_;

  svr.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  svr.Get("/topics", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"topics", starter_topics()}});
  });

  svr.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 201, store::to_json(create_session(parse_body(req))));
           }));

  auto find_session = [this](const std::string& id) {
    std::lock_guard lock(state_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(Errc::NotFound, "unknown session '" + id + "'");
    return it->second;
  };

  svr.Get(R"(/sessions/([^/]+))",
          guarded([find_session](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, store::to_json(find_session(req.matches[1].str())));
          }));

  svr.Post(
      R"(/sessions/([^/]+)/messages)",
      guarded([this, find_session](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1].str();
        const json body = parse_body(req);
        find_session(id);  // 404 before anything else
        const std::string msg = text::trim(string_field(body, "text"));
        if (msg.empty()) throw Error(Errc::InvalidArgument, "text is required");

        std::lock_guard session_lock(session_mutex(id));
        SessionRecord s = find_session(id);
        if (s.status != SessionStatus::Open) {
          throw Error(Errc::Conflict, "session '" + id + "' is " + std::string(to_string(s.status)));
        }
        auto messages = s.messages;
        messages.push_back({gateway::Role::User, msg});
        // Nothing is stored unless the counselor replies.
        const auto reply = clients_.at(s.model_ref)->chat(messages, "session-" + id);
        messages.push_back({gateway::Role::Assistant, reply.content});
        s.messages = std::move(messages);
        s.updated_at = store::utc_now();
        store::validate(s);
        data_.sessions().append(store::to_json(s));
        {
          std::lock_guard lock(state_mu_);
          sessions_[id] = s;
        }

        if (!wants_stream(req, body)) {
          send_json(res, 200, {{"reply", reply.content}, {"session", store::to_json(s)}});
          return;
        }
        auto events = std::make_shared<std::vector<std::string>>();
        for (auto& part : chunk_codepoints(reply.content, 16)) {
          events->push_back(sse_event("delta", {{"text", part}}));
        }
        events->push_back(sse_event("done", {{"session_id", id},
                                             {"message_count", s.messages.size()},
                                             {"reply", reply.content}}));
        res.status = 200;
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [events](std::size_t, httplib::DataSink& sink) {
              for (const auto& e : *events) {
                if (!sink.write(e.data(), e.size())) return false;
              }
              sink.done();
              return true;
            });
      }));

  svr.Post(
      R"(/sessions/([^/]+)/complete)",
      guarded([this, find_session](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1].str();
        find_session(id);
        std::lock_guard session_lock(session_mutex(id));
        SessionRecord s = find_session(id);
        if (s.status != SessionStatus::Open) {
          throw Error(Errc::Conflict, "session '" + id + "' is already " +
                                          std::string(to_string(s.status)));
        }
        const corpus::Dialogue d = session_dialogue(s);
        if (d.round_count() == 0) {
          throw Error(Errc::NoCompleteRound, "session '" + id + "' has no complete round");
        }

        miti::BlindEntry entry;
        {
          std::lock_guard sealed_lock(sealed_mu_);
          miti::SealedMap sealed;
          if (fs::exists(data_.sealed_path())) sealed = miti::load_sealed(data_.sealed_path());
          std::random_device rd;
          SeededRng rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
          do {
            entry.blind_id = rng.hex_token(8);
          } while (sealed.contains(entry.blind_id));
          entry.turns = miti::coding_turns(d);
          sealed[entry.blind_id] = {s.model_ref, s.session_id};
          try {
            miti::write_sealed(data_.sealed_path(), sealed);
          } catch (const Error& e) {
            throw Error(Errc::StorageFailure, e.what());
          }
        }
        data_.queue().append(miti::to_json(entry));
        s.status = SessionStatus::Completed;
        s.updated_at = store::utc_now();
        data_.sessions().append(store::to_json(s));
        {
          std::lock_guard lock(state_mu_);
          queue_.push_back(entry);
          sessions_[id] = s;
        }
        // The blind id is deliberately not returned to the session owner.
        send_json(res, 200, store::to_json(s));
      }));

  svr.Get("/coding/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string coder = text::trim(req.get_param_value("coder"));
            if (coder.empty()) throw Error(Errc::InvalidArgument, "coder query parameter is required");
            std::lock_guard lock(state_mu_);
            for (const auto& e : queue_) {
              if (!annotations_.latest.contains({e.blind_id, coder})) {
                send_json(res, 200, miti::to_json(e));
                return;
              }
            }
            res.status = 204;
          }));

  svr.Post(R"(/coding/([^/]+))",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             const std::string blind_id = req.matches[1].str();
             {
               std::lock_guard lock(state_mu_);
               const bool known = std::any_of(queue_.begin(), queue_.end(),
                                              [&](const auto& e) { return e.blind_id == blind_id; });
               if (!known) throw Error(Errc::NotFound, "unknown blind_id '" + blind_id + "'");
             }
             json body = parse_body(req);
             if (body.contains("blind_id") && body["blind_id"] != blind_id) {
               throw Error(Errc::InvalidAnnotation, "blind_id in body does not match the path");
             }
             body["blind_id"] = blind_id;
             miti::MitiAnnotation a = miti::annotation_from_json(body);
             a.timestamp = store::utc_now();
             miti::validate(a);
             const miti::MitiSummary summary = miti::summarize(a);
             {
               std::lock_guard lock(state_mu_);
               data_.annotations().append(miti::to_json(a));
               annotations_.latest[{a.blind_id, a.coder_id}] = a;
               annotations_.history.push_back(a);
             }
             send_json(res, 201, {{"blind_id", a.blind_id},
                                  {"coder_id", a.coder_id},
                                  {"counts", miti::to_json(a)["counts"]},
                                  {"summary", miti::to_json(summary)}});
           }));

  svr.Get("/reports/miti", guarded([this](const httplib::Request& req, httplib::Response& res) {
            miti::RatioMode mode = miti::RatioMode::Macro;
            if (req.has_param("mode")) {
              const auto m = req.get_param_value("mode");
              if (m == "pooled") mode = miti::RatioMode::Pooled;
              else if (m != "macro") throw Error(Errc::InvalidArgument, "mode must be macro or pooled");
            }
            std::vector<miti::MitiAnnotation> annotations;
            {
              std::lock_guard lock(state_mu_);
              annotations = annotations_.latest_list();
            }
            miti::SealedMap sealed;
            {
              std::lock_guard sealed_lock(sealed_mu_);
              if (fs::exists(data_.sealed_path())) sealed = miti::load_sealed(data_.sealed_path());
            }
            const auto reports = miti::unblind_and_aggregate(annotations, sealed, mode);
            ojson body;
            body["ratio_mode"] = mode == miti::RatioMode::Macro ? "macro" : "pooled";
            body["n_annotations"] = annotations.size();
            ojson groups = ojson::array();
            for (const auto& r : reports) groups.push_back(miti::to_json(r));
            body["groups"] = groups;
            if (reports.size() >= 2) {
              const auto table = miti::compare_groups(reports);
              body["comparison"] = miti::to_json(table);
              body["text"] = miti::to_text(table);
            } else {
              body["comparison"] = nullptr;
              body["text"] = "";
            }
            send_json(res, 200, body);
          }));

  svr.Get("/reports/auto", guarded([this](const httplib::Request&, httplib::Response& res) {
            ojson reports = ojson::array();
            std::size_t unreadable = 0;
            const fs::path dir = data_.auto_reports_dir();
            std::vector<fs::path> files;
            if (fs::is_directory(dir)) {
              for (const auto& e : fs::directory_iterator(dir)) {
                if (e.path().extension() == ".json") files.push_back(e.path());
              }
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
              try {
                reports.push_back({{"name", f.stem().string()},
                                   {"report", ojson::parse(io::read_file(f))}});
              } catch (const std::exception&) {
                ++unreadable;
              }
            }
            send_json(res, 200, {{"reports", reports}, {"unreadable", unreadable}});
          }));
}

}  // namespace miwb::service
