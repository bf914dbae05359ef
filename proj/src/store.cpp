#include "miwb/store.hpp"

#include <chrono>
#include <ctime>
#include <set>
#include <sstream>

#include "miwb/error.hpp"
#include "miwb/io.hpp"
#include "miwb/text.hpp"

namespace miwb::store {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

JsonlStore::JsonlStore(fs::path path) : path_(std::move(path)) {}

void JsonlStore::append(const ojson& record) {
  std::lock_guard lock(mu_);
  std::string content;
  std::error_code ec;
  if (fs::exists(path_, ec)) {
    try {
      content = io::read_file(path_);
    } catch (const Error& e) {
      throw Error(Errc::StorageFailure, e.what());
    }
    // Keep a torn tail on its own line so it cannot swallow the new record.
    if (!content.empty() && content.back() != '\n') content += '\n';
  }
  content += record.dump();
  content += '\n';
  try {
    io::write_file_atomic(path_, content);
  } catch (const Error& e) {
    throw Error(Errc::StorageFailure, e.what());
  }
}

LoadResult JsonlStore::load() const {
  std::lock_guard lock(mu_);
  LoadResult r;
  std::error_code ec;
  if (!fs::exists(path_, ec)) return r;
  std::string content;
  try {
    content = io::read_file(path_);
  } catch (const Error& e) {
    throw Error(Errc::StorageFailure, e.what());
  }
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    try {
      r.records.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      ++r.corrupt_lines;
    }
  }
  return r;
}

std::string_view to_string(Motivation m) {
  switch (m) {
    case Motivation::Low: return "low";
    case Motivation::Medium: return "medium";
    case Motivation::High: return "high";
  }
  return "medium";
}

std::optional<Motivation> parse_motivation(std::string_view s) {
  if (s == "low") return Motivation::Low;
  if (s == "medium") return Motivation::Medium;
  if (s == "high") return Motivation::High;
  return std::nullopt;
}

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Open: return "open";
    case SessionStatus::Completed: return "completed";
    case SessionStatus::Abandoned: return "abandoned";
  }
  return "open";
}

std::optional<SessionStatus> parse_session_status(std::string_view s) {
  if (s == "open") return SessionStatus::Open;
  if (s == "completed") return SessionStatus::Completed;
  if (s == "abandoned") return SessionStatus::Abandoned;
  return std::nullopt;
}

ojson to_json(const SessionRecord& s) {
  ojson j;
  j["session_id"] = s.session_id;
  j["persona"] = {{"topic", s.topic},
                  {"baseline_motivation", to_string(s.baseline_motivation)},
                  {"motivation_assignment", s.motivation_seeded ? "seeded" : "given"}};
  j["model_ref"] = s.model_ref;
  ojson msgs = ojson::array();
  for (const auto& m : s.messages) {
    msgs.push_back({{"role", gateway::to_string(m.role)}, {"content", m.content}});
  }
  j["messages"] = msgs;
  j["status"] = to_string(s.status);
  j["created_at"] = s.created_at;
  j["updated_at"] = s.updated_at;
  return j;
}

SessionRecord session_from_json(const json& j) {
  SessionRecord s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    const json& p = j.at("persona");
    s.topic = p.at("topic").get<std::string>();
    auto m = parse_motivation(p.at("baseline_motivation").get<std::string>());
    if (!m) throw Error(Errc::MalformedRecord, "unknown baseline_motivation");
    s.baseline_motivation = *m;
    s.motivation_seeded = p.value("motivation_assignment", "given") == "seeded";
    s.model_ref = j.at("model_ref").get<std::string>();
    for (const auto& msg : j.at("messages")) {
      auto role = gateway::parse_role(msg.at("role").get<std::string>());
      if (!role) throw Error(Errc::MalformedRecord, "unknown message role");
      s.messages.push_back({*role, msg.at("content").get<std::string>()});
    }
    auto st = parse_session_status(j.at("status").get<std::string>());
    if (!st) throw Error(Errc::MalformedRecord, "unknown session status");
    s.status = *st;
    s.created_at = j.value("created_at", "");
    s.updated_at = j.value("updated_at", "");
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedRecord, std::string("session record: ") + e.what());
  }
  return s;
}

void validate(const SessionRecord& s) {
  using gateway::Role;
  if (s.messages.empty() || s.messages.front().role != Role::System) {
    throw Error(Errc::InvalidConversation, "session must start with the system instruction");
  }
  for (std::size_t i = 1; i < s.messages.size(); ++i) {
    const Role want = i % 2 == 1 ? Role::User : Role::Assistant;
    if (s.messages[i].role != want) {
      throw Error(Errc::InvalidConversation,
                  "session message " + std::to_string(i) + " breaks user/assistant alternation");
    }
  }
}

std::vector<miti::MitiAnnotation> AnnotationState::latest_list() const {
  std::vector<miti::MitiAnnotation> out;
  out.reserve(latest.size());
  for (const auto& [key, a] : latest) out.push_back(a);
  return out;
}

DataRoot::DataRoot(fs::path root)
    : root_(std::move(root)),
      sessions_(root_ / "sessions.jsonl"),
      annotations_(root_ / "annotations.jsonl"),
      queue_(root_ / "queue.jsonl") {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(Errc::StorageFailure, "cannot create data root '" + root_.string() + "'");
}

std::vector<SessionRecord> DataRoot::load_sessions(std::size_t* corrupt) const {
  auto loaded = sessions_.load();
  std::vector<SessionRecord> out;
  std::map<std::string, std::size_t> index;
  std::size_t bad = loaded.corrupt_lines;
  for (const auto& r : loaded.records) {
    try {
      SessionRecord s = session_from_json(r);
      if (auto it = index.find(s.session_id); it != index.end()) {
        out[it->second] = std::move(s);
      } else {
        index.emplace(s.session_id, out.size());
        out.push_back(std::move(s));
      }
    } catch (const Error&) {
      ++bad;
    }
  }
  if (corrupt) *corrupt = bad;
  return out;
}

AnnotationState DataRoot::load_annotations() const {
  auto loaded = annotations_.load();
  AnnotationState st;
  st.corrupt_lines = loaded.corrupt_lines;
  for (const auto& r : loaded.records) {
    try {
      miti::MitiAnnotation a = miti::annotation_from_json(r);
      miti::validate(a);
      st.latest[{a.blind_id, a.coder_id}] = a;
      st.history.push_back(std::move(a));
    } catch (const Error&) {
      ++st.corrupt_lines;
    }
  }
  return st;
}

std::vector<miti::BlindEntry> DataRoot::load_queue(std::size_t* corrupt) const {
  auto loaded = queue_.load();
  std::vector<miti::BlindEntry> out;
  std::set<std::string> seen;
  std::size_t bad = loaded.corrupt_lines;
  for (const auto& r : loaded.records) {
    try {
      auto e = miti::blind_entry_from_json(r);
      if (seen.insert(e.blind_id).second) out.push_back(std::move(e));
    } catch (const Error&) {
      ++bad;
    }
  }
  if (corrupt) *corrupt = bad;
  return out;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

}  // namespace miwb::store
